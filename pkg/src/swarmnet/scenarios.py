"""Scenario catalogs: which nodes run anomalous builds and the ground truth.

Labels mark both primary anomalies (the node itself runs a rogue build) and
secondary ones (authentic nodes fed by a rogue upstream build).
"""

from __future__ import annotations

from dataclasses import dataclass

from .swarm import Variant


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    n: int
    anomalous: tuple[int, ...]  # nodes running the anomalous build
    label: tuple[int, ...]      # 1 = primary or secondary anomaly
    device_salt: int = 0        # physical-twin runs resample vars on fresh streams

    def variant(self, node_id: int) -> Variant:
        return Variant.ANOMALOUS if node_id in self.anomalous else Variant.NORMAL

    def __post_init__(self):
        if len(self.label) != self.n:
            raise ValueError(
                f"{self.scenario_id}: label length {len(self.label)} != n {self.n}")


def _cat(n, rows):
    return {sid: ScenarioSpec(sid, n, tuple(anom), tuple(label), salt)
            for sid, anom, label, salt in rows}


SWARM1_SCENARIOS = _cat(4, [
    ("D1", (), (0, 0, 0, 0), 0),
    ("D2", (), (0, 0, 0, 0), 0),
    ("P1", (), (0, 0, 0, 0), 1),
    ("P2", (), (0, 0, 0, 0), 2),
    ("AN_0", (0,), (1, 0, 0, 0), 0),
    ("AN_1", (1,), (0, 1, 1, 1), 0),
    ("AN_2", (2,), (0, 0, 1, 1), 0),
    ("AN_3", (3,), (0, 0, 0, 1), 0),
    ("AN_12", (1, 2), (0, 1, 1, 1), 0),
    ("AN_23", (2, 3), (0, 0, 1, 1), 0),
    ("AN_13", (1, 3), (0, 1, 1, 1), 0),
    ("AN_123", (1, 2, 3), (0, 1, 1, 1), 0),
    ("AN_0123", (0, 1, 2, 3), (1, 1, 1, 1), 0),
])

SWARM2_SCENARIOS = _cat(6, [
    ("D1", (), (0, 0, 0, 0, 0, 0), 0),
    ("D2", (), (0, 0, 0, 0, 0, 0), 0),
    ("D3", (), (0, 0, 0, 0, 0, 0), 0),
    ("D4", (), (0, 0, 0, 0, 0, 0), 0),
    ("AN_0", (0,), (1, 0, 0, 0, 0, 0), 0),
    ("AN_1", (1,), (0, 1, 1, 1, 0, 0), 0),
    ("AN_2", (2,), (0, 0, 1, 1, 0, 0), 0),
    ("AN_3", (3,), (0, 0, 0, 1, 0, 0), 0),
    ("AN_4", (4,), (0, 0, 0, 0, 1, 1), 0),
    ("AN_5", (5,), (0, 0, 0, 0, 0, 1), 0),
])

_CATALOGS = {"swarm1": SWARM1_SCENARIOS, "swarm2": SWARM2_SCENARIOS}


class UnknownScenarioError(KeyError):
    pass


def catalog(swarm_id: str) -> dict[str, ScenarioSpec]:
    try:
        return _CATALOGS[swarm_id]
    except KeyError:
        raise UnknownScenarioError(f"no scenario catalog for swarm {swarm_id!r}") from None


def scenario(swarm_id: str, scenario_id: str) -> ScenarioSpec:
    cat = catalog(swarm_id)
    try:
        return cat[scenario_id]
    except KeyError:
        raise UnknownScenarioError(
            f"unknown scenario {scenario_id!r} for {swarm_id}; "
            f"known: {sorted(cat)}") from None


def swarm_label(swarm_id: str, scenario_id: str) -> tuple[int, ...]:
    """Ground-truth per-node anomaly labels for a catalog scenario."""
    return scenario(swarm_id, scenario_id).label
