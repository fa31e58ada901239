"""Trace synthesis and the line-oriented corpus file format.

One corpus = ``m`` synchronized ticks of a whole swarm under one scenario.
Within a tick, nodes step in topological order (sense -> process -> control),
so a payload emitted on edge ``i -> j`` lands in j's receive buffer on the
same tick.  Everything is a pure function of (swarm, scenario, m, seed).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .scenarios import ScenarioSpec
from .swarm import (SRAM_SIZE, EchoHistory, EmaCascade, FirmwareSpec,
                    SwarmGraph, Variant)

# Unrecorded ticks run first so rolling-history fields reach steady state
# before the first recorded sample (must cover the deepest echo history).
WARMUP_TICKS = 12


class StaleMarker:
    """Inbox marker: the sender produced no payload on this edge this tick."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "STALE"


STALE = StaleMarker()


class CorpusFormatError(ValueError):
    """Malformed corpus file or inconsistent trace grid."""


@dataclass(frozen=True)
class DataSectionTrace:
    """One node's data section at one tick."""

    node_id: int
    tick: int
    data: np.ndarray  # uint8, length d

    def __post_init__(self):
        if self.data.dtype != np.uint8:
            object.__setattr__(self, "data", self.data.astype(np.uint8))

    @property
    def d(self) -> int:
        return len(self.data)

    def hex(self) -> str:
        return self.data.tobytes().hex()


@dataclass(frozen=True)
class TraceCorpus:
    swarm_id: str
    scenario: ScenarioSpec
    m: int
    seed: int
    traces: tuple[tuple[DataSectionTrace, ...], ...]  # [tick][node]

    @property
    def n(self) -> int:
        return self.scenario.n

    def tick(self, t: int) -> tuple[DataSectionTrace, ...]:
        return self.traces[t]

    def node_series(self, node_id: int) -> list[DataSectionTrace]:
        return [row[node_id] for row in self.traces]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceCorpus):
            return NotImplemented
        if (self.swarm_id, self.scenario.scenario_id, self.m, self.seed) != (
                other.swarm_id, other.scenario.scenario_id, other.m, other.seed):
            return False
        return all(
            np.array_equal(a.data, b.data)
            for row_a, row_b in zip(self.traces, other.traces)
            for a, b in zip(row_a, row_b))


def step_firmware(spec: FirmwareSpec, inbox: dict[int, Union[bytes, StaleMarker]],
                  rng: np.random.Generator,
                  prev_trace: Optional[np.ndarray] = None,
                  ) -> tuple[DataSectionTrace, dict[int, bytes]]:
    """Advance one firmware build by one tick.

    ``inbox`` maps each inbound edge's source node to its payload, or to
    ``STALE`` when the sender emitted nothing; stale receive buffers keep
    their previous bytes (zeros on the first tick).
    """
    trace = np.zeros(spec.d, dtype=np.uint8)

    cursor = 0
    for reg in spec.regions:
        if reg.name.startswith("static"):
            trace[reg.slice()] = spec.static_bytes[cursor:cursor + reg.width]
            cursor += reg.width

    for src, name in spec.rx_map:
        reg = spec.region(name)
        payload = inbox.get(src, STALE)
        if payload is STALE:
            if prev_trace is not None:
                trace[reg.slice()] = prev_trace[reg.slice()]
            continue
        data = np.frombuffer(payload, dtype=np.uint8)
        if len(data) != reg.width:
            raise ValueError(
                f"node {spec.node_id}: payload on edge {src}->{spec.node_id} has "
                f"{len(data)} bytes, rx region {name} expects {reg.width}")
        trace[reg.slice()] = data

    for name, kind in spec.var_fields:
        trace[spec.region(name).slice()] = kind.sample(rng)

    for name, kind in spec.derived:
        reg = spec.region(name)
        src_bytes = trace[spec.region(kind.src).slice()]
        if isinstance(kind, EchoHistory):
            prev_block = prev_trace[reg.slice()] if prev_trace is not None else None
            trace[reg.slice()] = kind.compute(src_bytes, prev_block)
        else:
            trace[reg.slice()] = kind.compute(src_bytes)

    outbox = {dst: trace[spec.region(name).slice()].tobytes()
              for dst, name in spec.tx_map}
    return DataSectionTrace(spec.node_id, -1, trace), outbox


def _node_rngs(swarm: SwarmGraph, scenario: ScenarioSpec, seed: int) -> list[np.random.Generator]:
    salt = zlib.crc32(scenario.scenario_id.encode())
    return [
        np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((seed, salt, scenario.device_salt, node.node_id))))
        for node in swarm.nodes
    ]


def generate_corpus(swarm: SwarmGraph, scenario: ScenarioSpec, m: int, seed: int) -> TraceCorpus:
    """Run ``m`` synchronized ticks of the swarm and record every trace."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    order = swarm.topological_order()
    specs = {j: swarm.firmware(j, scenario.variant(j)) for j in range(swarm.n)}
    rngs = _node_rngs(swarm, scenario, seed)
    prev: dict[int, Optional[np.ndarray]] = {j: None for j in range(swarm.n)}

    rows = []
    for t in range(-WARMUP_TICKS, m):
        inboxes: dict[int, dict] = {j: {} for j in range(swarm.n)}
        row = {}
        for j in order:
            spec = specs[j]
            inbox = {src: inboxes[j].get(src, STALE) for src in swarm.in_neighbors(j)}
            trace, outbox = step_firmware(spec, inbox, rngs[j], prev[j])
            for dst, payload in outbox.items():
                inboxes[dst][j] = payload
            prev[j] = trace.data
            row[j] = trace
        if t >= 0:
            rows.append(tuple(
                DataSectionTrace(j, t, row[j].data) for j in range(swarm.n)))
    return TraceCorpus(swarm.swarm_id, scenario, m, seed, tuple(rows))


# --------------------------------------------------------------------------
# corpus file format
# --------------------------------------------------------------------------

_MAGIC = "SWARMNET-CORPUS"
_VERSION = "v1"


def save_corpus(corpus: TraceCorpus, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{_MAGIC} {_VERSION} {corpus.swarm_id} "
                 f"{corpus.scenario.scenario_id} {corpus.n} {corpus.m} {corpus.seed}\n")
        for row in corpus.traces:
            for trace in row:
                fh.write(f"{trace.tick} {trace.node_id} {trace.hex()}\n")


def load_corpus(path, scenario: Optional[ScenarioSpec] = None) -> TraceCorpus:
    """Load a corpus file; the scenario is resolved from the catalog unless given."""
    from . import scenarios as _scenarios

    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 7 or header[0] != _MAGIC or header[1] != _VERSION:
            raise CorpusFormatError(f"{path}: malformed corpus header")
        swarm_id, scenario_id = header[2], header[3]
        try:
            n, m, seed = int(header[4]), int(header[5]), int(header[6])
        except ValueError:
            raise CorpusFormatError(f"{path}: non-integer n/m/seed in header") from None
        if n < 1 or m < 1:
            raise CorpusFormatError(f"{path}: header requires n >= 1 and m >= 1")

        if scenario is None:
            try:
                scenario = _scenarios.scenario(swarm_id, scenario_id)
            except _scenarios.UnknownScenarioError:
                scenario = ScenarioSpec(scenario_id, n, (), (0,) * n)
        if scenario.n != n:
            raise CorpusFormatError(
                f"{path}: header n={n} does not match scenario n={scenario.n}")

        grid: list[list[Optional[DataSectionTrace]]] = [[None] * n for _ in range(m)]
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'tick node hex'")
            try:
                tick, node_id = int(parts[0]), int(parts[1])
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: non-integer tick/node") from None
            if not (0 <= tick < m and 0 <= node_id < n):
                raise CorpusFormatError(
                    f"{path}:{lineno}: tick/node ({tick}, {node_id}) outside "
                    f"{m}x{n} grid")
            hexstr = parts[2]
            if len(hexstr) % 2:
                raise CorpusFormatError(f"{path}:{lineno}: odd-length hex payload")
            try:
                data = bytes.fromhex(hexstr)
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: invalid hex payload") from None
            if len(data) > SRAM_SIZE:
                raise CorpusFormatError(
                    f"{path}:{lineno}: trace length {len(data)} exceeds SRAM size {SRAM_SIZE}")
            if grid[tick][node_id] is not None:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate trace ({tick}, {node_id})")
            grid[tick][node_id] = DataSectionTrace(
                node_id, tick, np.frombuffer(data, dtype=np.uint8).copy())

    for t, row in enumerate(grid):
        for j, trace in enumerate(row):
            if trace is None:
                raise CorpusFormatError(f"{path}: missing trace for tick {t}, node {j}")

    return TraceCorpus(swarm_id, scenario, m, seed,
                       tuple(tuple(row) for row in grid))
