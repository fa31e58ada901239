"""Swarm topologies and virtual firmware.

A swarm is a small directed graph of microcontroller nodes.  Each node runs a
firmware build that owns a fixed-size SRAM data section; the section is laid
out as a handful of disjoint byte regions:

* ``static``   -- constants baked into the build, identical on every tick and
                  on every device running the same build,
* ``var``      -- runtime variables resampled every tick (sensor readings,
                  broadcast bytes, random payloads of rogue builds),
* ``rx``       -- receive buffers, byte-for-byte copies of the most recent
                  payload delivered on each inbound edge,
* derived      -- values the firmware computes from vars/rx each tick
                  (processed signals, LED states, sync-byte echo history).

Two builds of the same node (normal vs anomalous) differ in their static
bytes, their section length ``d``, and possibly their sampling distributions,
which is what the downstream detector keys on.

The byte-level layout is a deliberately simple stand-in: real data sections
are compiler-dependent and are not modeled here beyond the abstract region
split (see README notes).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import yaml

SRAM_SIZE = 2048

# Build-level seed material: static bytes depend only on (swarm, node, variant)
# so that every corpus of a given build shares them (consistency property).
_BUILD_SEED = 0x5EC7_10AD


class NodeRole(Enum):
    SENSE = "sense"
    PROCESS = "process"
    CONTROL = "control"
    COMBINED = "combined"


class Variant(Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"


class SwarmConfigError(ValueError):
    """Invalid swarm description (duplicate ids, bad edges, region overlap...)."""


# --------------------------------------------------------------------------
# value generators for var fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBytes:
    """Bytes drawn uniformly from [lo, hi) each tick."""

    width: int
    lo: int = 0
    hi: int = 256

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(self.lo, self.hi, size=self.width, dtype=np.int64).astype(np.uint8)


@dataclass(frozen=True)
class TwoLevelBytes:
    """Bytes that independently take one of two values each tick (beacon
    toggles, bi-stable status words)."""

    width: int
    low: int
    high: int

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        picks = rng.integers(0, 2, size=self.width)
        return np.where(picks == 0, self.low, self.high).astype(np.uint8)


@dataclass(frozen=True)
class UniformWords:
    """Little-endian 16-bit words drawn uniformly from the full range."""

    count: int

    @property
    def width(self) -> int:
        return 2 * self.count

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        words = rng.integers(0, 1 << 16, size=self.count, dtype=np.int64)
        out = np.empty(self.width, dtype=np.uint8)
        out[0::2] = words & 0xFF
        out[1::2] = words >> 8
        return out


@dataclass(frozen=True)
class QuantizedFloats:
    """Per-tick float32 samples on an evenly spaced grid inside each range.

    value_i = lo_i + step_i * q with q ~ U{0 .. levels-1}; serialized as
    4-byte little-endian IEEE-754.
    """

    ranges: tuple[tuple[float, float], ...]
    levels: int = 16

    @property
    def width(self) -> int:
        return 4 * len(self.ranges)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        qs = rng.integers(0, self.levels, size=len(self.ranges))
        values = [lo + (hi - lo) * q / self.levels for (lo, hi), q in zip(self.ranges, qs)]
        return _pack_floats(values)


@dataclass(frozen=True)
class ExtendedFloats:
    """Continuous uniform samples over each range widened by its own span.

    A base range [a, b] becomes [a - (b - a), b + (b - a)]; the original range
    stays inside the widened one.
    """

    ranges: tuple[tuple[float, float], ...]

    @property
    def width(self) -> int:
        return 4 * len(self.ranges)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        values = []
        for lo, hi in self.ranges:
            span = hi - lo
            values.append(rng.uniform(lo - span, hi + span))
        return _pack_floats(values)


def _pack_floats(values: Sequence[float]) -> np.ndarray:
    return np.frombuffer(np.asarray(values, dtype="<f4").tobytes(), dtype=np.uint8).copy()


VarKind = Union[UniformBytes, TwoLevelBytes, UniformWords, QuantizedFloats,
                ExtendedFloats]


# --------------------------------------------------------------------------
# derived-field rules (computed from other regions each tick)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FloatSignal:
    """Quantize float32s from ``src`` into one signal byte per float.

    s_i = clip(base + slope * round(f_i - lo_i), 0, 255).  Anomalous inputs
    outside [lo_i, lo_i + levels] push s_i out of its normal band.
    """

    src: str
    lows: tuple[float, ...]
    base: int = 100
    slope: int = 6

    @property
    def width(self) -> int:
        return len(self.lows)

    def compute(self, src_bytes: np.ndarray) -> np.ndarray:
        floats = np.frombuffer(src_bytes.tobytes(), dtype="<f4")
        vals = np.round(floats.astype(np.float64) - np.asarray(self.lows))
        return np.clip(self.base + self.slope * vals, 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class AffineBytes:
    """Per-byte affine transform of ``src``: clip(scale * b + add, 0, 255)."""

    src: str
    width: int
    scale: int = 1
    add: int = 0

    def compute(self, src_bytes: np.ndarray) -> np.ndarray:
        vals = self.scale * src_bytes.astype(np.int64) + self.add
        return np.clip(vals, 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class EchoHistory:
    """Rolling history of a one-byte source, stored in several copies.

    The block holds ``depth`` consecutive past values of the source byte for
    each copy kind in ``copies`` ("plain" stores v, "invert" stores 255 - v).
    The newest value sits first; the shift uses the previous tick's block.
    """

    src: str
    depth: int = 3
    copies: tuple[str, ...] = ("plain",)

    @property
    def width(self) -> int:
        return self.depth * len(self.copies)

    def compute(self, src_bytes: np.ndarray, prev_block: Optional[np.ndarray]) -> np.ndarray:
        hist = np.zeros(self.depth, dtype=np.uint8)
        if prev_block is not None:
            hist[1:] = prev_block[: self.depth - 1]
        hist[0] = src_bytes[0]
        parts = []
        for kind in self.copies:
            parts.append(hist if kind == "plain" else (255 - hist).astype(np.uint8))
        return np.concatenate(parts)


@dataclass(frozen=True)
class EmaCascade:
    """Cascaded running averages of a one-byte source.

    Stage 0 halves toward the current source byte, each further stage halves
    toward the previous stage; all stages update from the previous tick's
    block, so the firmware needs no extra state.
    """

    src: str
    stages: int = 3

    @property
    def width(self) -> int:
        return self.stages

    def compute(self, src_bytes: np.ndarray, prev_block: Optional[np.ndarray]) -> np.ndarray:
        prev = prev_block if prev_block is not None else np.zeros(self.stages, dtype=np.uint8)
        out = np.zeros(self.stages, dtype=np.uint8)
        feed = int(src_bytes[0])
        for k in range(self.stages):
            out[k] = (feed + int(prev[k])) // 2
            feed = int(out[k])
        return out


DerivedKind = Union[FloatSignal, AffineBytes, EchoHistory, EmaCascade]


# --------------------------------------------------------------------------
# firmware spec and swarm graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    name: str
    offset: int
    width: int

    @property
    def stop(self) -> int:
        return self.offset + self.width

    def slice(self) -> slice:
        return slice(self.offset, self.stop)


@dataclass(frozen=True)
class FirmwareSpec:
    """One firmware build: data-section layout plus generative behavior."""

    node_id: int
    variant: Variant
    d: int
    regions: tuple[Region, ...]
    static_bytes: np.ndarray
    var_fields: tuple[tuple[str, VarKind], ...]
    rx_map: tuple[tuple[int, str], ...]  # (src node, region name) per inbound edge
    derived: tuple[tuple[str, DerivedKind], ...]
    tx_map: tuple[tuple[int, str], ...]  # (dst node, source region name)

    def region(self, name: str) -> Region:
        for reg in self.regions:
            if reg.name == name:
                return reg
        raise KeyError(f"node {self.node_id} ({self.variant.value}): no region {name!r}")

    def rx_region(self, src: int) -> Region:
        for node, name in self.rx_map:
            if node == src:
                return self.region(name)
        raise KeyError(f"node {self.node_id}: no rx region for edge {src}->{self.node_id}")

    def tx_width(self, dst: int) -> Optional[int]:
        for node, name in self.tx_map:
            if node == dst:
                return self.region(name).width
        return None

    def validate(self) -> None:
        if not 0 < self.d <= SRAM_SIZE:
            raise SwarmConfigError(
                f"node {self.node_id}: data section length {self.d} outside (0, {SRAM_SIZE}]"
            )
        spans = sorted(self.regions, key=lambda r: r.offset)
        for reg in spans:
            if reg.offset < 0 or reg.stop > self.d:
                raise SwarmConfigError(
                    f"node {self.node_id}: region {reg.name} [{reg.offset}, {reg.stop})"
                    f" outside data section of length {self.d}"
                )
        for a, b in zip(spans, spans[1:]):
            if a.stop > b.offset:
                raise SwarmConfigError(
                    f"node {self.node_id}: regions {a.name} and {b.name} overlap"
                )
        static_total = sum(r.width for r in self.regions if r.name.startswith("static"))
        if static_total != len(self.static_bytes):
            raise SwarmConfigError(
                f"node {self.node_id}: static bytes length {len(self.static_bytes)}"
                f" != static region total {static_total}"
            )


@dataclass(frozen=True)
class SwarmNode:
    node_id: int
    role: NodeRole
    firmware: Mapping[Variant, FirmwareSpec]


@dataclass(frozen=True)
class SwarmGraph:
    """Directed information-flow graph over firmware-equipped nodes."""

    swarm_id: str
    numeric_id: int
    nodes: tuple[SwarmNode, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=np.int64)
        for src, dst in self.edges:
            adj[src, dst] = 1
        return adj

    def in_neighbors(self, node_id: int) -> list[int]:
        return [src for src, dst in self.edges if dst == node_id]

    def firmware(self, node_id: int, variant: Variant) -> FirmwareSpec:
        return self.nodes[node_id].firmware[variant]

    def topological_order(self) -> list[int]:
        indeg = {node.node_id: 0 for node in self.nodes}
        for _, dst in self.edges:
            indeg[dst] += 1
        ready = sorted(i for i, k in indeg.items() if k == 0)
        order: list[int] = []
        while ready:
            cur = ready.pop(0)
            order.append(cur)
            for src, dst in self.edges:
                if src == cur:
                    indeg[dst] -= 1
                    if indeg[dst] == 0:
                        ready.append(dst)
            ready.sort()
        if len(order) != self.n:
            raise SwarmConfigError("swarm graph has a cycle; information flow must be acyclic")
        return order

    def validate(self) -> None:
        ids = [node.node_id for node in self.nodes]
        if ids != list(range(self.n)):
            raise SwarmConfigError(f"node ids must be 0..n-1 without duplicates, got {ids}")
        seen = set()
        for src, dst in self.edges:
            if src == dst:
                raise SwarmConfigError(f"self-edge {src}->{dst} not allowed in a simple graph")
            if not (0 <= src < self.n and 0 <= dst < self.n):
                raise SwarmConfigError(f"edge ({src}->{dst}) references unknown node")
            if (src, dst) in seen:
                raise SwarmConfigError(f"duplicate edge {src}->{dst}")
            seen.add((src, dst))
        self.topological_order()
        for node in self.nodes:
            for variant, spec in node.firmware.items():
                spec.validate()
                # rx regions must match the sender's tx width; a build may also
                # ignore an inbound edge entirely (no rx buffer at all)
                for src in self.in_neighbors(node.node_id):
                    try:
                        reg = spec.rx_region(src)
                    except KeyError:
                        continue
                    for sender_variant, sender in self.nodes[src].firmware.items():
                        width = sender.tx_width(node.node_id)
                        if width is not None and width != reg.width:
                            raise SwarmConfigError(
                                f"edge {src}->{node.node_id}: sender tx width {width}"
                                f" ({sender_variant.value}) != rx width {reg.width}"
                            )
                if variant is Variant.NORMAL:
                    for src in self.in_neighbors(node.node_id):
                        spec.rx_region(src)  # normal builds must buffer every edge


# --------------------------------------------------------------------------
# firmware builder
# --------------------------------------------------------------------------


@dataclass
class _Block:
    """Declarative building block, laid out sequentially after the static prefix."""

    name: str
    width: int
    kind: Optional[object] = None  # VarKind | DerivedKind | None (extra static pad)
    rx_from: Optional[int] = None
    offset: Optional[int] = None


# An anomalous build keeps most of the normal build's constants (same
# toolchain and libraries) but rewrites a window of them; primary detection
# rests on that window plus the section-length change, without turning the
# whole image into noise for the neighbors' message passing.
_STATIC_PATCH = 24


def _static_stream(numeric_id: int, node_id: int, code: int, width: int,
                   lo: int, hi: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((_BUILD_SEED, numeric_id, node_id, code))))
    return rng.integers(lo, hi, size=width, dtype=np.int64).astype(np.uint8)


def _static_bytes(numeric_id: int, node_id: int, variant: Variant, width: int,
                  lo: int, hi: int) -> np.ndarray:
    base = _static_stream(numeric_id, node_id, 0, max(width, 1), lo, hi)[:width]
    if variant is Variant.NORMAL:
        return base
    patched = base.copy()
    patch = min(_STATIC_PATCH, max(1, width // 4))
    start = width // 3
    # complemented window: every patched position differs by a wide margin
    patched[start:start + patch] = 255 - patched[start:start + patch]
    return patched


def _build_firmware(numeric_id: int, node_id: int, variant: Variant, d: int,
                    blocks: Sequence[_Block], tx_map: Sequence[tuple[int, str]],
                    static_range: tuple[int, int]) -> FirmwareSpec:
    body = sum(b.width for b in blocks if b.offset is None)
    explicit = [b for b in blocks if b.offset is not None]
    static_len = d - body - sum(b.width for b in explicit)
    if static_len < 0:
        raise SwarmConfigError(
            f"node {node_id} ({variant.value}): declared fields need {body} bytes"
            f" but d={d}"
        )
    # dynamic fields first, constants behind them: buffers and working
    # variables cluster at the start of every build's data section
    regions = []
    cursor = 0
    var_fields: list[tuple[str, VarKind]] = []
    rx_map: list[tuple[int, str]] = []
    derived: list[tuple[str, DerivedKind]] = []
    for block in blocks:
        offset = block.offset if block.offset is not None else cursor
        regions.append(Region(block.name, offset, block.width))
        if block.offset is None:
            cursor += block.width
        if block.rx_from is not None:
            rx_map.append((block.rx_from, block.name))
        elif isinstance(block.kind, (UniformBytes, TwoLevelBytes, UniformWords,
                                     QuantizedFloats, ExtendedFloats)):
            var_fields.append((block.name, block.kind))
        elif isinstance(block.kind, (FloatSignal, AffineBytes, EchoHistory, EmaCascade)):
            derived.append((block.name, block.kind))
        elif block.kind is not None:
            raise SwarmConfigError(f"unknown field kind {block.kind!r}")
    regions.append(Region("static", cursor, static_len))
    static_total = sum(r.width for r in regions if r.name.startswith("static"))
    spec = FirmwareSpec(
        node_id=node_id,
        variant=variant,
        d=d,
        regions=tuple(regions),
        static_bytes=_static_bytes(numeric_id, node_id, variant, static_total, *static_range),
        var_fields=tuple(var_fields),
        rx_map=tuple(rx_map),
        derived=tuple(derived),
        tx_map=tuple(tx_map),
    )
    spec.validate()
    return spec


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

# Float ranges: width-16 windows starting at successive powers-of-two-ish bases.
# Grid-quantized values keep the low mantissa bytes of the IEEE-754 encoding
# constant; the widened anomalous ranges are continuous and light those bytes
# up, so faulty sensing is visible downstream byte-for-byte.
def _float_ranges(count: int) -> tuple[tuple[float, float], ...]:
    return tuple((32.0 * (i + 1), 32.0 * (i + 1) + 16.0) for i in range(count))


_SW1_STATIC = (8, 72)
# near-zero constants: swarm-2 traces carry their energy in the coupled
# dynamic bytes, which is what its detector is meant to key on
_SW2_STATIC = (1, 8)

_SIGNAL_BASE = 100
_SIGNAL_SLOPE = 6
_LED_ADD = -60

# Swarm-2 sync beacon: two-valued with a gap smaller than the k=0.4 noise
# amplitude, so no single stored copy resolves it and the reconstruction has
# to pool the copies held across nodes.  That pooling is precisely the
# coupling the replay/out-of-sync detection rests on.
_SW2_BEACON = (100, 160)
_SW2_ECHO_DEPTH = 8


def _preset_swarm1() -> SwarmGraph:
    sid, num = "swarm1", 1
    ranges6 = _float_ranges(6)
    lows6 = tuple(lo for lo, _ in ranges6)
    edges = ((0, 1), (0, 2), (0, 3), (1, 2), (2, 3))

    # narrow beacon: swarm-1 keeps inter-node payloads low-variance, so the
    # detector keys on supports rather than cross-node value tracking
    n0 = {
        Variant.NORMAL: _build_firmware(num, 0, Variant.NORMAL, 191, [
            _Block("bcast", 1, TwoLevelBytes(1, 126, 130)),
        ], [(1, "bcast"), (2, "bcast"), (3, "bcast")], _SW1_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 0, Variant.ANOMALOUS, 195, [
            _Block("bcast", 1, TwoLevelBytes(1, 126, 130)),
            _Block("junk", 6, UniformWords(3)),
        ], [(1, "bcast"), (2, "bcast"), (3, "bcast")], _SW1_STATIC),
    }
    n1 = {
        Variant.NORMAL: _build_firmware(num, 1, Variant.NORMAL, 450, [
            _Block("sense", 24, QuantizedFloats(ranges6)),
            _Block("rx0", 1, rx_from=0),
        ], [(2, "sense")], _SW1_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 1, Variant.ANOMALOUS, 438, [
            _Block("sense", 24, ExtendedFloats(ranges6)),
            _Block("rx0", 1, rx_from=0),
        ], [(2, "sense")], _SW1_STATIC),
    }
    n2 = {
        Variant.NORMAL: _build_firmware(num, 2, Variant.NORMAL, 516, [
            _Block("rx1", 24, rx_from=1),
            _Block("rx0", 1, rx_from=0),
            _Block("sig", 6, FloatSignal("rx1", lows6, _SIGNAL_BASE, _SIGNAL_SLOPE)),
        ], [(3, "sig")], _SW1_STATIC),
        # drops the received data entirely and emits a random signal
        Variant.ANOMALOUS: _build_firmware(num, 2, Variant.ANOMALOUS, 414, [
            _Block("rx0", 1, rx_from=0),
            _Block("sig", 6, UniformBytes(6)),
        ], [(3, "sig")], _SW1_STATIC),
    }
    n3 = {
        Variant.NORMAL: _build_firmware(num, 3, Variant.NORMAL, 406, [
            _Block("rx2", 6, rx_from=2),
            _Block("rx0", 1, rx_from=0),
            _Block("led", 6, AffineBytes("rx2", 6, 1, _LED_ADD)),
        ], [], _SW1_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 3, Variant.ANOMALOUS, 386, [
            _Block("rx2", 6, rx_from=2),
            _Block("rx0", 1, rx_from=0),
            _Block("led", 6, UniformBytes(6)),
        ], [], _SW1_STATIC),
    }
    nodes = (
        SwarmNode(0, NodeRole.CONTROL, n0),
        SwarmNode(1, NodeRole.SENSE, n1),
        SwarmNode(2, NodeRole.PROCESS, n2),
        SwarmNode(3, NodeRole.CONTROL, n3),
    )
    swarm = SwarmGraph(sid, num, nodes, edges)
    swarm.validate()
    return swarm


def _preset_swarm2() -> SwarmGraph:
    sid, num = "swarm2", 2
    ranges4, ranges3 = _float_ranges(4), _float_ranges(3)
    lows4 = tuple(lo for lo, _ in ranges4)
    lows3 = tuple(lo for lo, _ in ranges3)
    edges = ((0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (2, 3), (4, 5))
    bcast_targets = [(j, "bcast") for j in range(1, 6)]
    beacon = TwoLevelBytes(1, *_SW2_BEACON)
    # the broadcaster keeps three copies of its beacon history, receivers a
    # single one: resolving a receiver's past beacons leans on node 0's copies
    echo = EchoHistory("rx0", _SW2_ECHO_DEPTH, ("plain",))
    self_echo = EchoHistory("bcast", _SW2_ECHO_DEPTH, ("plain", "invert", "plain"))

    n0 = {
        Variant.NORMAL: _build_firmware(num, 0, Variant.NORMAL, 195, [
            _Block("bcast", 1, beacon),
            _Block("echo", self_echo.width, self_echo),
        ], bcast_targets, _SW2_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 0, Variant.ANOMALOUS, 199, [
            _Block("bcast", 1, beacon),
            _Block("echo", self_echo.width, self_echo),
            _Block("junk", 4, UniformWords(2)),
        ], bcast_targets, _SW2_STATIC),
    }

    def receiver_blocks() -> list[_Block]:
        return [_Block("rx0", 1, rx_from=0), _Block("echo", echo.width, echo)]

    # two-level float grid: like the beacon, a single noisy copy of a sample
    # stays ambiguous, so reconstruction pools sender and receiver buffers
    n1 = {
        Variant.NORMAL: _build_firmware(num, 1, Variant.NORMAL, 438, [
            _Block("sense", 16, QuantizedFloats(ranges4, levels=2)), *receiver_blocks(),
        ], [(2, "sense")], _SW2_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 1, Variant.ANOMALOUS, 430, [
            _Block("sense", 16, ExtendedFloats(ranges4)), *receiver_blocks(),
        ], [(2, "sense")], _SW2_STATIC),
    }
    n2 = {
        Variant.NORMAL: _build_firmware(num, 2, Variant.NORMAL, 490, [
            _Block("rx1", 16, rx_from=1), *receiver_blocks(),
            _Block("sig", 4, FloatSignal("rx1", lows4, _SIGNAL_BASE, _SIGNAL_SLOPE)),
        ], [(3, "sig")], _SW2_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 2, Variant.ANOMALOUS, 414, [
            *receiver_blocks(),
            _Block("sig", 4, UniformBytes(4)),
        ], [(3, "sig")], _SW2_STATIC),
    }
    n3 = {
        Variant.NORMAL: _build_firmware(num, 3, Variant.NORMAL, 394, [
            _Block("rx2", 4, rx_from=2), *receiver_blocks(),
            _Block("led", 4, AffineBytes("rx2", 4, 1, _LED_ADD)),
        ], [], _SW2_STATIC),
        Variant.ANOMALOUS: _build_firmware(num, 3, Variant.ANOMALOUS, 386, [
            _Block("rx2", 4, rx_from=2), *receiver_blocks(),
            _Block("led", 4, UniformBytes(4)),
        ], [], _SW2_STATIC),
    }
    n4 = {
        Variant.NORMAL: _build_firmware(num, 4, Variant.NORMAL, 430, [
            _Block("sense", 12, QuantizedFloats(ranges3, levels=2)), *receiver_blocks(),
        ], [(5, "sense")], _SW2_STATIC),
        # generates data normally but never transmits to node 5
        Variant.ANOMALOUS: _build_firmware(num, 4, Variant.ANOMALOUS, 372, [
            _Block("sense", 12, QuantizedFloats(ranges3, levels=2)), *receiver_blocks(),
        ], [], _SW2_STATIC),
    }
    n5 = {
        Variant.NORMAL: _build_firmware(num, 5, Variant.NORMAL, 446, [
            _Block("rx4", 12, rx_from=4), *receiver_blocks(),
            _Block("sig", 3, FloatSignal("rx4", lows3, _SIGNAL_BASE, _SIGNAL_SLOPE)),
            _Block("led", 3, AffineBytes("sig", 3, 1, _LED_ADD)),
        ], [], _SW2_STATIC),
        # same processing, but LED state lives at shifted addresses (other pins)
        Variant.ANOMALOUS: _build_firmware(num, 5, Variant.ANOMALOUS, 452, [
            _Block("rx4", 12, rx_from=4), *receiver_blocks(),
            _Block("sig", 3, FloatSignal("rx4", lows3, _SIGNAL_BASE, _SIGNAL_SLOPE)),
            _Block("pad", 6, None),
            _Block("led", 3, AffineBytes("sig", 3, 1, _LED_ADD)),
        ], [], _SW2_STATIC),
    }
    nodes = (
        SwarmNode(0, NodeRole.CONTROL, n0),
        SwarmNode(1, NodeRole.SENSE, n1),
        SwarmNode(2, NodeRole.PROCESS, n2),
        SwarmNode(3, NodeRole.CONTROL, n3),
        SwarmNode(4, NodeRole.SENSE, n4),
        SwarmNode(5, NodeRole.COMBINED, n5),
    )
    swarm = SwarmGraph(sid, num, nodes, edges)
    swarm.validate()
    return swarm


_PRESETS = {"swarm1": _preset_swarm1, "swarm2": _preset_swarm2}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


# --------------------------------------------------------------------------
# config-file loading
# --------------------------------------------------------------------------

_ROLES = {r.value: r for r in NodeRole}


def _kind_from_config(spec: Mapping) -> object:
    kind = spec.get("kind")
    if kind == "bytes":
        return UniformBytes(int(spec["width"]), int(spec.get("lo", 0)), int(spec.get("hi", 256)))
    if kind == "two_level":
        return TwoLevelBytes(int(spec["width"]), int(spec["low"]), int(spec["high"]))
    if kind == "words":
        return UniformWords(int(spec["count"]))
    if kind == "floats":
        ranges = tuple((float(lo), float(hi)) for lo, hi in spec["ranges"])
        if spec.get("extended"):
            return ExtendedFloats(ranges)
        return QuantizedFloats(ranges, int(spec.get("levels", 16)))
    if kind == "signal":
        return FloatSignal(spec["src"], tuple(float(v) for v in spec["lows"]),
                           int(spec.get("base", _SIGNAL_BASE)), int(spec.get("slope", _SIGNAL_SLOPE)))
    if kind == "affine":
        return AffineBytes(spec["src"], int(spec["width"]),
                           int(spec.get("scale", 1)), int(spec.get("add", 0)))
    if kind == "echo":
        return EchoHistory(spec["src"], int(spec.get("depth", 3)),
                           tuple(spec.get("copies", ["plain"])))
    if kind == "pad":
        return None
    raise SwarmConfigError(f"unknown field kind {kind!r}")


def _blocks_from_config(fields: Iterable[Mapping]) -> list[_Block]:
    blocks = []
    for spec in fields:
        if "rx_from" in spec:
            blocks.append(_Block(spec["name"], int(spec["width"]),
                                 rx_from=int(spec["rx_from"]),
                                 offset=spec.get("offset")))
            continue
        kind = _kind_from_config(spec)
        width = int(spec["width"]) if kind is None else getattr(kind, "width")
        blocks.append(_Block(spec["name"], width, kind, offset=spec.get("offset")))
    return blocks


def build_swarm(config: Union[str, Mapping]) -> SwarmGraph:
    """Build a validated swarm from a preset name or a parsed config mapping."""
    if isinstance(config, str):
        factory = _PRESETS.get(config)
        if factory is None:
            raise SwarmConfigError(
                f"unknown swarm preset {config!r}; available: {preset_names()}")
        return factory()

    sid = config.get("swarm_id", "custom")
    num = int(config.get("numeric_id", zlib.crc32(str(sid).encode()) & 0xFFFF))
    edges = tuple((int(a), int(b)) for a, b in config.get("edges", []))
    seen_ids = [int(n["id"]) for n in config.get("nodes", [])]
    if len(seen_ids) != len(set(seen_ids)):
        raise SwarmConfigError(f"duplicate node ids in config: {seen_ids}")

    nodes = []
    for entry in sorted(config.get("nodes", []), key=lambda e: int(e["id"])):
        node_id = int(entry["id"])
        role = _ROLES.get(str(entry.get("role", "combined")).lower())
        if role is None:
            raise SwarmConfigError(f"node {node_id}: unknown role {entry.get('role')!r}")
        static_range = tuple(entry.get("static_range", _SW1_STATIC))
        firmware = {}
        for variant_name, fw in entry["firmware"].items():
            variant = Variant(variant_name)
            tx = [(int(t["to"]), t["source"]) for t in fw.get("tx", [])]
            firmware[variant] = _build_firmware(
                num, node_id, variant, int(fw["d"]),
                _blocks_from_config(fw.get("fields", [])), tx, static_range)
        nodes.append(SwarmNode(node_id, role, firmware))

    swarm = SwarmGraph(sid, num, tuple(nodes), edges)
    swarm.validate()
    return swarm


def load_swarm_config(path) -> SwarmGraph:
    with open(path, "r", encoding="utf-8") as fh:
        config = yaml.safe_load(fh)
    if not isinstance(config, Mapping):
        raise SwarmConfigError(f"swarm config {path} is not a mapping")
    return build_swarm(config)
