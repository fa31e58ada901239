"""Verifier/gateway/node state machines over a simulated transport.

One attestation round per node::

    gateway --REQ--> node      MAC binds the stored round nonce C_j (not sent)
    node --RESP--> gateway     AES-CTR(C_echo || C_used || trace), then MAC
    gateway --UPDATE--> node   AES-CTR(C_echo || C_new), then MAC

MAC verification always precedes decryption.  A node that just answered a
request refuses further requests under the same nonce until the update lands,
so captured requests cannot be replayed within a round; across rounds the
rotated nonce invalidates them.  Desynchronized pairs recover through a list
of reserved resynchronization nonces installed at setup and consumed in
order.

The transport is a deterministic event queue; an adversary is expressed as a
policy of per-message rules (drop, delay, replay, bit-flip).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .swarm import SwarmGraph
from .wire import (IV_LEN, KEY_LEN, MAC_LEN, NONCE_LEN, MsgType, WireMessage,
                   aes_ctr, build_message, verify_mac)

DEFAULT_TIMEOUT = 4
DEFAULT_RESYNC_DEPTH = 8


class ProtocolError(Exception):
    pass


class BadMacError(ProtocolError):
    pass


class NonceMismatchError(ProtocolError):
    pass


class EchoMismatchError(ProtocolError):
    pass


class ReplayedMessageError(ProtocolError):
    pass


class ResyncExhaustedError(ProtocolError):
    pass


@dataclass
class NodeSecurityState:
    """Per-node secrets: shared key, current round nonce, reserved resync nonces."""

    node_id: int
    key: bytes
    nonce: bytes
    resync_nonces: list[bytes]
    resync_used: int = 0


@dataclass
class SwarmResponse:
    """Per-round collation: one trace (or None for a missing slot) per node."""

    round_id: int
    slots: list[Optional[bytes]]

    @property
    def n(self) -> int:
        return len(self.slots)

    def missing(self) -> list[int]:
        return [j for j, slot in enumerate(self.slots) if slot is None]


class AttesterNode:
    """Prover-side state machine for one IoT node."""

    def __init__(self, state: NodeSecurityState, swarm_id: int, rng: random.Random):
        self.state = state
        self.swarm_id = swarm_id
        self.rng = rng
        self.awaiting_update = False
        self.pending_echo: Optional[bytes] = None
        self.rejections: list[str] = []

    def _reject(self, exc: ProtocolError) -> ProtocolError:
        self.rejections.append(type(exc).__name__)
        return exc

    def handle_request(self, msg: WireMessage, trace: bytes) -> WireMessage:
        """Verify a request and answer with the encrypted trace.

        Raises on any invalid request; the caller drops the message silently
        (the rejection is recorded as an attempted forgery/replay signal).
        """
        if msg.msg_type != MsgType.REQ or msg.swarm_id != self.swarm_id \
                or msg.node_id != self.state.node_id:
            raise self._reject(BadMacError("request not addressed to this node"))
        used: Optional[bytes] = None
        if verify_mac(msg, self.state.key, self.state.nonce):
            if self.awaiting_update:
                raise self._reject(ReplayedMessageError(
                    "request under current nonce while awaiting update"))
            used = self.state.nonce
        else:
            for idx in range(self.state.resync_used, len(self.state.resync_nonces)):
                entry = self.state.resync_nonces[idx]
                if verify_mac(msg, self.state.key, entry):
                    self.state.resync_used = idx + 1
                    self.awaiting_update = False
                    used = entry
                    break
            if used is None:
                raise self._reject(BadMacError("request MAC invalid"))
        echo = self.rng.randbytes(NONCE_LEN)
        iv = self.rng.randbytes(IV_LEN)
        ciphertext = aes_ctr(self.state.key, iv, echo + used + trace)
        self.pending_echo = echo
        self.awaiting_update = True
        return build_message(MsgType.RESP, self.swarm_id, self.state.node_id,
                             self.state.key, iv, ciphertext)

    def handle_update(self, msg: WireMessage) -> None:
        if msg.msg_type != MsgType.UPDATE or msg.swarm_id != self.swarm_id \
                or msg.node_id != self.state.node_id:
            raise self._reject(BadMacError("update not addressed to this node"))
        if not verify_mac(msg, self.state.key):
            raise self._reject(BadMacError("update MAC invalid"))
        if not self.awaiting_update or self.pending_echo is None:
            raise self._reject(ReplayedMessageError("no update expected"))
        plaintext = aes_ctr(self.state.key, msg.iv, msg.payload)
        if len(plaintext) != 2 * NONCE_LEN:
            raise self._reject(BadMacError("update payload has wrong length"))
        echo, new_nonce = plaintext[:NONCE_LEN], plaintext[NONCE_LEN:]
        if echo != self.pending_echo:
            raise self._reject(EchoMismatchError("echoed nonce does not match"))
        self.state.nonce = new_nonce
        self.awaiting_update = False
        self.pending_echo = None


@dataclass
class _Mirror:
    key: bytes
    nonce: bytes
    resync_nonces: list[bytes]
    resync_used: int = 0


@dataclass
class _RoundSlot:
    expected: bytes
    is_resync: bool
    done: bool = False


class SwarmGateway:
    """Gateway-side mirrors of every node's security state."""

    def __init__(self, swarm_id: int, mirrors: Mapping[int, _Mirror],
                 rng: random.Random, timeout: int = DEFAULT_TIMEOUT):
        self.swarm_id = swarm_id
        self.mirrors = dict(mirrors)
        self.rng = rng
        self.timeout = timeout
        self.needs_resync: set[int] = set()
        self.unreachable: set[int] = set()
        self.rejections: list[str] = []
        self._round: dict[int, _RoundSlot] = {}

    @property
    def node_ids(self) -> list[int]:
        return sorted(self.mirrors)

    def make_request(self, node_id: int) -> WireMessage:
        try:
            mirror = self.mirrors[node_id]
        except KeyError:
            raise ProtocolError(f"unknown node {node_id}") from None
        self._round[node_id] = _RoundSlot(expected=mirror.nonce, is_resync=False)
        return build_message(MsgType.REQ, self.swarm_id, node_id, mirror.key,
                             mac_suffix=mirror.nonce)

    def make_resync_request(self, node_id: int) -> WireMessage:
        mirror = self.mirrors[node_id]
        if mirror.resync_used >= len(mirror.resync_nonces):
            self.unreachable.add(node_id)
            raise ResyncExhaustedError(f"node {node_id}: resync nonce list exhausted")
        entry = mirror.resync_nonces[mirror.resync_used]
        mirror.resync_used += 1
        self._round[node_id] = _RoundSlot(expected=entry, is_resync=True)
        return build_message(MsgType.REQ, self.swarm_id, node_id, mirror.key,
                             mac_suffix=entry)

    def begin_round(self) -> list[tuple[int, WireMessage, bool]]:
        """Issue one request per reachable node; resync requests where needed."""
        out = []
        for node_id in self.node_ids:
            if node_id in self.unreachable:
                continue
            if node_id in self.needs_resync:
                try:
                    out.append((node_id, self.make_resync_request(node_id), True))
                except ResyncExhaustedError:
                    continue
            else:
                out.append((node_id, self.make_request(node_id), False))
        return out

    def handle_response(self, msg: WireMessage) -> tuple[bytes, WireMessage]:
        """Verify, decrypt, rotate the node's nonce; return (trace, update)."""
        if msg.msg_type != MsgType.RESP or msg.swarm_id != self.swarm_id:
            self.rejections.append("BadMacError")
            raise BadMacError("response not addressed to this gateway")
        mirror = self.mirrors.get(msg.node_id)
        slot = self._round.get(msg.node_id)
        if mirror is None or slot is None:
            self.rejections.append("BadMacError")
            raise BadMacError(f"no open round for node {msg.node_id}")
        if not verify_mac(msg, mirror.key):
            self.rejections.append("BadMacError")
            raise BadMacError(f"node {msg.node_id}: response MAC invalid")
        if slot.done:
            self.rejections.append("ReplayedMessageError")
            raise ReplayedMessageError(f"node {msg.node_id}: duplicate response")
        plaintext = aes_ctr(mirror.key, msg.iv, msg.payload)
        if len(plaintext) < 2 * NONCE_LEN:
            self.rejections.append("BadMacError")
            raise BadMacError(f"node {msg.node_id}: response payload too short")
        echo = plaintext[:NONCE_LEN]
        used = plaintext[NONCE_LEN:2 * NONCE_LEN]
        trace = plaintext[2 * NONCE_LEN:]
        if used != slot.expected:
            self.rejections.append("NonceMismatchError")
            raise NonceMismatchError(f"node {msg.node_id}: stale round nonce")
        new_nonce = self.rng.randbytes(NONCE_LEN)
        mirror.nonce = new_nonce
        slot.done = True
        iv = self.rng.randbytes(IV_LEN)
        ciphertext = aes_ctr(mirror.key, iv, echo + new_nonce)
        update = build_message(MsgType.UPDATE, self.swarm_id, msg.node_id,
                               mirror.key, iv, ciphertext)
        return trace, update

    def finish_round(self, round_id: int) -> SwarmResponse:
        slots: list[Optional[bytes]] = [None] * (max(self.node_ids) + 1)
        missing = set()
        for node_id in self.node_ids:
            slot = self._round.get(node_id)
            if slot is None or not slot.done:
                missing.add(node_id)
        self.needs_resync = missing - self.unreachable
        self._round = {}
        return SwarmResponse(round_id, slots)


def setup_protocol(swarm_numeric_id: int, node_ids: Sequence[int], seed: int,
                   timeout: int = DEFAULT_TIMEOUT,
                   resync_depth: int = DEFAULT_RESYNC_DEPTH,
                   ) -> tuple[SwarmGateway, dict[int, AttesterNode]]:
    """Install keys, initial nonces and resync lists on both sides."""
    setup_rng = random.Random(f"swarmnet-setup:{swarm_numeric_id}:{seed}")
    nodes = {}
    mirrors = {}
    for node_id in node_ids:
        key = setup_rng.randbytes(KEY_LEN)
        nonce = setup_rng.randbytes(NONCE_LEN)
        resync = [setup_rng.randbytes(NONCE_LEN) for _ in range(resync_depth)]
        state = NodeSecurityState(node_id, key, nonce, list(resync))
        node_rng = random.Random(f"swarmnet-node:{swarm_numeric_id}:{seed}:{node_id}")
        nodes[node_id] = AttesterNode(state, swarm_numeric_id, node_rng)
        mirrors[node_id] = _Mirror(key, nonce, list(resync))
    gateway_rng = random.Random(f"swarmnet-gateway:{swarm_numeric_id}:{seed}")
    gateway = SwarmGateway(swarm_numeric_id, mirrors, gateway_rng, timeout)
    return gateway, nodes


# --------------------------------------------------------------------------
# adversarial transport
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyRule:
    """First matching rule decides the fate of a message."""

    action: str  # drop | delay | replay | flip
    msg_type: Optional[MsgType] = None
    node_id: Optional[int] = None
    round_index: Optional[int] = None
    param: int = 0

    def matches(self, msg_type: MsgType, node_id: int, round_index: int) -> bool:
        return ((self.msg_type is None or self.msg_type == msg_type)
                and (self.node_id is None or self.node_id == node_id)
                and (self.round_index is None or self.round_index == round_index))


_ACTIONS = {"drop", "delay", "replay", "flip"}
_TYPE_NAMES = {"req": MsgType.REQ, "resp": MsgType.RESP, "update": MsgType.UPDATE}


@dataclass
class TransportPolicy:
    rules: list[PolicyRule] = field(default_factory=list)

    @classmethod
    def from_config(cls, entries: Sequence[Mapping]) -> "TransportPolicy":
        rules = []
        for entry in entries:
            action = str(entry["action"]).lower()
            if action not in _ACTIONS:
                raise ValueError(f"unknown transport action {action!r}")
            msg_type = entry.get("msg_type")
            if isinstance(msg_type, str):
                msg_type = _TYPE_NAMES[msg_type.lower()]
            elif msg_type is not None:
                msg_type = MsgType(int(msg_type))
            rules.append(PolicyRule(
                action=action,
                msg_type=msg_type,
                node_id=entry.get("node_id"),
                round_index=entry.get("round"),
                param=int(entry.get("param", entry.get("k", entry.get("bit", 0)))),
            ))
        return cls(rules)

    def deliveries(self, raw: bytes, msg_type: MsgType, node_id: int,
                   round_index: int, tick: int) -> list[tuple[int, bytes]]:
        """Delivery schedule for a message sent at ``tick`` (latency one tick)."""
        arrival = tick + 1
        for rule in self.rules:
            if not rule.matches(msg_type, node_id, round_index):
                continue
            if rule.action == "drop":
                return []
            if rule.action == "delay":
                return [(arrival + rule.param, raw)]
            if rule.action == "replay":
                return [(arrival, raw), (arrival + 1, raw)]
            if rule.action == "flip":
                flipped = bytearray(raw)
                bit = rule.param % (8 * len(flipped))
                flipped[bit // 8] ^= 1 << (bit % 8)
                return [(arrival, bytes(flipped))]
        return [(arrival, raw)]


LOSSLESS = TransportPolicy()


def run_round(gateway: SwarmGateway, nodes: Mapping[int, AttesterNode],
              traces: Mapping[int, bytes], policy: TransportPolicy = LOSSLESS,
              round_index: int = 0) -> SwarmResponse:
    """Drive one full attestation round through the simulated transport."""
    queue: list[tuple[int, int, int, bytes]] = []  # (tick, seq, dest node, raw)
    seq = 0

    def schedule(raw: bytes, msg_type: MsgType, node_id: int, tick: int):
        nonlocal seq
        for arrival, data in policy.deliveries(raw, msg_type, node_id, round_index, tick):
            heapq.heappush(queue, (arrival, seq, node_id, data))
            seq += 1

    for node_id, msg, _ in gateway.begin_round():
        schedule(msg.encode(), MsgType.REQ, node_id, tick=0)

    collected: dict[int, bytes] = {}
    horizon = gateway.timeout + 2
    while queue:
        tick, _, node_id, raw = heapq.heappop(queue)
        if tick > horizon:
            continue
        try:
            msg = WireMessage.decode(raw)
        except Exception:
            continue
        if msg.msg_type == MsgType.REQ:
            node = nodes.get(msg.node_id)
            if node is None:
                continue
            try:
                resp = node.handle_request(msg, traces[msg.node_id])
            except ProtocolError:
                continue
            schedule(resp.encode(), MsgType.RESP, msg.node_id, tick)
        elif msg.msg_type == MsgType.RESP:
            if tick > gateway.timeout:
                continue  # late responses never reach the collation
            try:
                trace, update = gateway.handle_response(msg)
            except ProtocolError:
                continue
            collected[msg.node_id] = trace
            schedule(update.encode(), MsgType.UPDATE, msg.node_id, tick)
        else:
            node = nodes.get(msg.node_id)
            if node is None:
                continue
            try:
                node.handle_update(msg)
            except ProtocolError:
                continue

    response = gateway.finish_round(round_index)
    for node_id, trace in collected.items():
        response.slots[node_id] = trace
    return response


def collect_rounds(swarm: SwarmGraph, corpus, seed: int,
                   policy: TransportPolicy = LOSSLESS,
                   timeout: int = DEFAULT_TIMEOUT) -> list[SwarmResponse]:
    """Run one protocol round per corpus tick against a fresh protocol setup."""
    gateway, nodes = setup_protocol(swarm.numeric_id, list(range(swarm.n)), seed,
                                    timeout=timeout)
    responses = []
    for t in range(corpus.m):
        traces = {j: corpus.tick(t)[j].data.tobytes() for j in range(swarm.n)}
        responses.append(run_round(gateway, nodes, traces, policy, round_index=t))
    return responses
