"""Wire format and crypto primitives for the attestation protocol.

Messages are authenticated with HMAC-SHA-256 and encrypted with AES-128 in
CTR mode, encrypt-then-MAC: the MAC covers every serialized field that
precedes it.  Request MACs additionally bind the per-round nonce without
transmitting it.

Byte layout (big-endian lengths)::

    msg_type   1   REQ=1 | RESP=2 | UPDATE=3
    swarm_id   2
    node_id    2
    iv        16   zero for REQ
    plen       2   payload length
    payload    plen  ciphertext (empty for REQ)
    mac       32   HMAC-SHA-256 over all preceding bytes
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import struct
from dataclasses import dataclass
from enum import IntEnum

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

KEY_LEN = 16
NONCE_LEN = 16
IV_LEN = 16
MAC_LEN = 32
HEADER = struct.Struct(">BHH16sH")


class MsgType(IntEnum):
    REQ = 1
    RESP = 2
    UPDATE = 3


class WireFormatError(ValueError):
    pass


def hmac_sha256(key: bytes, data: bytes) -> bytes:
    return _hmac.new(key, data, hashlib.sha256).digest()


def constant_time_eq(a: bytes, b: bytes) -> bool:
    return _hmac.compare_digest(a, b)


def aes_ctr(key: bytes, iv: bytes, data: bytes) -> bytes:
    """AES-128-CTR keystream XOR; encryption and decryption are the same op."""
    cipher = Cipher(algorithms.AES(key), modes.CTR(iv))
    enc = cipher.encryptor()
    return enc.update(data) + enc.finalize()


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    swarm_id: int
    node_id: int
    iv: bytes
    payload: bytes
    mac: bytes

    def signed_part(self) -> bytes:
        return HEADER.pack(self.msg_type, self.swarm_id, self.node_id,
                           self.iv, len(self.payload)) + self.payload

    def encode(self) -> bytes:
        if len(self.iv) != IV_LEN:
            raise WireFormatError(f"iv must be {IV_LEN} bytes, got {len(self.iv)}")
        if len(self.mac) != MAC_LEN:
            raise WireFormatError(f"mac must be {MAC_LEN} bytes, got {len(self.mac)}")
        return self.signed_part() + self.mac

    @classmethod
    def decode(cls, raw: bytes) -> "WireMessage":
        if len(raw) < HEADER.size + MAC_LEN:
            raise WireFormatError(f"message too short ({len(raw)} bytes)")
        msg_type, swarm_id, node_id, iv, plen = HEADER.unpack_from(raw)
        end = HEADER.size + plen
        if len(raw) != end + MAC_LEN:
            raise WireFormatError(
                f"length mismatch: header says {plen} payload bytes, "
                f"message has {len(raw) - HEADER.size - MAC_LEN}")
        try:
            mtype = MsgType(msg_type)
        except ValueError:
            raise WireFormatError(f"unknown message type {msg_type}") from None
        return cls(mtype, swarm_id, node_id, iv, raw[HEADER.size:end], raw[end:])


def build_message(msg_type: MsgType, swarm_id: int, node_id: int, key: bytes,
                  iv: bytes = b"\x00" * IV_LEN, payload: bytes = b"",
                  mac_suffix: bytes = b"") -> WireMessage:
    """Assemble a message, MACing the serialized fields plus ``mac_suffix``.

    ``mac_suffix`` carries authenticated-but-not-transmitted material (the
    request path binds the stored round nonce this way).
    """
    unsigned = WireMessage(msg_type, swarm_id, node_id, iv, payload, b"\x00" * MAC_LEN)
    mac = hmac_sha256(key, unsigned.signed_part() + mac_suffix)
    return WireMessage(msg_type, swarm_id, node_id, iv, payload, mac)


def verify_mac(msg: WireMessage, key: bytes, mac_suffix: bytes = b"") -> bool:
    expected = hmac_sha256(key, msg.signed_part() + mac_suffix)
    return constant_time_eq(expected, msg.mac)
