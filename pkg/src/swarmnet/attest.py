"""Verifier-side attestation: preprocessing, scoring, decisions, persistence.

The verifier keeps one parameter set per swarm: trained model, per-node
decision thresholds DT, default traces for missing responses, and the pad
length L.  A response passes only if its cosine score strictly exceeds the
node's threshold; everything else (including a zero-norm trace) is flagged.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .gnn import GraphModel, model_forward, _model_forward_batch
from .protocol import SwarmResponse

SCALE = 255.0


class PadOverflowError(ValueError):
    """A trace longer than the trained pad length L; the build changed."""


class ParamsFormatError(ValueError):
    """Corrupt, truncated, or mismatched parameter files."""


@dataclass(frozen=True)
class AttestationParams:
    swarm_id: str
    model: GraphModel
    thresholds: np.ndarray    # (n,)
    default_traces: np.ndarray  # (n, L), already scaled to [0, 1]
    pad_length: int
    scale_factor: float

    @property
    def n(self) -> int:
        return len(self.thresholds)

    def validate(self) -> None:
        if self.default_traces.shape != (self.n, self.pad_length):
            raise ValueError("default trace grid does not match (n, L)")
        if np.any(self.thresholds <= -1.0) or np.any(self.thresholds > 1.0):
            raise ValueError("thresholds must lie in (-1, 1]")
        if self.default_traces.min() < 0.0 or self.default_traces.max() > 1.0:
            raise ValueError("default traces must lie in [0, 1]")
        if self.model.input_dim != self.pad_length:
            raise ValueError("model input width does not match pad length")


@dataclass(frozen=True)
class DecisionFlags:
    """Per-node anomaly flags (1 = anomalous) and the cosine scores behind them."""

    flags: np.ndarray
    scores: np.ndarray


def pad_length_for(max_d: int, multiple: int = 4) -> int:
    """Smallest multiple of ``multiple`` that fits the longest training trace."""
    return ((max_d + multiple - 1) // multiple) * multiple


TraceLike = Union[bytes, bytearray, np.ndarray, None]


def _scale_trace(raw: TraceLike, L: int) -> np.ndarray:
    data = np.frombuffer(bytes(raw), dtype=np.uint8) if isinstance(raw, (bytes, bytearray)) \
        else np.asarray(raw, dtype=np.uint8)
    if len(data) > L:
        raise PadOverflowError(
            f"trace of length {len(data)} exceeds pad length {L}; retrain required")
    out = np.zeros(L, dtype=np.float64)
    out[:len(data)] = data / SCALE
    return out


def preprocess(response: SwarmResponse, default_traces: Optional[np.ndarray],
               L: int) -> np.ndarray:
    """Scale to [0, 1], zero-pad to L, substitute defaults for missing slots."""
    rows = []
    for j, slot in enumerate(response.slots):
        if slot is None:
            if default_traces is None:
                raise ValueError(f"slot {j} missing and no default traces available")
            rows.append(np.asarray(default_traces[j], dtype=np.float64))
        else:
            rows.append(_scale_trace(slot, L))
    return np.stack(rows)


def cosine_similarity(u: np.ndarray, w: np.ndarray) -> float:
    """u.w / (|u||w|); a zero-norm side scores -1 so it can never pass."""
    u = np.asarray(u, dtype=np.float64).ravel()
    w = np.asarray(w, dtype=np.float64).ravel()
    if u.shape != w.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {w.shape}")
    nu, nw = np.linalg.norm(u), np.linalg.norm(w)
    if nu == 0.0 or nw == 0.0:
        return -1.0
    return float(np.dot(u, w) / (nu * nw))


def _row_scores(x: np.ndarray, xhat: np.ndarray) -> np.ndarray:
    return np.array([cosine_similarity(x[j], xhat[j]) for j in range(x.shape[0])])


def compute_thresholds(X: np.ndarray, model: GraphModel, adjacency: np.ndarray,
                       scale_factor: float) -> np.ndarray:
    """DT_j = sf * min over clean training samples of the node's cosine score."""
    Xhat = _model_forward_batch(model, np.asarray(X, dtype=np.float64), adjacency)
    scores = np.empty(X.shape[:2])
    for i in range(X.shape[0]):
        scores[i] = _row_scores(X[i], Xhat[i])
    return scale_factor * scores.min(axis=0)


def compute_default_traces(X: np.ndarray) -> np.ndarray:
    """Per-node elementwise mean of the preprocessed training rows."""
    X = np.asarray(X, dtype=np.float64)
    return X.mean(axis=0)


def attest(response: SwarmResponse, params: AttestationParams,
           adjacency: np.ndarray) -> DecisionFlags:
    """Score one collated swarm response against the stored parameters."""
    x = preprocess(response, params.default_traces, params.pad_length)
    xhat = model_forward(params.model, x, adjacency)
    scores = _row_scores(x, xhat)
    flags = (scores <= params.thresholds).astype(np.int64)
    return DecisionFlags(flags=flags, scores=scores)


def attest_batch(X: np.ndarray, params: AttestationParams,
                 adjacency: np.ndarray) -> DecisionFlags:
    """Vectorized attest over already-preprocessed samples (m, n, L)."""
    X = np.asarray(X, dtype=np.float64)
    Xhat = _model_forward_batch(params.model, X, adjacency)
    dots = np.einsum("mnl,mnl->mn", X, Xhat)
    norms = np.linalg.norm(X, axis=2) * np.linalg.norm(Xhat, axis=2)
    scores = np.where(norms == 0.0, -1.0, dots / np.where(norms == 0.0, 1.0, norms))
    flags = (scores <= params.thresholds[None, :]).astype(np.int64)
    return DecisionFlags(flags=flags, scores=scores)


# --------------------------------------------------------------------------
# parameter persistence
# --------------------------------------------------------------------------

_MAGIC = b"SWNP"
_VERSION = 1


def _write_tensor(buf: io.BytesIO, name: str, value: np.ndarray) -> None:
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    mat = np.atleast_2d(np.asarray(value, dtype="<f8"))
    buf.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
    buf.write(mat.tobytes(order="C"))


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ParamsFormatError("truncated parameter file")
    return data


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    rows, cols = struct.unpack("<II", _read_exact(fh, 8))
    data = np.frombuffer(_read_exact(fh, 8 * rows * cols), dtype="<f8")
    return name, data.reshape(rows, cols)


def save_params(params: AttestationParams, path) -> None:
    params.validate()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<H", _VERSION))
    swarm_raw = params.swarm_id.encode("utf-8")
    buf.write(struct.pack("<H", len(swarm_raw)))
    buf.write(swarm_raw)
    arch_raw = params.model.arch.encode("ascii")
    buf.write(struct.pack("<H", len(arch_raw)))
    buf.write(arch_raw)
    L, hidden, latent = params.model.dims
    buf.write(struct.pack("<IIIId", params.n, L, hidden, latent, params.scale_factor))
    buf.write(np.asarray(params.thresholds, dtype="<f8").tobytes())
    buf.write(np.asarray(params.default_traces, dtype="<f8").tobytes(order="C"))
    tensors = sorted(params.model.params)
    extra = 1 if params.model.center is not None else 0
    buf.write(struct.pack("<I", len(tensors) + extra))
    for name in tensors:
        _write_tensor(buf, name, params.model.params[name])
    if params.model.center is not None:
        _write_tensor(buf, "__center__", params.model.center)
    body = buf.getvalue()
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body + digest)


def load_params(path, expected_swarm_id: Optional[str] = None) -> AttestationParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 32 + 4:
        raise ParamsFormatError(f"{path}: file too short")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ParamsFormatError(f"{path}: checksum mismatch")
    fh = io.BytesIO(body)
    if _read_exact(fh, 4) != _MAGIC:
        raise ParamsFormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<H", _read_exact(fh, 2))
    if version != _VERSION:
        raise ParamsFormatError(f"{path}: unsupported version {version}")
    (sid_len,) = struct.unpack("<H", _read_exact(fh, 2))
    swarm_id = _read_exact(fh, sid_len).decode("utf-8")
    if expected_swarm_id is not None and swarm_id != expected_swarm_id:
        raise ParamsFormatError(
            f"{path}: holds parameters for {swarm_id!r}, expected {expected_swarm_id!r}")
    (arch_len,) = struct.unpack("<H", _read_exact(fh, 2))
    arch = _read_exact(fh, arch_len).decode("ascii")
    n, L, hidden, latent, sf = struct.unpack("<IIIId", _read_exact(fh, 24))
    thresholds = np.frombuffer(_read_exact(fh, 8 * n), dtype="<f8").copy()
    default_traces = np.frombuffer(
        _read_exact(fh, 8 * n * L), dtype="<f8").reshape(n, L).copy()
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    tensors = {}
    for _ in range(count):
        name, value = _read_tensor(fh)
        tensors[name] = value
    if fh.read(1):
        raise ParamsFormatError(f"{path}: trailing bytes before checksum")

    center = tensors.pop("__center__", None)
    if center is not None:
        center = center.reshape(L)
    squeezed = {}
    from .gnn import _param_shapes
    for name, shape in _param_shapes(arch, (L, hidden, latent)):
        if name not in tensors:
            raise ParamsFormatError(f"{path}: missing tensor {name}")
        squeezed[name] = tensors[name].reshape(shape)
    model = GraphModel(arch, (L, hidden, latent), squeezed, center)
    params = AttestationParams(swarm_id, model, thresholds, default_traces, L, sf)
    params.validate()
    return params
