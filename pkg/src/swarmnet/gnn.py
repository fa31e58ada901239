"""Dense graph-network core: three layer types, a shared linear decoder,
reconstruction loss, and exact analytic gradients.

All math is float64 numpy.  Layer semantics:

* ``gcn``: symmetric-normalized propagation with self-loops.  With adjacency
  ``A`` (``A[src, dst] = 1``), messages flow along edge direction and each
  factor of the normalization uses the in-degree of ``A + I``.
* ``gat``: single-head additive attention with LeakyReLU(0.2) logits,
  softmax over in-neighbors plus self.
* ``gt``: single-head dot-product attention (query/key/value/root linears),
  softmax over in-neighbors only; isolated nodes keep just the root term.

Functions accept one graph sample ``(n, F)``; the training loop uses the
batched ``(B, n, F)`` path internally.  Every public forward has an
explicit-loop oracle in the test suite and every gradient is checked against
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

HIDDEN_DIM = 64
LATENT_DIM = 32
LEAKY_SLOPE = 0.2

ARCHS = ("gcn", "gat", "gt")


@dataclass(frozen=True)
class GraphModel:
    """Architecture tag plus named parameter tensors for two graph layers
    and one linear decoder (decoder shared across nodes).

    ``center`` is a fixed per-position offset subtracted from the input
    before the first layer (a conditioning constant baked in at training
    time, not a trainable parameter; gradients are unaffected by it).
    """

    arch: str
    dims: tuple[int, int, int]  # (input length L, hidden, latent)
    params: dict[str, np.ndarray]
    center: Optional[np.ndarray] = None

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    def copy(self) -> "GraphModel":
        return GraphModel(self.arch, self.dims,
                          {k: v.copy() for k, v in self.params.items()},
                          None if self.center is None else self.center.copy())

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def _param_shapes(arch: str, dims: tuple[int, int, int]) -> list[tuple[str, tuple[int, ...]]]:
    L, hidden, latent = dims
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for prefix, fin, fout in (("l1", L, hidden), ("l2", hidden, latent)):
        if arch == "gcn":
            shapes += [(f"{prefix}.W", (fin, fout)), (f"{prefix}.b", (fout,))]
        elif arch == "gat":
            shapes += [(f"{prefix}.W", (fin, fout)), (f"{prefix}.a", (2 * fout,)),
                       (f"{prefix}.b", (fout,))]
        elif arch == "gt":
            for k in range(1, 5):
                shapes += [(f"{prefix}.W{k}", (fin, fout)), (f"{prefix}.b{k}", (fout,))]
        else:
            raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
    shapes += [("dec.W", (latent, L)), ("dec.b", (L,))]
    return shapes


def count_parameters(arch: str, L: int, hidden: int = HIDDEN_DIM,
                     latent: int = LATENT_DIM) -> int:
    """Closed-form parameter count; kept in sync with init by a test."""
    per_layer = {
        "gcn": lambda fin, fout: fin * fout + fout,
        "gat": lambda fin, fout: fin * fout + 3 * fout,
        "gt": lambda fin, fout: 4 * (fin * fout + fout),
    }
    if arch not in per_layer:
        raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
    f = per_layer[arch]
    return f(L, hidden) + f(hidden, latent) + latent * L + L


def init_model(arch: str, L: int, seed: int, hidden: int = HIDDEN_DIM,
               latent: int = LATENT_DIM) -> GraphModel:
    """Glorot-uniform weights, zero biases, drawn in a fixed order."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x6E17))))
    dims = (L, hidden, latent)
    params = {}
    for name, shape in _param_shapes(arch, dims):
        leaf = name.split(".")[-1]
        if leaf.startswith("b"):
            params[name] = np.zeros(shape)
        elif leaf == "a":
            fout = shape[0] // 2
            limit = np.sqrt(6.0 / (2 * fout + 1))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return GraphModel(arch, dims, params)


# --------------------------------------------------------------------------
# propagation structure
# --------------------------------------------------------------------------


def gcn_propagation(adjacency: np.ndarray) -> np.ndarray:
    """P[i, j]: weight of node j's message into node i (self-loops added)."""
    adj = np.asarray(adjacency, dtype=np.float64)
    n = adj.shape[0]
    a_tilde = adj + np.eye(n)
    deg = a_tilde.sum(axis=0)  # in-degree including the self-loop
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a_tilde.T * np.outer(inv_sqrt, inv_sqrt)


def _in_mask(adjacency: np.ndarray, include_self: bool) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=bool)
    mask = adj.T.copy()
    if include_self:
        mask |= np.eye(adj.shape[0], dtype=bool)
    return mask


def _masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax over masked entries; all-masked rows come out all-zero."""
    neg = np.where(mask, logits, -np.inf)
    peak = neg.max(axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    weights = np.exp(neg - peak)
    weights = np.where(mask, weights, 0.0)
    denom = weights.sum(axis=-1, keepdims=True)
    return weights / np.where(denom == 0.0, 1.0, denom)


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


# --------------------------------------------------------------------------
# batched layer cores (H: (B, n, F))
# --------------------------------------------------------------------------


def _gcn_core(H, prop, W, b):
    PH = np.matmul(prop, H)
    Z = np.matmul(PH, W) + b
    return Z, (H, PH, prop, W)


def _gcn_core_backward(dZ, cache, grads, prefix):
    H, PH, prop, W = cache
    grads[f"{prefix}.W"] += np.einsum("bnf,bng->fg", PH, dZ)
    grads[f"{prefix}.b"] += dZ.sum(axis=(0, 1))
    return np.matmul(prop.T, np.matmul(dZ, W.T))


def _gat_core(H, mask, W, a, b):
    fout = W.shape[1]
    a1, a2 = a[:fout], a[fout:]
    G = np.matmul(H, W)
    s1 = G @ a1  # (B, n)
    s2 = G @ a2
    S = s1[..., :, None] + s2[..., None, :]
    E = _leaky(S)
    alpha = _masked_softmax(E, mask)
    Z = np.matmul(alpha, G) + b
    return Z, (H, G, S, alpha, mask, W, a1, a2)


def _gat_core_backward(dZ, cache, grads, prefix):
    H, G, S, alpha, mask, W, a1, a2 = cache
    grads[f"{prefix}.b"] += dZ.sum(axis=(0, 1))
    dG = np.einsum("bij,bif->bjf", alpha, dZ)
    dalpha = np.einsum("bif,bjf->bij", dZ, G)
    inner = (alpha * dalpha).sum(axis=-1, keepdims=True)
    dE = alpha * (dalpha - inner)
    dS = dE * _leaky_grad(S)
    dS = np.where(mask, dS, 0.0)
    ds1 = dS.sum(axis=-1)  # (B, n)
    ds2 = dS.sum(axis=-2)
    grads[f"{prefix}.a"][:len(a1)] += np.einsum("bn,bnf->f", ds1, G)
    grads[f"{prefix}.a"][len(a1):] += np.einsum("bn,bnf->f", ds2, G)
    dG += ds1[..., None] * a1 + ds2[..., None] * a2
    grads[f"{prefix}.W"] += np.einsum("bnf,bng->fg", H, dG)
    return np.matmul(dG, W.T)


def _gt_core(H, mask, Ws, bs):
    W1, W2, W3, W4 = Ws
    b1, b2, b3, b4 = bs
    Q = np.matmul(H, W1) + b1
    K = np.matmul(H, W2) + b2
    V = np.matmul(H, W3) + b3
    R = np.matmul(H, W4) + b4
    scale = 1.0 / np.sqrt(W1.shape[1])
    S = np.einsum("bif,bjf->bij", Q, K) * scale
    alpha = _masked_softmax(S, mask)
    Z = R + np.matmul(alpha, V)
    return Z, (H, Q, K, V, alpha, mask, Ws, scale)


def _gt_core_backward(dZ, cache, grads, prefix):
    H, Q, K, V, alpha, mask, Ws, scale = cache
    W1, W2, W3, W4 = Ws
    # root path
    grads[f"{prefix}.W4"] += np.einsum("bnf,bng->fg", H, dZ)
    grads[f"{prefix}.b4"] += dZ.sum(axis=(0, 1))
    dH = np.matmul(dZ, W4.T)
    # value path
    dV = np.einsum("bij,bif->bjf", alpha, dZ)
    dalpha = np.einsum("bif,bjf->bij", dZ, V)
    inner = (alpha * dalpha).sum(axis=-1, keepdims=True)
    dS = alpha * (dalpha - inner)
    dS = np.where(mask, dS, 0.0)
    dQ = np.einsum("bij,bjf->bif", dS, K) * scale
    dK = np.einsum("bij,bif->bjf", dS, Q) * scale
    for name, dX, W in (("W1", dQ, W1), ("W2", dK, W2), ("W3", dV, W3)):
        grads[f"{prefix}.{name}"] += np.einsum("bnf,bng->fg", H, dX)
        grads[f"{prefix}.b{name[1]}"] += dX.sum(axis=(0, 1))
        dH += np.matmul(dX, W.T)
    return dH


def _layer_structure(arch: str, adjacency: np.ndarray):
    if arch == "gcn":
        return gcn_propagation(adjacency)
    if arch == "gat":
        return _in_mask(adjacency, include_self=True)
    if arch == "gt":
        return _in_mask(adjacency, include_self=False)
    raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")


def _layer_core(arch, H, structure, params, prefix):
    if arch == "gcn":
        return _gcn_core(H, structure, params[f"{prefix}.W"], params[f"{prefix}.b"])
    if arch == "gat":
        return _gat_core(H, structure, params[f"{prefix}.W"],
                         params[f"{prefix}.a"], params[f"{prefix}.b"])
    Ws = tuple(params[f"{prefix}.W{k}"] for k in range(1, 5))
    bs = tuple(params[f"{prefix}.b{k}"] for k in range(1, 5))
    return _gt_core(H, structure, Ws, bs)


def _layer_core_backward(arch, dZ, cache, grads, prefix):
    if arch == "gcn":
        return _gcn_core_backward(dZ, cache, grads, prefix)
    if arch == "gat":
        return _gat_core_backward(dZ, cache, grads, prefix)
    return _gt_core_backward(dZ, cache, grads, prefix)


# --------------------------------------------------------------------------
# public single-sample layer API
# --------------------------------------------------------------------------


def _apply_activation(Z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "identity":
        return Z
    if activation == "relu":
        return np.maximum(Z, 0.0)
    raise ValueError(f"unknown activation {activation!r}")


def _check_2d(H: np.ndarray, adjacency: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = np.asarray(H, dtype=np.float64)
    adj = np.asarray(adjacency)
    if H.ndim != 2:
        raise ValueError(f"node features must be 2-D (n, F), got shape {H.shape}")
    if adj.shape != (H.shape[0], H.shape[0]):
        raise ValueError(f"adjacency {adj.shape} does not match n={H.shape[0]}")
    return H, adj


def gcn_forward(H, adjacency, W, bias, activation: str = "identity") -> np.ndarray:
    H, adj = _check_2d(H, adjacency)
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] != H.shape[1]:
        raise ValueError(f"weight rows {W.shape[0]} != feature dim {H.shape[1]}")
    Z, _ = _gcn_core(H[None], gcn_propagation(adj), W, np.asarray(bias, dtype=np.float64))
    return _apply_activation(Z[0], activation)


def gat_forward(H, adjacency, W, a, bias, activation: str = "identity") -> np.ndarray:
    H, adj = _check_2d(H, adjacency)
    W = np.asarray(W, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if W.shape[0] != H.shape[1]:
        raise ValueError(f"weight rows {W.shape[0]} != feature dim {H.shape[1]}")
    if a.shape != (2 * W.shape[1],):
        raise ValueError(f"attention vector must have shape ({2 * W.shape[1]},), got {a.shape}")
    Z, _ = _gat_core(H[None], _in_mask(adj, True), W, a, np.asarray(bias, dtype=np.float64))
    return _apply_activation(Z[0], activation)


def gt_forward(H, adjacency, weights, biases, activation: str = "identity") -> np.ndarray:
    H, adj = _check_2d(H, adjacency)
    Ws = tuple(np.asarray(W, dtype=np.float64) for W in weights)
    bs = tuple(np.asarray(b, dtype=np.float64) for b in biases)
    if len(Ws) != 4 or len(bs) != 4:
        raise ValueError("graph-transformer layer takes four weight matrices and four biases")
    for W in Ws:
        if W.shape != Ws[0].shape or W.shape[0] != H.shape[1]:
            raise ValueError("inconsistent weight shapes for graph-transformer layer")
    Z, _ = _gt_core(H[None], _in_mask(adj, False), Ws, bs)
    return _apply_activation(Z[0], activation)


# --------------------------------------------------------------------------
# full model
# --------------------------------------------------------------------------


def _model_forward_batch(model: GraphModel, X: np.ndarray, adjacency: np.ndarray,
                         want_cache: bool = False):
    structure = _layer_structure(model.arch, adjacency)
    if model.center is not None:
        X = X - model.center
    Z1, c1 = _layer_core(model.arch, X, structure, model.params, "l1")
    H1 = np.maximum(Z1, 0.0)
    Z2, c2 = _layer_core(model.arch, H1, structure, model.params, "l2")
    Xhat = np.matmul(Z2, model.params["dec.W"]) + model.params["dec.b"]
    if want_cache:
        return Xhat, (Z1, c1, H1, Z2, c2)
    return Xhat


def model_forward(model: GraphModel, x: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
    """Reconstruct one graph sample: two graph layers then the shared decoder."""
    x, adj = _check_2d(x, adjacency)
    if x.shape[1] != model.input_dim:
        raise ValueError(
            f"sample width {x.shape[1]} does not match model input {model.input_dim}")
    return _model_forward_batch(model, x[None], adj)[0]


def mse(x: np.ndarray, xhat: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    diff = x - xhat
    return float(np.sum(diff * diff) / diff.size)


def _zero_grads(model: GraphModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in model.params.items()}


def _model_backward_batch(model: GraphModel, X: np.ndarray, targets: np.ndarray,
                          adjacency: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean reconstruction loss over the batch and its exact gradients."""
    Xhat, (Z1, c1, H1, Z2, c2) = _model_forward_batch(model, X, adjacency, want_cache=True)
    B = X.shape[0]
    diff = Xhat - targets
    per_sample = diff.shape[1] * diff.shape[2]
    loss = float(np.sum(diff * diff) / (B * per_sample))

    grads = _zero_grads(model)
    dXhat = 2.0 * diff / (B * per_sample)
    grads["dec.W"] += np.einsum("bnk,bnl->kl", Z2, dXhat)
    grads["dec.b"] += dXhat.sum(axis=(0, 1))
    dZ2 = np.matmul(dXhat, model.params["dec.W"].T)
    dH1 = _layer_core_backward(model.arch, dZ2, c2, grads, "l2")
    dZ1 = dH1 * (Z1 > 0)
    _layer_core_backward(model.arch, dZ1, c1, grads, "l1")
    return loss, grads


def backward(model: GraphModel, x: np.ndarray, x_noisy: np.ndarray,
             adjacency: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of mse(x, model(x_noisy)) for every parameter."""
    x, adj = _check_2d(x, adjacency)
    x_noisy, _ = _check_2d(x_noisy, adjacency)
    _, grads = _model_backward_batch(model, x_noisy[None], x[None], adj)
    return grads
