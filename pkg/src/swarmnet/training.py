"""Adam optimizer and the denoising training loop.

Training perturbs each sample once with scaled uniform noise (x + k*U(0,1))
before the epoch loop, then runs shuffled mini-batch Adam on the mean
reconstruction loss.  Everything is deterministic under the given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .gnn import GraphModel, _model_backward_batch, init_model


@dataclass
class AdamState:
    """Classic Adam with the L2 term folded into the gradient."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0005
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One update: g += wd*theta, bias-corrected moments, theta -= lr*m^/(sqrt(v^)+eps)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, theta in params.items():
        g = grads[name] + state.weight_decay * theta
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 0.01
    weight_decay: float = 0.0005
    noise_k: float = 0.4
    resample_noise: bool = False  # redraw noise at each epoch instead of once
    lr_decay: str = "none"  # "none" keeps lr fixed; "cosine" anneals it to zero
    hidden: int = 64
    latent: int = 32


@dataclass(frozen=True)
class TrainResult:
    model: GraphModel
    epoch_losses: tuple[float, ...]


def train(X: np.ndarray, adjacency: np.ndarray, arch: str, seed: int,
          config: Optional[TrainConfig] = None) -> TrainResult:
    """Fit a denoising reconstruction model on clean samples X (m, n, L)."""
    config = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] < 1:
        raise ValueError(f"training set must be (m, n, L) with m >= 1, got {X.shape}")
    m, n, L = X.shape

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x7124))))
    model = init_model(arch, L, seed, hidden=config.hidden, latent=config.latent)
    params = {k: v.copy() for k, v in model.params.items()}
    # fixed input-conditioning offset: the mean noisy input per position
    center = X.mean(axis=(0, 1)) + config.noise_k / 2.0
    work = GraphModel(model.arch, model.dims, params, center)
    opt = AdamState(lr=config.lr, weight_decay=config.weight_decay)

    if config.lr_decay not in ("none", "cosine"):
        raise ValueError(f"unknown lr_decay {config.lr_decay!r}")

    noisy = X + config.noise_k * rng.uniform(0.0, 1.0, size=X.shape)
    losses = []
    for epoch in range(config.epochs):
        if config.lr_decay == "cosine":
            opt.lr = config.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / config.epochs))
        if config.resample_noise:
            noisy = X + config.noise_k * rng.uniform(0.0, 1.0, size=X.shape)
        order = rng.permutation(m)
        batch_losses = []
        for start in range(0, m, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = _model_backward_batch(work, noisy[idx], X[idx], adjacency)
            batch_losses.append(loss)
            adam_step(opt, params, grads)
        losses.append(float(np.mean(batch_losses)))
    return TrainResult(GraphModel(work.arch, work.dims, params, center), tuple(losses))
