"""Layer forwards against brute-force per-edge oracles and hand examples."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmnet.gnn import (count_parameters, gat_forward, gcn_forward,
                          gt_forward, init_model, model_forward, mse)
from conftest import random_dag

TOL = 1e-9


# ----------------------------------------------------------- loop oracles ---

def oracle_gcn(H, adj, W, b):
    n, _ = H.shape
    fo = W.shape[1]
    a_tilde = [[adj[i][j] + (1 if i == j else 0) for j in range(n)] for i in range(n)]
    deg = [sum(a_tilde[j][i] for j in range(n)) for i in range(n)]
    out = np.zeros((n, fo))
    for i in range(n):
        for j in range(n):
            if a_tilde[j][i] == 0:
                continue
            coeff = 1.0 / math.sqrt(deg[i] * deg[j])
            for f in range(fo):
                acc = 0.0
                for k in range(H.shape[1]):
                    acc += H[j, k] * W[k, f]
                out[i, f] += coeff * acc
        out[i] += b
    return out


def oracle_gat(H, adj, W, a, b):
    n, _ = H.shape
    fo = W.shape[1]
    g = np.zeros((n, fo))
    for j in range(n):
        for f in range(fo):
            g[j, f] = sum(H[j, k] * W[k, f] for k in range(H.shape[1]))
    a1, a2 = a[:fo], a[fo:]
    out = np.zeros((n, fo))
    for i in range(n):
        nbrs = [j for j in range(n) if adj[j][i]] + [i]
        nbrs = sorted(set(nbrs))
        logits = []
        for j in nbrs:
            s = sum(a1[k] * g[i, k] for k in range(fo)) + \
                sum(a2[k] * g[j, k] for k in range(fo))
            logits.append(s if s > 0 else 0.2 * s)
        peak = max(logits)
        weights = [math.exp(v - peak) for v in logits]
        denom = sum(weights)
        for j, w in zip(nbrs, weights):
            out[i] += (w / denom) * g[j]
        out[i] += b
    return out


def oracle_gt(H, adj, Ws, bs):
    n, _ = H.shape
    W1, W2, W3, W4 = Ws
    b1, b2, b3, b4 = bs
    fo = W1.shape[1]

    def lin(vec, W, b):
        return np.array([sum(vec[k] * W[k, f] for k in range(len(vec))) + b[f]
                         for f in range(fo)])

    out = np.zeros((n, fo))
    for i in range(n):
        out[i] = lin(H[i], W4, b4)
        nbrs = [j for j in range(n) if adj[j][i]]
        if not nbrs:
            continue
        q = lin(H[i], W1, b1)
        logits = []
        for j in nbrs:
            k_j = lin(H[j], W2, b2)
            logits.append(sum(q[f] * k_j[f] for f in range(fo)) / math.sqrt(fo))
        peak = max(logits)
        weights = [math.exp(v - peak) for v in logits]
        denom = sum(weights)
        for j, w in zip(nbrs, weights):
            out[i] += (w / denom) * lin(H[j], W3, b3)
    return out


# ------------------------------------------------------------- gcn checks ---

def test_gcn_single_node_identity():
    H = np.array([[2.0, -1.0, 3.0]])
    out = gcn_forward(H, np.zeros((1, 1)), np.eye(3), np.zeros(3))
    assert np.allclose(out, H)


def test_gcn_two_node_symmetric_hand_value():
    H = np.array([[1.0], [3.0]])
    adj = np.array([[0, 1], [1, 0]])
    out = gcn_forward(H, adj, np.array([[1.0]]), np.zeros(1))
    assert np.allclose(out, [[2.0], [2.0]])


def test_gcn_relu_activation():
    H = np.array([[-4.0], [2.0]])
    out = gcn_forward(H, np.zeros((2, 2)), np.array([[1.0]]), np.zeros(1),
                      activation="relu")
    assert np.allclose(out, [[0.0], [2.0]])


def test_gcn_permutation_symmetry_regular_graph():
    # directed 4-cycle is in-regular; identical features give identical rows
    adj = np.zeros((4, 4), dtype=int)
    for i in range(4):
        adj[i, (i + 1) % 4] = 1
    H = np.tile([1.5, -0.5], (4, 1))
    rng = np.random.default_rng(0)
    W = rng.normal(size=(2, 3))
    out = gcn_forward(H, adj, W, rng.normal(size=3))
    assert np.allclose(out, out[0])


def test_gcn_shape_mismatch():
    with pytest.raises(ValueError):
        gcn_forward(np.ones((2, 3)), np.zeros((2, 2)), np.ones((4, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        gcn_forward(np.ones((2, 3)), np.zeros((3, 3)), np.ones((3, 2)), np.zeros(2))


def test_gcn_matches_loop_oracle():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        adj = random_dag(rng, n)
        H = rng.normal(size=(n, int(rng.integers(1, 5))))
        W = rng.normal(size=(H.shape[1], int(rng.integers(1, 5))))
        b = rng.normal(size=W.shape[1])
        assert np.max(np.abs(
            gcn_forward(H, adj, W, b) - oracle_gcn(H, adj, W, b))) <= TOL


# ------------------------------------------------------------- gat checks ---

def test_gat_self_only_softmax_of_one():
    H = np.array([[1.0, 2.0]])
    rng = np.random.default_rng(1)
    W = rng.normal(size=(2, 3))
    a = rng.normal(size=6)
    out = gat_forward(H, np.zeros((1, 1)), W, a, np.zeros(3))
    assert np.allclose(out, H @ W)  # alpha_ii = 1


def test_gat_equal_logits_give_half_half():
    # zero attention vector: every e_ij = 0, two-member neighborhood -> 0.5/0.5
    H = np.array([[1.0], [3.0]])
    adj = np.array([[0, 0], [1, 0]])  # node 0 aggregates {1, self}
    W = np.array([[1.0]])
    out = gat_forward(H, adj, W, np.zeros(2), np.zeros(1))
    assert np.allclose(out[0], [2.0])
    assert np.allclose(out[1], [3.0])


def test_gat_matches_loop_oracle():
    rng = np.random.default_rng(43)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        adj = random_dag(rng, n)
        H = rng.normal(size=(n, int(rng.integers(1, 5))))
        fo = int(rng.integers(1, 5))
        W = rng.normal(size=(H.shape[1], fo))
        a = rng.normal(size=2 * fo)
        b = rng.normal(size=fo)
        assert np.max(np.abs(
            gat_forward(H, adj, W, a, b) - oracle_gat(H, adj, W, a, b))) <= TOL


# -------------------------------------------------------------- gt checks ---

def _gt_params(rng, fi, fo):
    Ws = tuple(rng.normal(size=(fi, fo)) for _ in range(4))
    bs = tuple(rng.normal(size=fo) for _ in range(4))
    return Ws, bs


def test_gt_single_in_neighbor_alpha_one():
    rng = np.random.default_rng(2)
    Ws, bs = _gt_params(rng, 2, 3)
    H = rng.normal(size=(2, 2))
    adj = np.array([[0, 1], [0, 0]])  # 0 -> 1
    out = gt_forward(H, adj, Ws, bs)
    expect_1 = H[1] @ Ws[3] + bs[3] + (H[0] @ Ws[2] + bs[2])
    assert np.allclose(out[1], expect_1)


def test_gt_isolated_node_keeps_root_term_only():
    rng = np.random.default_rng(3)
    Ws, bs = _gt_params(rng, 2, 3)
    H = rng.normal(size=(1, 2))
    out = gt_forward(H, np.zeros((1, 1)), Ws, bs)
    assert np.allclose(out, H @ Ws[3] + bs[3])


def test_gt_zero_query_key_uniform_attention():
    rng = np.random.default_rng(4)
    _, bs0 = _gt_params(rng, 2, 3)
    W3 = rng.normal(size=(2, 3))
    W4 = rng.normal(size=(2, 3))
    Ws = (np.zeros((2, 3)), np.zeros((2, 3)), W3, W4)
    bs = (np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))
    H = rng.normal(size=(3, 2))
    adj = np.array([[0, 0, 1], [0, 0, 1], [0, 0, 0]])  # node 2 <- {0, 1}
    out = gt_forward(H, adj, Ws, bs)
    expect = H[2] @ W4 + 0.5 * (H[0] @ W3) + 0.5 * (H[1] @ W3)
    assert np.allclose(out[2], expect)


def test_gt_matches_loop_oracle():
    rng = np.random.default_rng(44)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        adj = random_dag(rng, n)
        H = rng.normal(size=(n, int(rng.integers(1, 5))))
        fo = int(rng.integers(1, 5))
        Ws, bs = _gt_params(rng, H.shape[1], fo)
        assert np.max(np.abs(
            gt_forward(H, adj, Ws, bs) - oracle_gt(H, adj, Ws, bs))) <= TOL


# --------------------------------------------------------- attention sums ---

@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_attention_rows_sum_to_one(seed, n):
    from swarmnet.gnn import (_gat_core, _gt_core, _in_mask)
    rng = np.random.default_rng(seed)
    adj = random_dag(rng, n)
    H = rng.normal(size=(1, n, 3))
    W = rng.normal(size=(3, 4))
    _, cache = _gat_core(H, _in_mask(adj, True), W, rng.normal(size=8),
                         np.zeros(4))
    alpha = cache[3][0]
    assert np.max(np.abs(alpha.sum(axis=1) - 1.0)) <= 1e-12  # self always present
    Ws = tuple(rng.normal(size=(3, 4)) for _ in range(4))
    bs = tuple(np.zeros(4) for _ in range(4))
    _, cache = _gt_core(H, _in_mask(adj, False), Ws, bs)
    alpha = cache[4][0]
    indeg = adj.sum(axis=0)
    for i in range(n):
        total = alpha[i].sum()
        assert abs(total - (1.0 if indeg[i] else 0.0)) <= 1e-12


# ------------------------------------------------------------- full model ---

def test_model_output_shape_all_archs():
    rng = np.random.default_rng(5)
    adj = random_dag(rng, 4)
    x = rng.random((4, 20))
    for arch in ("gcn", "gat", "gt"):
        model = init_model(arch, 20, seed=1, hidden=8, latent=5)
        assert model_forward(model, x, adj).shape == (4, 20)


def test_zero_model_outputs_decoder_bias():
    model = init_model("gcn", 10, seed=1, hidden=4, latent=3)
    for name in model.params:
        model.params[name][...] = 0.0
    model.params["dec.b"][...] = 0.25
    out = model_forward(model, np.zeros((3, 10)), np.zeros((3, 3)))
    assert np.allclose(out, 0.25)


def test_model_forward_reproducible_bitwise():
    rng = np.random.default_rng(6)
    adj = random_dag(rng, 4)
    x = rng.random((4, 16))
    a = model_forward(init_model("gt", 16, seed=9, hidden=8, latent=4), x, adj)
    b = model_forward(init_model("gt", 16, seed=9, hidden=8, latent=4), x, adj)
    assert a.tobytes() == b.tobytes()


def test_model_rejects_wrong_width():
    model = init_model("gcn", 16, seed=1, hidden=4, latent=3)
    with pytest.raises(ValueError):
        model_forward(model, np.zeros((2, 10)), np.zeros((2, 2)))


# -------------------------------------------------------------------- mse ---

def test_mse_identical_is_zero():
    x = np.random.default_rng(0).random((3, 5))
    assert mse(x, x) == 0.0


def test_mse_hand_value():
    assert mse(np.array([[1.0, 1.0]]), np.array([[0.0, 0.0]])) == 1.0


def test_mse_matches_accumulation_oracle():
    rng = np.random.default_rng(7)
    x, y = rng.random((4, 6)), rng.random((4, 6))
    acc = 0.0
    for i in range(4):
        for j in range(6):
            acc += (x[i, j] - y[i, j]) ** 2
    assert abs(mse(x, y) - acc / 24) <= 1e-15


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


# ------------------------------------------------------------ param count ---

@pytest.mark.parametrize("arch", ["gcn", "gat", "gt"])
@pytest.mark.parametrize("L", [16, 520])
def test_parameter_count_formula_matches_tensors(arch, L):
    model = init_model(arch, L, seed=0)
    assert model.n_parameters() == count_parameters(arch, L)


def test_hand_computed_counts():
    # gcn, L=16, hidden=64, latent=32:
    #   16*64+64 + 64*32+32 + 32*16+16 = 1088 + 2080 + 528
    assert count_parameters("gcn", 16) == 1088 + 2080 + 528
    # gat adds a 2*fout attention vector per layer
    assert count_parameters("gat", 16) == (1088 + 128) + (2080 + 64) + 528
    # gt uses four weight matrices and four biases per layer
    assert count_parameters("gt", 16) == 4 * 1088 + 4 * 2080 + 528
