import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmnet.attest import (AttestationParams, PadOverflowError,
                             ParamsFormatError, attest, attest_batch,
                             compute_default_traces, compute_thresholds,
                             cosine_similarity, load_params, pad_length_for,
                             preprocess, save_params)
from swarmnet.gnn import init_model, model_forward
from swarmnet.protocol import SwarmResponse


# ------------------------------------------------------------- preprocess ---

def test_preprocess_scales_and_pads():
    response = SwarmResponse(0, [bytes([0x00, 0xFF])])
    x = preprocess(response, None, 4)
    assert np.allclose(x, [[0.0, 1.0, 0.0, 0.0]])


def test_preprocess_substitutes_defaults():
    defaults = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
    response = SwarmResponse(0, [None, None])
    assert np.allclose(preprocess(response, defaults, 3), defaults)


def test_preprocess_mixed_slots():
    defaults = np.array([[0.9, 0.9], [0.8, 0.8]])
    response = SwarmResponse(0, [b"\x33", None])
    x = preprocess(response, defaults, 2)
    assert np.allclose(x[0], [0x33 / 255, 0.0])
    assert np.allclose(x[1], [0.8, 0.8])


def test_preprocess_overflow():
    response = SwarmResponse(0, [b"\x00" * 5])
    with pytest.raises(PadOverflowError):
        preprocess(response, None, 4)


def test_preprocess_missing_without_defaults():
    with pytest.raises(ValueError):
        preprocess(SwarmResponse(0, [None]), None, 4)


# ------------------------------------------------------- cosine similarity ---

def test_cosine_self_is_one():
    v = np.array([0.3, 0.0, 2.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)


def test_cosine_orthogonal_is_zero():
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)


def test_cosine_hand_value():
    assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(
        0.7071067811865475)


def test_cosine_zero_vector_fails_closed():
    assert cosine_similarity([0.0, 0.0], [1.0, 2.0]) == -1.0
    assert cosine_similarity([1.0, 2.0], [0.0, 0.0]) == -1.0


def test_cosine_length_mismatch():
    with pytest.raises(ValueError):
        cosine_similarity([1.0], [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8),
       st.floats(0.1, 10.0))
def test_cosine_scale_invariant(values, scale):
    u = np.asarray(values)
    if np.linalg.norm(u) == 0.0:
        return
    w = np.linspace(1.0, 2.0, len(values))
    assert cosine_similarity(u, w) == pytest.approx(
        cosine_similarity(u * scale, w), abs=1e-9)


# -------------------------------------------------------------- thresholds ---

def _tiny_params(seed=0, n=3, L=8):
    # zero-weight model with a constant positive output: every score is the
    # cosine against a fixed all-0.5 vector, strictly positive on byte data
    rng = np.random.default_rng(seed)
    adj = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    model = init_model("gcn", L, seed=seed, hidden=4, latent=3)
    for name in model.params:
        model.params[name][...] = 0.0
    model.params["dec.b"][...] = 0.5
    X = rng.integers(32, 224, size=(5, n, L)) / 255.0  # byte-exact values
    thresholds = compute_thresholds(X, model, adj, 0.999)
    defaults = compute_default_traces(X)
    params = AttestationParams("mini", model, thresholds, defaults, L, 0.999)
    return params, X, adj


def test_threshold_is_scaled_min():
    params, X, adj = _tiny_params()
    scores = np.empty((X.shape[0], X.shape[1]))
    for i in range(X.shape[0]):
        xhat = model_forward(params.model, X[i], adj)
        for j in range(X.shape[1]):
            scores[i, j] = cosine_similarity(X[i, j], xhat[j])
    assert np.allclose(params.thresholds, 0.999 * scores.min(axis=0))


def test_threshold_hand_arithmetic():
    # min training score 0.95 at sf 0.999 gives 0.94905
    assert 0.999 * 0.95 == pytest.approx(0.94905)


def test_training_samples_pass_their_thresholds():
    params, X, adj = _tiny_params()
    assert params.thresholds.min() > 0  # positive scores on this data
    decisions = attest_batch(X, params, adj)
    assert not decisions.flags.any()


def test_sf_one_flags_boundary_sample():
    params, X, adj = _tiny_params()
    strict = AttestationParams(params.swarm_id, params.model,
                               params.thresholds / 0.999,  # sf = 1.0
                               params.default_traces, params.pad_length, 1.0)
    decisions = attest_batch(X, strict, adj)
    # the arg-min sample scores exactly DT and the strict rule flags it
    assert decisions.flags.any()


def test_lowering_sf_never_raises_flags():
    params, X, adj = _tiny_params()
    rng = np.random.default_rng(1)
    probe = rng.random((4, X.shape[1], X.shape[2]))
    flags_hi = attest_batch(probe, params, adj).flags
    relaxed = AttestationParams(params.swarm_id, params.model,
                                params.thresholds * 0.9 / 0.999,
                                params.default_traces, params.pad_length, 0.9)
    flags_lo = attest_batch(probe, relaxed, adj).flags
    assert np.all(flags_lo <= flags_hi)


# ---------------------------------------------------------- default traces ---

def test_default_traces_hand_mean():
    X = np.array([[[0.0, 2 / 255]], [[2 / 255, 4 / 255]]])
    assert np.allclose(compute_default_traces(X), [[1 / 255, 3 / 255]])


def test_default_traces_single_sample():
    X = np.random.default_rng(0).random((1, 2, 4))
    assert np.allclose(compute_default_traces(X), X[0])


def test_default_traces_accumulation_oracle():
    rng = np.random.default_rng(5)
    X = rng.random((7, 3, 4))
    acc = np.zeros((3, 4))
    for i in range(7):
        acc += X[i]
    assert np.allclose(compute_default_traces(X), acc / 7)


# ------------------------------------------------------------------ attest ---

def test_attest_pad_overflow_propagates():
    params, X, adj = _tiny_params()
    response = SwarmResponse(0, [b"\x01" * (params.pad_length + 1)] * 3)
    with pytest.raises(PadOverflowError):
        attest(response, params, adj)


def test_attest_missing_slot_uses_default_and_scores_others():
    params, X, adj = _tiny_params()
    raw = (X[0] * 255).astype(np.uint8)
    response = SwarmResponse(0, [raw[0].tobytes(), None, raw[2].tobytes()])
    decision = attest(response, params, adj)
    assert decision.scores.shape == (3,)
    full = attest(SwarmResponse(0, [r.tobytes() for r in raw]), params, adj)
    # the substituted slot is scored on the default trace, not skipped
    assert decision.scores[1] != pytest.approx(full.scores[1])


def test_attest_batch_matches_single(swarm1):
    params, X, adj = _tiny_params()
    batch = attest_batch(X, params, adj)
    for i in range(X.shape[0]):
        raw = [(X[i, j] * 255).astype(np.uint8).tobytes() for j in range(3)]
        single = attest(SwarmResponse(i, raw), params, adj)
        assert np.array_equal(single.flags, batch.flags[i])


# -------------------------------------------------------------- params io ---

def test_params_roundtrip_bitwise(tmp_path):
    params, X, adj = _tiny_params()
    path = tmp_path / "p.swnp"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.swarm_id == params.swarm_id
    assert loaded.pad_length == params.pad_length
    assert loaded.scale_factor == params.scale_factor
    assert np.array_equal(loaded.thresholds, params.thresholds)
    assert np.array_equal(loaded.default_traces, params.default_traces)
    for name in params.model.params:
        assert np.array_equal(loaded.model.params[name], params.model.params[name])
    # identical decisions after the round trip
    probe = np.random.default_rng(2).random((3, 3, params.pad_length))
    a = attest_batch(probe, params, adj).flags
    b = attest_batch(probe, loaded, adj).flags
    assert np.array_equal(a, b)


def test_params_file_deterministic(tmp_path):
    params, _, _ = _tiny_params()
    p1, p2 = tmp_path / "a.swnp", tmp_path / "b.swnp"
    save_params(params, p1)
    save_params(params, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_params_corruption_detected(tmp_path):
    params, _, _ = _tiny_params()
    path = tmp_path / "p.swnp"
    save_params(params, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x40
    path.write_bytes(bytes(blob))
    with pytest.raises(ParamsFormatError, match="checksum"):
        load_params(path)


def test_params_truncation_detected(tmp_path):
    params, _, _ = _tiny_params()
    path = tmp_path / "p.swnp"
    save_params(params, path)
    path.write_bytes(path.read_bytes()[:50])
    with pytest.raises(ParamsFormatError):
        load_params(path)


def test_params_swarm_id_mismatch(tmp_path):
    params, _, _ = _tiny_params()
    path = tmp_path / "p.swnp"
    save_params(params, path)
    with pytest.raises(ParamsFormatError, match="mini"):
        load_params(path, expected_swarm_id="swarm1")


def test_pad_length_is_next_multiple_of_four():
    assert pad_length_for(516) == 516
    assert pad_length_for(517) == 520
    assert pad_length_for(1) == 4
