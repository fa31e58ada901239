import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmnet import generate_corpus, scenario
from swarmnet.corpus import DataSectionTrace
from swarmnet.harness import (attack_s1_drop, attack_s2_perturb,
                              attack_s3_replay, metrics)
from swarmnet.protocol import SwarmResponse


# ---------------------------------------------------------------- metrics ---

def test_metrics_hand_example():
    flags = np.array([1] + [0] * 97 + [1] + [0])
    labels = np.array([1] + [0] * 97 + [0] + [1])
    result = metrics(flags, labels)
    assert result.counts.tp == 1 and result.counts.tn == 97
    assert result.counts.fp == 1 and result.counts.fn == 1
    assert result.accuracy == pytest.approx(0.98)
    assert result.detection_rate == pytest.approx(0.5)
    assert result.attestation_rate == pytest.approx(97 / 98)


def test_metrics_absent_rates_are_none():
    result = metrics(np.zeros(10, dtype=int), np.zeros(10, dtype=int))
    assert result.attestation_rate == 1.0
    assert result.detection_rate is None
    result = metrics(np.ones(4, dtype=int), np.ones(4, dtype=int))
    assert result.attestation_rate is None
    assert result.detection_rate == 1.0


def test_metrics_misaligned_rejected():
    with pytest.raises(ValueError):
        metrics(np.zeros((3, 2)), np.zeros(5))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)),
                min_size=1, max_size=60))
def test_metrics_against_counting_oracle(pairs):
    flags = np.array([f for f, _ in pairs])
    labels = np.array([l for _, l in pairs])
    result = metrics(flags, labels)
    tp = sum(1 for f, l in pairs if f == 1 and l == 1)
    tn = sum(1 for f, l in pairs if f == 0 and l == 0)
    fp = sum(1 for f, l in pairs if f == 1 and l == 0)
    fn = sum(1 for f, l in pairs if f == 0 and l == 1)
    assert (result.counts.tp, result.counts.tn,
            result.counts.fp, result.counts.fn) == (tp, tn, fp, fn)
    assert result.counts.total == len(pairs)
    assert result.accuracy == pytest.approx((tp + tn) / len(pairs))
    if tp + fn:
        assert result.detection_rate == pytest.approx(tp / (tp + fn))
    if tn + fp:
        assert result.attestation_rate == pytest.approx(tn / (tn + fp))


# --------------------------------------------------------------------- s1 ---

def test_s1_drops_exactly_count_slots():
    response = SwarmResponse(0, [bytes([j]) for j in range(5)])
    dropped = attack_s1_drop(response, 1, seed=3)
    assert len(dropped.missing()) == 1
    dropped = attack_s1_drop(response, 4, seed=3)
    assert len(dropped.missing()) == 4  # one survivor


def test_s1_count_out_of_range():
    response = SwarmResponse(0, [b"\x00"] * 4)
    for bad in (0, 4, 5):
        with pytest.raises(ValueError):
            attack_s1_drop(response, bad, seed=0)


def test_s1_deterministic():
    response = SwarmResponse(0, [bytes([j]) for j in range(6)])
    assert attack_s1_drop(response, 2, 9).missing() == \
           attack_s1_drop(response, 2, 9).missing()


# --------------------------------------------------------------------- s2 ---

def test_s2_changes_exactly_n_bytes():
    trace = DataSectionTrace(1, 0, np.arange(50, dtype=np.uint8))
    for n_bytes in (1, 10, 50):
        hit = attack_s2_perturb(trace, n_bytes, seed=4)
        assert int((hit.data != trace.data).sum()) == n_bytes


def test_s2_rejects_out_of_range():
    trace = DataSectionTrace(0, 0, np.zeros(8, dtype=np.uint8))
    with pytest.raises(ValueError):
        attack_s2_perturb(trace, 0, seed=0)
    with pytest.raises(ValueError):
        attack_s2_perturb(trace, 9, seed=0)


def test_s2_deterministic_per_trace():
    trace = DataSectionTrace(2, 5, np.arange(30, dtype=np.uint8))
    a = attack_s2_perturb(trace, 4, seed=1)
    b = attack_s2_perturb(trace, 4, seed=1)
    assert np.array_equal(a.data, b.data)


# --------------------------------------------------------------------- s3 ---

def test_s3_preserves_per_node_histograms(swarm1):
    corpus = generate_corpus(swarm1, scenario("swarm1", "D1"), 30, 5)
    shuffled = attack_s3_replay(corpus, seed=6)
    for j in range(swarm1.n):
        original = sorted(t.data.tobytes() for t in corpus.node_series(j))
        permuted = sorted(t.data.tobytes() for t in shuffled.node_series(j))
        assert original == permuted


def test_s3_breaks_tick_alignment(swarm1):
    corpus = generate_corpus(swarm1, scenario("swarm1", "D1"), 40, 5)
    shuffled = attack_s3_replay(corpus, seed=6)
    moved = sum(
        corpus.tick(t)[1].data.tobytes() != shuffled.tick(t)[1].data.tobytes()
        for t in range(40))
    assert moved > 20  # a permutation of 40 ticks fixes few points


def test_s3_shuffles_nodes_independently(swarm1):
    corpus = generate_corpus(swarm1, scenario("swarm1", "D1"), 40, 5)
    shuffled = attack_s3_replay(corpus, seed=6)
    perms = []
    for j in range(swarm1.n):
        origin = {t.data.tobytes(): t.tick for t in corpus.node_series(j)}
        perms.append(tuple(origin[t.data.tobytes()]
                           for t in shuffled.node_series(j)))
    assert len(set(perms)) > 1


def test_s3_requires_two_ticks(swarm1):
    corpus = generate_corpus(swarm1, scenario("swarm1", "D1"), 1, 5)
    with pytest.raises(ValueError):
        attack_s3_replay(corpus, seed=0)
