import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import prf_oracle as oracle
from specedge.errors import DomainError
from specedge.models import (SyntheticModel, SyntheticParams, TokenSeq, VocabConfig, confidence,
                             draft_distribution, linear_betas, softmax, target_distribution)

BETAS = (0.3, 0.6, 0.9)


def params(seed=42, vocab=16, L=4, alpha=0.8, beta=BETAS, sharpness=3.0):
    return SyntheticParams(seed, VocabConfig(vocab), L, alpha, beta, sharpness)


def argmax(v):
    return max(range(len(v)), key=v.__getitem__)


def test_frozen_target_argmax():
    # oracle: prf_oracle.exit_argmax(42, 16, [.3,.6,.9], 4, [3,1,4], i)
    p = params()
    for i in range(1, 5):
        assert argmax(target_distribution(p, [3, 1, 4], i)) == 8


def test_frozen_draft_argmax():
    assert argmax(draft_distribution(params(), [3, 1, 4])) == 8


def test_beta_zero_forces_disagreement_and_one_forces_agreement():
    p = params(seed=7, vocab=8, L=3, beta=(0.0, 1.0))
    final = argmax(target_distribution(p, [1], 3))
    assert final == 0
    assert argmax(target_distribution(p, [1], 1)) == 6
    assert argmax(target_distribution(p, [1], 2)) == final


@given(st.lists(st.integers(0, 31), min_size=1, max_size=12), st.integers(0, 2**32))
@settings(max_examples=200)
def test_package_matches_oracle(prefix, seed):
    betas = (0.25, 0.5, 0.75)
    m = SyntheticModel(params(seed=seed, vocab=32, beta=betas))
    for i in range(1, 5):
        assert m.exit_argmax(prefix, i) == oracle.exit_argmax(seed, 32, betas, 4, prefix, i)
    assert m.draft_argmax(prefix) == oracle.draft_argmax(seed, 32, 0.8, prefix)


@given(st.lists(st.integers(0, 15), min_size=1, max_size=8), st.integers(1, 4))
@settings(max_examples=100)
def test_distributions_are_probability_vectors(prefix, i):
    for dist in (target_distribution(params(), prefix, i), draft_distribution(params(), prefix)):
        assert len(dist) == 16
        assert all(x >= 0 for x in dist)
        assert math.isclose(sum(dist), 1.0, rel_tol=1e-12)


def test_deterministic_across_instances():
    a, b = SyntheticModel(params()), SyntheticModel(params())
    prefix = [5, 9, 2, 2]
    assert a.target_distribution(prefix, 2) == b.target_distribution(prefix, 2)
    assert a.greedy_draft(prefix, 6) == b.greedy_draft(prefix, 6)


def test_alpha_extremes():
    one = SyntheticModel(params(alpha=1.0))
    zero = SyntheticModel(params(alpha=0.0))
    for k in range(200):
        prefix = [k % 16, (k * 7) % 16, k // 16]
        assert one.draft_argmax(prefix) == one.exit_argmax(prefix, 4)
        assert zero.draft_argmax(prefix) != zero.exit_argmax(prefix, 4)


def test_agreement_rates_match_parameters():
    betas = linear_betas(6, 0.2, 0.9)
    m = SyntheticModel(params(vocab=64, L=6, alpha=0.8, beta=betas))
    trials = 10_000
    draft_hits = 0
    exit_hits = [0] * 5
    for k in range(trials):
        prefix = [k % 64, k // 64 % 64, 7]
        final = m.exit_argmax(prefix, 6)
        draft_hits += m.draft_argmax(prefix) == final
        for i in range(1, 6):
            exit_hits[i - 1] += m.exit_argmax(prefix, i) == final
    assert abs(draft_hits / trials - 0.8) <= 0.02
    for got, want in zip(exit_hits, betas):
        assert abs(got / trials - want) <= 0.02


def test_deeper_exits_are_more_confident():
    m = SyntheticModel(params())
    tops = [m.exit_top_prob(i) for i in range(1, 5)]
    assert tops == sorted(tops)
    assert tops[-1] == pytest.approx(m.draft_top_prob())


def test_confidence_examples():
    assert confidence([0.25] * 4) == 0.25
    assert confidence([0.0, 1.0, 0.0]) == 1.0
    dist = softmax([math.log(2), 0.0, 0.0])
    assert dist == pytest.approx([0.5, 0.25, 0.25])
    assert confidence(dist) == pytest.approx(0.5)


def test_token_seq_hash_is_incremental():
    a = TokenSeq([3, 1]).extend([4])
    b = TokenSeq([3, 1, 4])
    assert a == b and a.hash == b.hash == oracle.prefix_hash([3, 1, 4]) == 0x30C70C257D24C20C


def test_linear_betas():
    assert linear_betas(1, 0.2, 0.9) == ()
    assert linear_betas(2, 0.2, 0.9) == (0.9,)
    assert linear_betas(3, 0.2, 0.8) == pytest.approx((0.2, 0.8))


@pytest.mark.parametrize("kwargs", [
    dict(L=4, beta=(0.5,)),
    dict(alpha=1.5),
    dict(beta=(0.9, 0.5, 0.95)),
    dict(sharpness=0.0),
    dict(L=0, beta=()),
])
def test_bad_params_rejected(kwargs):
    with pytest.raises(DomainError):
        params(**kwargs)


def test_bad_inputs_rejected():
    with pytest.raises(DomainError):
        VocabConfig(1)
    with pytest.raises(DomainError):
        target_distribution(params(), [3, 99], 1)
    with pytest.raises(DomainError):
        target_distribution(params(), [3], 5)
    with pytest.raises(DomainError):
        draft_distribution(params(), [])
