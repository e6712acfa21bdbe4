from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memgate.features import (
    FEATURE_NAMES,
    BudgetState,
    EmptyScores,
    StateVector,
    build_state,
    candidate_distribution,
    entropy,
    margin,
    normalized_entropy,
)
from memgate.memory import MemoryBank
from memgate.retrieval import RawContext, normalize, retrieve


def test_feature_order_is_fixed():
    assert FEATURE_NAMES[:5] == ("top1_score", "top2_score", "score_margin", "candidate_entropy", "candidate_count")
    assert FEATURE_NAMES[-1] == "token_budget_remaining"
    assert len(FEATURE_NAMES) == 16


def test_distribution_examples():
    assert candidate_distribution([1, 1, 1]) == pytest.approx([1 / 3] * 3, abs=1e-12)
    assert candidate_distribution([1]) == [1.0]
    # frozen: (3 + eps) / (4 + 2 eps) with eps = 1e-6
    assert candidate_distribution([3, 1], 1e-6) == pytest.approx([0.75, 0.25], abs=1e-5)


def test_distribution_errors():
    with pytest.raises(EmptyScores):
        candidate_distribution([])
    with pytest.raises(ValueError):
        candidate_distribution([1.0], eps=0.0)


def test_entropy_examples():
    assert entropy([1.0]) == 0.0
    assert entropy([1 / 3] * 3) == pytest.approx(math.log(3), abs=1e-12)
    # frozen: -(0.75 ln 0.75 + 0.25 ln 0.25)
    assert entropy([0.75, 0.25]) == pytest.approx(0.5623351446, abs=1e-4)
    assert entropy([1.0, 0.0]) == 0.0


def test_margin_examples():
    assert margin([0.9, 0.9]) == 0.0
    assert margin([0.8]) == 0.8
    assert margin([0.9, 0.3]) == pytest.approx(0.6)
    with pytest.raises(EmptyScores):
        margin([])


def test_empty_candidates_give_zero_score_features():
    z = build_state(normalize(RawContext(session_id="s")), [], MemoryBank(), BudgetState(0.7))
    assert z.top1_score == z.top2_score == z.score_margin == z.candidate_count == 0.0
    assert z.token_budget_remaining == 0.7


def test_state_from_real_candidates(dataset):
    q = dataset.queries[0]
    prof = normalize(q.raw, session_rejections=7)
    cands = retrieve(prof, dataset.bank)
    z = build_state(prof, cands, dataset.bank, BudgetState(0.9, {"top1_resolution": (120.0, 400.0)}))
    rec = dataset.bank.record(cands[0].record_ref)
    assert z.top1_score == cands[0].score
    assert z.score_margin == pytest.approx(cands[0].score - cands[1].score)
    assert z.candidate_count == pytest.approx(0.3)
    assert z.session_rejection_count == 1.0
    assert z.historical_false_positive_rate == rec.historical_false_positive_rate
    assert z.estimated_latency_ms == pytest.approx(0.12)
    assert z.estimated_token_cost == pytest.approx(0.2)


def test_cheapest_injection_payload():
    payload = {"top3_summary": (50.0, 300.0), "top1_resolution": (20.0, 100.0), "no_memory": (0.0, 0.0)}
    assert BudgetState(1.0, payload).cheapest_injection() == (20.0, 100.0)
    assert BudgetState().cheapest_injection() == (0.0, 0.0)


def test_array_round_trip():
    z = StateVector(top1_score=0.4, session_rejection_count=0.2)
    assert StateVector.from_array(z.as_array()) == z
    with pytest.raises(ValueError):
        StateVector.from_array([0.0] * 3)


@settings(max_examples=200, deadline=None)
@given(k=st.integers(1, 10))
def test_uniform_entropy_is_log_k(k):
    assert abs(entropy([1.0 / k] * k) - math.log(k)) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(scores=st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_distribution_and_entropy_properties(scores):
    pi = candidate_distribution(scores)
    assert abs(math.fsum(pi) - 1.0) <= 1e-12
    assert all(p > 0 for p in pi)
    assert 0.0 <= normalized_entropy(pi) <= 1.0
    assert entropy(pi) <= math.log(len(pi)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(budget=st.floats(-1, 2), rej=st.integers(0, 20))
def test_state_features_bounded(budget, rej):
    z = build_state(normalize(RawContext(), session_rejections=rej), [], MemoryBank(), BudgetState(budget))
    assert all(0.0 <= v <= 1.0 for v in z.as_array())
