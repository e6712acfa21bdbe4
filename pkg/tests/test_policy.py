from __future__ import annotations

import math

import numpy as np
import pytest
from _oracles import logistic_loss, max_gradient_error
from hypothesis import given, settings
from hypothesis import strategies as st

from memgate import policy as pc
from memgate.features import FEATURE_NAMES, StateVector
from memgate.policy import (
    ACTION_INDEX,
    ACTIONS,
    Action,
    InvalidConfig,
    Knobs,
    Outcome,
    PolicyState,
    ProbabilityOutOfRange,
    RewardConfig,
    compute_reward,
)
from memgate.retrieval import Candidate

LABELS = ("verified", "accepted", "correct_abstain", "false_positive", "rejected", "none")


def _cands(n: int, score: float = 0.8) -> list[Candidate]:
    return [Candidate(f"p{i}", f"p{i}-v1", score - 0.1 * i, {}) for i in range(n)]


def _trained_state(seed: int, steps: int = 30) -> PolicyState:
    rng = np.random.default_rng(seed)
    theta = PolicyState()
    for _ in range(steps):
        a = ACTIONS[rng.integers(len(ACTIONS))]
        o = Outcome.from_label(LABELS[rng.integers(len(LABELS))], float(rng.uniform(0, 50)), float(rng.uniform(0, 200)))
        z = StateVector.from_array(rng.uniform(0, 1, len(FEATURE_NAMES)))
        pc.update(theta, a, z, compute_reward(o), o, session_id="s")
    return theta


# -- reward ------------------------------------------------------------------


def test_reward_hand_values():
    expected = {"verified": 2.0, "accepted": 1.0, "correct_abstain": 0.5, "false_positive": -4.0, "rejected": -1.0}
    for label, value in expected.items():
        assert compute_reward(Outcome.from_label(label)) == value
    assert compute_reward(Outcome()) == 0.0


def test_reward_false_positive_with_costs():
    # -4 - 0.001*10 - 0.01*100
    assert compute_reward(Outcome(false_positive=True, latency_ms=10, token_cost=100)) == pytest.approx(-5.01, abs=1e-12)


def test_outcome_flags_exclusive():
    with pytest.raises(ValueError):
        Outcome(verified=True, false_positive=True)
    with pytest.raises(ValueError):
        Outcome(latency_ms=-1)
    with pytest.raises(ValueError):
        Outcome.from_label("great")


def test_outcome_labels_round_trip():
    for label in LABELS:
        o = Outcome.from_label(label, 3.0, 4.0)
        assert o.label == label
        assert Outcome.from_dict(o.to_dict()) == o


def test_config_ordering_examples():
    RewardConfig(alpha=0.75, beta=0.5, gamma=1.0)
    with pytest.raises(InvalidConfig):
        RewardConfig(alpha=2.0, gamma=2.0)
    with pytest.raises(InvalidConfig):
        RewardConfig(alpha=1.0, beta=1.0)


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0, 10), b=st.floats(0, 10), g=st.floats(0, 10))
def test_config_accepts_exactly_the_ordering(a, b, g):
    if g > a > b:
        assert RewardConfig(alpha=a, beta=b, gamma=g).gamma == g
    else:
        with pytest.raises(InvalidConfig):
            RewardConfig(alpha=a, beta=b, gamma=g)


@settings(max_examples=200, deadline=None)
@given(lat=st.floats(0, 1e4), tok=st.floats(0, 1e4))
def test_false_positive_is_worst_outcome(lat, tok):
    r = {l: compute_reward(Outcome.from_label(l, lat, tok)) for l in LABELS}
    assert r["false_positive"] == min(r.values())
    assert r["verified"] == max(r.values())


# -- expected rewards and the Lagrangian score -------------------------------


def test_expected_rewards_example():
    e_inj, e_abs, dom = pc.expected_rewards(0.5, 0.2, 0.1, 0.1, 0.6)
    assert e_inj == pytest.approx(2.0 * 0.5 + 0.2 - 0.4 - 0.1)
    assert e_abs == pytest.approx(0.3)
    assert dom is False


def test_expected_rewards_rejects_bad_probability():
    with pytest.raises(ProbabilityOutOfRange):
        pc.expected_rewards(1.2, 0, 0, 0, 0)


def test_lagrangian_score():
    assert pc.lagrangian_score(Action.ABSTAIN, None, 1.0, 0.25, 0.5, 2.0, 0.1) == pytest.approx(0.45)
    with pytest.raises(ValueError):
        pc.lagrangian_score(Action.ABSTAIN, None, 1.0, 0.0, 0.0, -1.0, 0.1)


# -- scoring and decisions ---------------------------------------------------


def test_cold_start_score():
    # w_u*sqrt(ln 2) - w_r*sqrt(ln 2)*sigmoid(0), no cost
    expected = 0.5 * math.sqrt(math.log(2)) - 0.5 * math.sqrt(math.log(2)) * 0.5
    assert pc.full_score(Action.NO_MEMORY, StateVector(), PolicyState()) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.2081, abs=1e-4)


def test_cold_start_prefers_cheapest_action():
    d = pc.decide(StateVector(top1_score=0.9, score_margin=0.5), _cands(3), PolicyState())
    assert d.chosen is Action.NO_MEMORY and not d.overridden


@pytest.mark.parametrize("seed", range(5))
def test_vector_and_scalar_scores_agree(seed):
    theta = _trained_state(seed)
    z = StateVector.from_array(np.random.default_rng(seed + 100).uniform(0, 1, 16))
    vec = pc.full_scores(z, theta)
    for a in ACTIONS:
        assert vec[ACTION_INDEX[a]] == pytest.approx(pc.full_score(a, z, theta), abs=1e-12)


def test_available_actions_by_candidate_count():
    assert pc.available_actions([]) == pc.NON_INJECTION_ACTIONS
    assert Action.TOP3_SUMMARY not in pc.available_actions(_cands(1))
    assert pc.available_actions(_cands(2)) == frozenset(ACTIONS)


def test_argmax_tie_prefers_non_injection():
    assert pc.argmax_action({Action.TOP1_RESOLUTION: 1.0, Action.ABSTAIN: 1.0}) is Action.ABSTAIN
    with pytest.raises(ValueError):
        pc.argmax_action({})


@pytest.mark.parametrize(
    "z, expected, reason",
    [
        (StateVector(top1_score=0.9, score_margin=0.5, session_rejection_count=0.4), Action.ABSTAIN, "session_rejections"),
        (StateVector(top1_score=0.9, score_margin=0.1, historical_false_positive_rate=0.4), Action.ABSTAIN, "ambiguous_high_fp_history"),
        (StateVector(top1_score=0.3, score_margin=0.3), Action.NO_MEMORY, "low_top1_score"),
        (StateVector(top1_score=0.9, score_margin=0.5, estimated_token_cost=0.5, token_budget_remaining=0.4), Action.NO_MEMORY, "token_budget"),
        (StateVector(top1_score=0.9, score_margin=0.5), Action.TOP1_RESOLUTION, None),
    ],
)
def test_safety_override_rules(z, expected, reason):
    assert pc.safety_override(z, Action.TOP1_RESOLUTION) == (expected, reason)


def test_override_never_touches_non_injection():
    z = StateVector(session_rejection_count=1.0)
    for a in pc.NON_INJECTION_ACTIONS:
        assert pc.safety_override(z, a) == (a, None)


_unit = st.floats(0, 1)


@settings(max_examples=300, deadline=None)
@given(
    top1=_unit, margin=_unit, fp=_unit, rej=_unit, tok=_unit, budget=_unit,
    proposed=st.sampled_from(sorted(pc.INJECTION_ACTIONS, key=lambda a: a.value)),
)
def test_override_properties(top1, margin, fp, rej, tok, budget, proposed):
    z = StateVector(
        top1_score=top1, score_margin=margin, historical_false_positive_rate=fp,
        session_rejection_count=rej, estimated_token_cost=tok, token_budget_remaining=budget,
    )
    chosen, reason = pc.safety_override(z, proposed)
    if rej >= 0.4 or (fp > 0.3 and margin < 0.15) or top1 < 0.35 or tok > budget:
        assert not chosen.injects_memory and reason is not None
    else:
        assert chosen is proposed and reason is None


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(0, 4), offset=st.floats(0, 10))
def test_decision_stays_inside_available_set(seed, n, offset):
    theta = _trained_state(seed, steps=10)
    z = StateVector.from_array(np.random.default_rng(seed).uniform(0, 1, 16))
    cands = _cands(n)
    d = pc.decide(z, cands, theta)
    assert d.proposed in pc.available_actions(cands)
    assert set(d.scores) == set(pc.available_actions(cands))
    assert pc.decide(z, cands, theta, lagrangian_offset=offset).chosen is d.chosen


# -- update ------------------------------------------------------------------


def test_update_running_means():
    theta = PolicyState()
    z = StateVector(top1_score=0.5)
    rewards = []
    for label in ("verified", "false_positive", "accepted"):
        o = Outcome.from_label(label)
        rewards.append(compute_reward(o))
        pc.update(theta, Action.TOP1_RESOLUTION, z, rewards[-1], o, session_id="s")
    i = ACTION_INDEX[Action.TOP1_RESOLUTION]
    assert theta.stats.n[i] == 3 and theta.total_feedback == 3
    assert theta.stats.q[i] == pytest.approx(sum(rewards) / 3)
    assert theta.stats.adoption[i] == pytest.approx(2 / 3)
    assert theta.stats.fp_rate[i] == pytest.approx(1 / 3)
    assert theta.stats.n_fp[i] == 1
    assert theta.rejections("s") == 1


def test_first_update_model_steps():
    theta = PolicyState()
    z = StateVector(top1_score=1.0)
    o = Outcome(false_positive=True)
    pc.update(theta, Action.TOP1_RESOLUTION, z, compute_reward(o), o)
    i = ACTION_INDEX[Action.TOP1_RESOLUTION]
    m = theta.models
    # b -= lr * (pred - target); g target is clamp(-4/4) = -1, h target is 1
    assert m.g_b[i] == pytest.approx(-0.05)
    assert m.h_b[i] == pytest.approx(0.05)
    # logistic residual sigmoid(0) - 1 = -0.5
    assert m.p_b == pytest.approx(0.025)


def test_non_injection_leaves_fp_model_alone():
    theta = PolicyState()
    o = Outcome(correct_abstain=True)
    pc.update(theta, Action.ABSTAIN, StateVector(top1_score=1.0), compute_reward(o), o, session_id="s")
    assert theta.models.p_b == 0.0 and not theta.models.p_w.any()
    assert theta.rejections("s") == 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), steps=st.integers(1, 40))
def test_update_invariants(seed, steps):
    theta = _trained_state(seed, steps)
    st_ = theta.stats
    assert st_.n.sum() == theta.total_feedback == steps
    assert np.all((st_.fp_rate >= 0) & (st_.fp_rate <= 1))
    assert np.all((st_.adoption >= 0) & (st_.adoption <= 1))
    assert np.all(st_.n_fp <= st_.n)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        w, x = rng.normal(0, 0.5, 16), rng.uniform(0, 1, 16)
        b, y = float(rng.normal()), float(rng.uniform(-1, 1))
        assert max_gradient_error(pc.squared_loss, pc.squared_loss_grad, w, b, x, y) < 1e-5
        assert max_gradient_error(logistic_loss, pc.logistic_loss_grad, w, b, x, float(rng.integers(2))) < 1e-5


def test_audit_dict_shape():
    d = pc.decide(StateVector(), [], PolicyState())
    row = d.to_audit_dict()
    assert row["chosen"] == "no_memory" and set(row["state"]) == set(FEATURE_NAMES)
    assert Knobs().mu == 2.0
