"""Risk-sensitive action scoring, safety overrides, and the decide/update loop.

The controller scores each available memory-control action with

    S(a) = Q(a) + rho*A(a) - mu*FP(a) - lambda_c*C(a)
           + w_u * sqrt(ln(N+2) / (N(a)+1))
           - w_r * sqrt(ln(N+2) / (Nfp(a)+1)) * p_fp(z)
           + g(a, z) - h(a, z)

takes the argmax (ties go to non-injection actions), then applies fixed
safety overrides that can only replace an injection with ``abstain`` or
``no_memory``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .features import FEATURE_NAMES, StateVector
from .retrieval import Candidate


class Action(str, Enum):
    NO_MEMORY = "no_memory"
    TOP1_RESOLUTION = "top1_resolution"
    TOP3_SUMMARY = "top3_summary"
    HIGH_PRECISION_RETRIEVAL = "high_precision_retrieval"
    HIGH_RECALL_RETRIEVAL = "high_recall_retrieval"
    ABSTAIN = "abstain"
    ASK_FEEDBACK = "ask_feedback"

    @property
    def injects_memory(self) -> bool:
        return self in INJECTION_ACTIONS


ACTIONS: tuple[Action, ...] = tuple(Action)
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}
INJECTION_ACTIONS = frozenset(
    {
        Action.TOP1_RESOLUTION,
        Action.TOP3_SUMMARY,
        Action.HIGH_PRECISION_RETRIEVAL,
        Action.HIGH_RECALL_RETRIEVAL,
    }
)
NON_INJECTION_ACTIONS = frozenset({Action.NO_MEMORY, Action.ABSTAIN, Action.ASK_FEEDBACK})

# Argmax ties resolve to the earliest action here.
TIE_BREAK_ORDER: tuple[Action, ...] = tuple(a for a in ACTIONS if not a.injects_memory) + tuple(
    a for a in ACTIONS if a.injects_memory
)

DEFAULT_COSTS: Mapping[Action, float] = {
    Action.NO_MEMORY: 0.0,
    Action.ABSTAIN: 0.02,
    Action.ASK_FEEDBACK: 0.05,
    Action.TOP1_RESOLUTION: 0.10,
    Action.HIGH_PRECISION_RETRIEVAL: 0.10,
    Action.HIGH_RECALL_RETRIEVAL: 0.25,
    Action.TOP3_SUMMARY: 0.30,
}

# Safety-override thresholds.
INJECT_SCORE_FLOOR = 0.35
FP_RATE_CEILING = 0.3
AMBIGUOUS_MARGIN = 0.15
REJECTION_FEATURE_LIMIT = 0.4  # two raw rejections after /5 normalization

DEFAULT_LEARNING_RATE = 0.05
N_FEATURES = len(FEATURE_NAMES)


# -- reward ------------------------------------------------------------------


class InvalidConfig(ValueError):
    pass


class ProbabilityOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 2.0  # verified
    beta: float = 1.0  # accepted
    kappa: float = 0.5  # correct abstain
    gamma: float = 4.0  # false positive
    delta: float = 1.0  # rejected
    eta: float = 0.001  # per ms latency
    lam: float = 0.01  # per token

    def __post_init__(self) -> None:
        if not (self.gamma > self.alpha > self.beta):
            raise InvalidConfig(
                f"reward ordering gamma > alpha > beta violated: "
                f"gamma={self.gamma}, alpha={self.alpha}, beta={self.beta}"
            )


OUTCOME_FLAGS = ("verified", "accepted", "correct_abstain", "false_positive", "rejected")


@dataclass(frozen=True)
class Outcome:
    verified: bool = False
    accepted: bool = False
    correct_abstain: bool = False
    false_positive: bool = False
    rejected: bool = False
    latency_ms: float = 0.0
    token_cost: float = 0.0

    def __post_init__(self) -> None:
        if sum(bool(getattr(self, f)) for f in OUTCOME_FLAGS) > 1:
            raise ValueError("outcome flags are mutually exclusive")
        if self.latency_ms < 0 or self.token_cost < 0:
            raise ValueError("latency and token cost must be nonnegative")

    @property
    def label(self) -> str:
        for f in OUTCOME_FLAGS:
            if getattr(self, f):
                return f
        return "none"

    @property
    def success(self) -> bool:
        return self.verified or self.accepted or self.correct_abstain

    @classmethod
    def from_label(cls, label: str, latency_ms: float = 0.0, token_cost: float = 0.0) -> "Outcome":
        if label != "none" and label not in OUTCOME_FLAGS:
            raise ValueError(f"unknown outcome label {label!r}")
        flags = {label: True} if label != "none" else {}
        return cls(latency_ms=latency_ms, token_cost=token_cost, **flags)

    def to_dict(self) -> dict:
        return {"label": self.label, "latency_ms": float(self.latency_ms), "token_cost": float(self.token_cost)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Outcome":
        return cls.from_label(d["label"], float(d["latency_ms"]), float(d["token_cost"]))


def compute_reward(outcome: Outcome, cfg: RewardConfig = RewardConfig()) -> float:
    return (
        cfg.alpha * outcome.verified
        + cfg.beta * outcome.accepted
        + cfg.kappa * outcome.correct_abstain
        - cfg.gamma * outcome.false_positive
        - cfg.delta * outcome.rejected
        - cfg.eta * outcome.latency_ms
        - cfg.lam * outcome.token_cost
    )


def expected_rewards(
    p_v: float, p_a: float, p_f: float, p_r: float, p_c: float, cfg: RewardConfig = RewardConfig()
) -> tuple[float, float, bool]:
    """Expected reward of injecting versus abstaining, latency and tokens ignored.

    Returns ``(E_inject, E_abstain, abstain_dominates)``.
    """
    for name, p in (("p_v", p_v), ("p_a", p_a), ("p_f", p_f), ("p_r", p_r), ("p_c", p_c)):
        if not 0.0 <= p <= 1.0:
            raise ProbabilityOutOfRange(f"{name}={p}")
    e_inject = cfg.alpha * p_v + cfg.beta * p_a - cfg.gamma * p_f - cfg.delta * p_r
    e_abstain = cfg.kappa * p_c
    return e_inject, e_abstain, e_abstain > e_inject


def lagrangian_score(
    a: Action,
    z: StateVector | None,
    reward_hat: float,
    p_fp_hat: float,
    cost_hat: float,
    mu: float,
    lambda_c: float,
) -> float:
    """Basic risk-regularized score R - mu*p_fp - lambda_c*c with caller estimates."""
    if mu < 0 or lambda_c < 0:
        raise ValueError("multipliers must be nonnegative")
    return reward_hat - mu * p_fp_hat - lambda_c * cost_hat


# -- policy state ------------------------------------------------------------


@dataclass(frozen=True)
class Knobs:
    rho: float = 0.5
    mu: float = 2.0
    lambda_c: float = 0.1
    w_u: float = 0.5
    w_r: float = 0.5


@dataclass
class ActionStats:
    n: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))
    q: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))
    adoption: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))
    fp_rate: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))
    n_fp: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))


@dataclass
class ContextModels:
    """Per-action linear reward (g) and risk (h) models, plus a shared logistic fp model."""

    g_w: np.ndarray = field(default_factory=lambda: np.zeros((len(ACTIONS), N_FEATURES)))
    g_b: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))
    h_w: np.ndarray = field(default_factory=lambda: np.zeros((len(ACTIONS), N_FEATURES)))
    h_b: np.ndarray = field(default_factory=lambda: np.zeros(len(ACTIONS)))
    p_w: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    p_b: float = 0.0
    learning_rate: float = DEFAULT_LEARNING_RATE

    def g(self, x: np.ndarray) -> np.ndarray:
        return _clamp_unit(self.g_w @ x + self.g_b)

    def h(self, x: np.ndarray) -> np.ndarray:
        return _clamp_unit(self.h_w @ x + self.h_b)

    def p_fp(self, x: np.ndarray) -> float:
        return _logistic(float(self.p_w @ x + self.p_b))


@dataclass
class PolicyState:
    stats: ActionStats = field(default_factory=ActionStats)
    models: ContextModels = field(default_factory=ContextModels)
    total_feedback: int = 0
    session_rejections: dict[str, int] = field(default_factory=dict)
    costs: np.ndarray = field(
        default_factory=lambda: np.array([DEFAULT_COSTS[a] for a in ACTIONS], dtype=float)
    )

    def rejections(self, session_id: str) -> int:
        return self.session_rejections.get(session_id, 0)


@dataclass(frozen=True)
class Decision:
    chosen: Action
    scores: Mapping[Action, float]
    overridden: bool = False
    override_reason: str | None = None
    state_snapshot: StateVector | None = None
    proposed: Action | None = None

    def to_audit_dict(self) -> dict:
        return {
            "chosen": self.chosen.value,
            "proposed": (self.proposed or self.chosen).value,
            "overridden": self.overridden,
            "override_reason": self.override_reason,
            "scores": {a.value: float(s) for a, s in self.scores.items()},
            "state": self.state_snapshot.to_dict() if self.state_snapshot is not None else None,
        }


def _clamp_unit(v: np.ndarray) -> np.ndarray:
    # np.clip carries noticeable per-call overhead on 7-element vectors
    return np.minimum(np.maximum(v, -1.0), 1.0)


def _logistic(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


# -- decision ----------------------------------------------------------------


def available_actions(candidates: Sequence[Candidate], theta: PolicyState | None = None) -> frozenset[Action]:
    avail = set(NON_INJECTION_ACTIONS)
    if len(candidates) >= 1:
        avail |= {Action.TOP1_RESOLUTION, Action.HIGH_PRECISION_RETRIEVAL, Action.HIGH_RECALL_RETRIEVAL}
    if len(candidates) >= 2:
        avail.add(Action.TOP3_SUMMARY)
    return frozenset(avail)


def full_score(
    a: Action,
    z: StateVector,
    theta: PolicyState,
    knobs: Knobs = Knobs(),
    use_context_models: bool = True,
) -> float:
    """Score of a single action; scalar reference for :func:`full_scores`."""
    i = ACTION_INDEX[a]
    st, m = theta.stats, theta.models
    x = z.as_array()
    log_term = math.log(theta.total_feedback + 2)
    s = (
        st.q[i]
        + knobs.rho * st.adoption[i]
        - knobs.mu * st.fp_rate[i]
        - knobs.lambda_c * theta.costs[i]
        + knobs.w_u * math.sqrt(log_term / (st.n[i] + 1))
    )
    if use_context_models:
        g = min(1.0, max(-1.0, float(m.g_w[i] @ x + m.g_b[i])))
        h = min(1.0, max(-1.0, float(m.h_w[i] @ x + m.h_b[i])))
        s += -knobs.w_r * math.sqrt(log_term / (st.n_fp[i] + 1)) * m.p_fp(x) + g - h
    return float(s)


def full_scores(
    z: StateVector,
    theta: PolicyState,
    knobs: Knobs = Knobs(),
    use_context_models: bool = True,
) -> np.ndarray:
    """Vector of :func:`full_score` over all actions in enumeration order."""
    st = theta.stats
    log_term = math.log(theta.total_feedback + 2)
    s = (
        st.q
        + knobs.rho * st.adoption
        - knobs.mu * st.fp_rate
        - knobs.lambda_c * theta.costs
        + knobs.w_u * np.sqrt(log_term / (st.n + 1))
    )
    if use_context_models:
        m = theta.models
        x = z.as_array()
        s = s - knobs.w_r * np.sqrt(log_term / (st.n_fp + 1)) * m.p_fp(x) + m.g(x) - m.h(x)
    return s


def argmax_action(scores: Mapping[Action, float]) -> Action:
    best: Action | None = None
    for a in TIE_BREAK_ORDER:
        if a in scores and (best is None or scores[a] > scores[best]):
            best = a
    if best is None:
        raise ValueError("no actions to choose from")
    return best


def safety_override(
    z: StateVector, proposed: Action, theta: PolicyState | None = None
) -> tuple[Action, str | None]:
    if not proposed.injects_memory:
        return proposed, None
    if z.session_rejection_count >= REJECTION_FEATURE_LIMIT:
        return Action.ABSTAIN, "session_rejections"
    if z.historical_false_positive_rate > FP_RATE_CEILING and z.score_margin < AMBIGUOUS_MARGIN:
        return Action.ABSTAIN, "ambiguous_high_fp_history"
    if z.top1_score < INJECT_SCORE_FLOOR:
        return Action.NO_MEMORY, "low_top1_score"
    if z.estimated_token_cost > z.token_budget_remaining:
        return Action.NO_MEMORY, "token_budget"
    return proposed, None


def decide(
    z: StateVector,
    candidates: Sequence[Candidate],
    theta: PolicyState,
    knobs: Knobs = Knobs(),
    *,
    use_context_models: bool = True,
    use_overrides: bool = True,
    available: frozenset[Action] | None = None,
    lagrangian_offset: float = 0.0,
) -> Decision:
    """Choose the memory-control action for state ``z``.

    ``lagrangian_offset`` is added to every action score; it models the
    constant ``mu*eps + lambda_c*b`` of the constrained form and never changes
    the choice.
    """
    avail = available_actions(candidates, theta) if available is None else available
    vec = full_scores(z, theta, knobs, use_context_models)
    scores = {a: float(vec[ACTION_INDEX[a]]) + lagrangian_offset for a in ACTIONS if a in avail}
    proposed = argmax_action(scores)
    chosen, reason = proposed, None
    if use_overrides:
        chosen, reason = safety_override(z, proposed, theta)
    return Decision(
        chosen=chosen,
        scores=scores,
        overridden=chosen is not proposed,
        override_reason=reason,
        state_snapshot=z,
        proposed=proposed,
    )


# -- update ------------------------------------------------------------------


def squared_loss(w: np.ndarray, b: float, x: np.ndarray, y: float) -> float:
    """Half squared error of the unclamped linear prediction."""
    r = float(w @ x + b) - y
    return 0.5 * r * r


def squared_loss_grad(w: np.ndarray, b: float, x: np.ndarray, y: float) -> tuple[np.ndarray, float]:
    r = float(w @ x + b) - y
    return r * x, r


def logistic_loss_grad(w: np.ndarray, b: float, x: np.ndarray, y: float) -> tuple[np.ndarray, float]:
    r = _logistic(float(w @ x + b)) - y
    return r * x, r


def update(
    theta: PolicyState,
    a: Action,
    z: StateVector,
    r: float,
    outcome: Outcome,
    cfg: RewardConfig = RewardConfig(),
    session_id: str | None = None,
) -> PolicyState:
    """Fold one feedback observation into ``theta`` in place and return it."""
    i = ACTION_INDEX[a]
    st, m = theta.stats, theta.models
    fp = 1.0 if outcome.false_positive else 0.0
    adopted = 1.0 if (outcome.verified or outcome.accepted) else 0.0

    theta.total_feedback += 1
    st.n[i] += 1
    n = st.n[i]
    st.q[i] += (r - st.q[i]) / n
    st.adoption[i] += (adopted - st.adoption[i]) / n
    st.fp_rate[i] += (fp - st.fp_rate[i]) / n
    st.n_fp[i] += fp

    x = z.as_array()
    lr = m.learning_rate
    target = min(1.0, max(-1.0, r / cfg.gamma))
    gw, gb = squared_loss_grad(m.g_w[i], m.g_b[i], x, target)
    m.g_w[i] -= lr * gw
    m.g_b[i] -= lr * gb
    hw, hb = squared_loss_grad(m.h_w[i], m.h_b[i], x, fp)
    m.h_w[i] -= lr * hw
    m.h_b[i] -= lr * hb
    if a.injects_memory:
        pw, pb = logistic_loss_grad(m.p_w, m.p_b, x, fp)
        m.p_w -= lr * pw
        m.p_b -= lr * pb

    if session_id is not None and (outcome.rejected or outcome.false_positive):
        theta.session_rejections[session_id] = theta.session_rejections.get(session_id, 0) + 1
    return theta
