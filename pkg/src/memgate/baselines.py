"""Comparison policies behind one decide/update interface.

Every policy exposes ``decide(z, candidates, event=None) -> Decision`` and
``update(action, z, outcome, reward, session_id)``. All of them also keep a
:class:`~memgate.policy.PolicyState` so per-session rejection counts and
action statistics are tracked identically.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Mapping, Protocol, Sequence

import numpy as np

from . import policy as pc
from .features import FEATURE_NAMES, StateVector
from .policy import Action, Decision, Knobs, Outcome, PolicyState, RewardConfig
from .retrieval import CHANNEL_WEIGHTS, LEXICAL_ONLY_WEIGHTS, Candidate
from .rng import Lcg64

ABSTENTION_THRESHOLD = 0.55
EPSILON_EXPLORATION = 0.1
LINUCB_RIDGE = 1.0
LINUCB_WIDTH = 0.5


class PolicyKind(str, Enum):
    LEXICAL_ONLY = "lexical_only"
    STATIC_HYBRID = "static_hybrid"
    STATIC_HYBRID_WITH_ABSTENTION = "static_hybrid_with_abstention"
    EPSILON_GREEDY = "epsilon_greedy"
    UCB1 = "ucb1"
    THOMPSON = "thompson"
    LINUCB = "linucb"
    RISK_SENSITIVE_THOMPSON = "risk_sensitive_thompson"
    FULL_RSCB_MC = "full_rscb_mc"
    ORACLE_UPPER_BOUND = "oracle_upper_bound"


class UnknownKind(ValueError):
    pass


class HasOracle(Protocol):
    oracle_action: Action


def _ordered(avail) -> list[Action]:
    return [a for a in pc.TIE_BREAK_ORDER if a in avail]


class Policy:
    """Base class: bookkeeping shared by every policy."""

    kind: PolicyKind
    retrieval_weights: Mapping[str, float] = CHANNEL_WEIGHTS

    def __init__(self, seed: int = 0, cfg: RewardConfig = RewardConfig()) -> None:
        self.seed = seed
        self.cfg = cfg
        self.rng = Lcg64(seed)
        self.theta = PolicyState()

    def session_rejections(self, session_id: str) -> int:
        return self.theta.rejections(session_id)

    def decide(
        self, z: StateVector, candidates: Sequence[Candidate], event: HasOracle | None = None
    ) -> Decision:
        raise NotImplementedError

    def update(
        self,
        action: Action,
        z: StateVector,
        outcome: Outcome,
        reward: float | None = None,
        session_id: str | None = None,
    ) -> None:
        r = pc.compute_reward(outcome, self.cfg) if reward is None else reward
        pc.update(self.theta, action, z, r, outcome, self.cfg, session_id)

    def _decision(self, chosen: Action, scores: Mapping[Action, float], z: StateVector) -> Decision:
        return Decision(chosen=chosen, scores=dict(scores), state_snapshot=z, proposed=chosen)


class StaticInject(Policy):
    """Always injects the top candidate when one exists."""

    def __init__(self, kind: PolicyKind, seed: int = 0, cfg: RewardConfig = RewardConfig()) -> None:
        super().__init__(seed, cfg)
        self.kind = kind
        if kind is PolicyKind.LEXICAL_ONLY:
            self.retrieval_weights = LEXICAL_ONLY_WEIGHTS

    def decide(self, z, candidates, event=None):
        chosen = Action.TOP1_RESOLUTION if candidates else Action.NO_MEMORY
        return self._decision(chosen, {}, z)


class StaticWithAbstention(Policy):
    kind = PolicyKind.STATIC_HYBRID_WITH_ABSTENTION

    def decide(self, z, candidates, event=None):
        if candidates and candidates[0].score >= ABSTENTION_THRESHOLD:
            chosen = Action.TOP1_RESOLUTION
        else:
            chosen = Action.ABSTAIN
        return self._decision(chosen, {}, z)


class EpsilonGreedy(Policy):
    kind = PolicyKind.EPSILON_GREEDY

    def __init__(self, seed=0, cfg=RewardConfig(), epsilon: float = EPSILON_EXPLORATION) -> None:
        super().__init__(seed, cfg)
        self.epsilon = epsilon

    def decide(self, z, candidates, event=None):
        avail = _ordered(pc.available_actions(candidates))
        q = self.theta.stats.q
        scores = {a: float(q[pc.ACTION_INDEX[a]]) for a in avail}
        if self.rng.random() < self.epsilon:
            chosen = self.rng.choice(avail)
        else:
            chosen = pc.argmax_action(scores)
        return self._decision(chosen, scores, z)


class Ucb1(Policy):
    kind = PolicyKind.UCB1

    def decide(self, z, candidates, event=None):
        avail = _ordered(pc.available_actions(candidates))
        st = self.theta.stats
        untried = [a for a in avail if st.n[pc.ACTION_INDEX[a]] == 0]
        if untried:
            chosen = untried[0]
            scores = {a: (math.inf if a in untried else float(st.q[pc.ACTION_INDEX[a]])) for a in avail}
            return self._decision(chosen, scores, z)
        total = self.theta.total_feedback
        scores = {}
        for a in avail:
            i = pc.ACTION_INDEX[a]
            scores[a] = float(st.q[i] + math.sqrt(2.0 * math.log(total) / st.n[i]))
        return self._decision(pc.argmax_action(scores), scores, z)


class Thompson(Policy):
    kind = PolicyKind.THOMPSON

    def _samples(self, avail: list[Action]) -> dict[Action, float]:
        st = self.theta.stats
        out = {}
        for a in avail:
            i = pc.ACTION_INDEX[a]
            out[a] = self.rng.gauss(float(st.q[i]), math.sqrt(1.0 / (st.n[i] + 1)))
        return out

    def decide(self, z, candidates, event=None):
        avail = _ordered(pc.available_actions(candidates))
        scores = self._samples(avail)
        return self._decision(pc.argmax_action(scores), scores, z)


class RiskSensitiveThompson(Thompson):
    kind = PolicyKind.RISK_SENSITIVE_THOMPSON

    def __init__(self, seed=0, cfg=RewardConfig(), knobs: Knobs = Knobs()) -> None:
        super().__init__(seed, cfg)
        self.knobs = knobs

    def decide(self, z, candidates, event=None):
        avail = _ordered(pc.available_actions(candidates))
        fp = self.theta.stats.fp_rate
        scores = {
            a: s - self.knobs.mu * float(fp[pc.ACTION_INDEX[a]]) for a, s in self._samples(avail).items()
        }
        proposed = pc.argmax_action(scores)
        chosen, reason = pc.safety_override(z, proposed, self.theta)
        return Decision(
            chosen=chosen,
            scores=scores,
            overridden=chosen is not proposed,
            override_reason=reason,
            state_snapshot=z,
            proposed=proposed,
        )


class LinUcb(Policy):
    """Disjoint LinUCB over the 16-feature state, refit at every decision."""

    kind = PolicyKind.LINUCB

    def __init__(self, seed=0, cfg=RewardConfig(), ridge: float = LINUCB_RIDGE, width: float = LINUCB_WIDTH):
        super().__init__(seed, cfg)
        d = len(FEATURE_NAMES)
        self.width = width
        self.A = np.stack([ridge * np.eye(d) for _ in pc.ACTIONS])
        self.b = np.zeros((len(pc.ACTIONS), d))

    def decide(self, z, candidates, event=None):
        avail = _ordered(pc.available_actions(candidates))
        x = z.as_array()
        scores = {}
        for a in avail:
            i = pc.ACTION_INDEX[a]
            a_inv = np.linalg.inv(self.A[i])
            w = a_inv @ self.b[i]
            scores[a] = float(w @ x + self.width * math.sqrt(max(0.0, float(x @ a_inv @ x))))
        return self._decision(pc.argmax_action(scores), scores, z)

    def update(self, action, z, outcome, reward=None, session_id=None):
        r = pc.compute_reward(outcome, self.cfg) if reward is None else reward
        super().update(action, z, outcome, r, session_id)
        i = pc.ACTION_INDEX[action]
        x = z.as_array()
        self.A[i] += np.outer(x, x)
        self.b[i] += r * x


class FullController(Policy):
    """The risk-sensitive contextual controller, with switches used by ablations."""

    kind = PolicyKind.FULL_RSCB_MC

    def __init__(
        self,
        seed: int = 0,
        cfg: RewardConfig = RewardConfig(),
        knobs: Knobs = Knobs(),
        *,
        use_context_models: bool = True,
        use_overrides: bool = True,
        allow_non_injection: bool = True,
        zero_features: tuple[str, ...] = (),
    ) -> None:
        super().__init__(seed, cfg)
        self.knobs = knobs
        self.use_context_models = use_context_models
        self.use_overrides = use_overrides
        self.allow_non_injection = allow_non_injection
        for name in zero_features:
            if name not in FEATURE_NAMES:
                raise ValueError(f"unknown feature {name!r}")
        self.zero_features = zero_features

    def _mask(self, z: StateVector) -> StateVector:
        for name in self.zero_features:
            z = z.replace_feature(name, 0.0)
        return z

    def decide(self, z, candidates, event=None):
        z = self._mask(z)
        available = None
        if not self.allow_non_injection:
            available = pc.available_actions(candidates) & pc.INJECTION_ACTIONS or frozenset({Action.NO_MEMORY})
        return pc.decide(
            z,
            candidates,
            self.theta,
            self.knobs,
            use_context_models=self.use_context_models,
            use_overrides=self.use_overrides,
            available=available,
        )

    def update(self, action, z, outcome, reward=None, session_id=None):
        super().update(action, self._mask(z), outcome, reward, session_id)


class Oracle(Policy):
    kind = PolicyKind.ORACLE_UPPER_BOUND

    def decide(self, z, candidates, event=None):
        if event is None:
            raise ValueError("the oracle needs an event carrying oracle_action")
        return self._decision(event.oracle_action, {}, z)


def create_policy(kind: PolicyKind | str, seed: int = 0, cfg: RewardConfig = RewardConfig()) -> Policy:
    try:
        kind = PolicyKind(kind)
    except ValueError:
        raise UnknownKind(f"unknown policy kind {kind!r}") from None
    if kind in (PolicyKind.LEXICAL_ONLY, PolicyKind.STATIC_HYBRID):
        return StaticInject(kind, seed, cfg)
    factories = {
        PolicyKind.STATIC_HYBRID_WITH_ABSTENTION: StaticWithAbstention,
        PolicyKind.EPSILON_GREEDY: EpsilonGreedy,
        PolicyKind.UCB1: Ucb1,
        PolicyKind.THOMPSON: Thompson,
        PolicyKind.LINUCB: LinUcb,
        PolicyKind.RISK_SENSITIVE_THOMPSON: RiskSensitiveThompson,
        PolicyKind.FULL_RSCB_MC: FullController,
        PolicyKind.ORACLE_UPPER_BOUND: Oracle,
    }
    return factories[kind](seed, cfg)
