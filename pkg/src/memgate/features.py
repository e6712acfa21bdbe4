"""Fixed 16-feature controller state built from a query and its candidates."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .memory import MemoryBank
from .retrieval import Candidate, QueryProfile

EPSILON = 1e-6
COUNT_CAP = 10
LATENCY_CAP_MS = 1000.0
TOKEN_CAP = 2000.0
REJECTION_CAP = 5

# Injection actions by name; kept here to avoid importing the policy module.
INJECTION_ACTION_NAMES = (
    "top1_resolution",
    "top3_summary",
    "high_precision_retrieval",
    "high_recall_retrieval",
)


class EmptyScores(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    top1_score: float = 0.0
    top2_score: float = 0.0
    score_margin: float = 0.0
    candidate_entropy: float = 0.0
    candidate_count: float = 0.0
    family_confidence: float = 0.0
    entity_match_ratio: float = 0.0
    command_signature_match: float = 0.0
    path_signature_match: float = 0.0
    stack_signature_match: float = 0.0
    session_rejection_count: float = 0.0
    historical_acceptance_rate: float = 0.0
    historical_false_positive_rate: float = 0.0
    estimated_latency_ms: float = 0.0
    estimated_token_cost: float = 0.0
    token_budget_remaining: float = 1.0

    def as_array(self) -> np.ndarray:
        d = self.__dict__
        return np.array([d[name] for name in FEATURE_NAMES], dtype=float)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FEATURE_NAMES}

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "StateVector":
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(values)}")
        return cls(*(float(v) for v in values))

    def replace_feature(self, name: str, value: float) -> "StateVector":
        d = self.to_dict()
        d[name] = value
        return StateVector(**d)


FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in fields(StateVector))
assert len(FEATURE_NAMES) == 16


@dataclass(frozen=True)
class BudgetState:
    """Remaining context budget and per-action payload estimates (ms, tokens)."""

    token_budget_remaining: float = 1.0
    payload: Mapping[str, tuple[float, float]] | None = None

    def cheapest_injection(self) -> tuple[float, float]:
        if not self.payload:
            return (0.0, 0.0)
        options = [
            (self.payload[a][1], self.payload[a][0], i)
            for i, a in enumerate(INJECTION_ACTION_NAMES)
            if a in self.payload
        ]
        if not options:
            return (0.0, 0.0)
        tokens, ms, _ = min(options)
        return (ms, tokens)


def candidate_distribution(scores: Sequence[float], eps: float = EPSILON) -> list[float]:
    if not scores:
        raise EmptyScores("no candidate scores")
    if eps <= 0:
        raise ValueError("eps must be positive")
    shifted = [s + eps for s in scores]
    total = math.fsum(shifted)
    return [s / total for s in shifted]


def entropy(pi: Sequence[float]) -> float:
    return -math.fsum(p * math.log(p) for p in pi if p > 0.0)


def normalized_entropy(pi: Sequence[float]) -> float:
    return min(1.0, entropy(pi) / math.log(max(len(pi), 2)))


def margin(scores: Sequence[float]) -> float:
    if not scores:
        raise EmptyScores("no candidate scores")
    if len(scores) == 1:
        return scores[0]
    return scores[0] - scores[1]


def build_state(
    profile: QueryProfile,
    candidates: Sequence[Candidate],
    bank: MemoryBank,
    budget: BudgetState = BudgetState(),
) -> StateVector:
    ms, tokens = budget.cheapest_injection()
    tail = dict(
        session_rejection_count=min(profile.session_rejections, REJECTION_CAP) / REJECTION_CAP,
        estimated_latency_ms=min(ms, LATENCY_CAP_MS) / LATENCY_CAP_MS,
        estimated_token_cost=min(tokens, TOKEN_CAP) / TOKEN_CAP,
        token_budget_remaining=min(1.0, max(0.0, budget.token_budget_remaining)),
    )
    if not candidates:
        return StateVector(**tail)
    scores = [c.score for c in candidates]
    top = candidates[0]
    comps = top.component_scores
    record = bank.record(top.record_ref)
    return StateVector(
        top1_score=scores[0],
        top2_score=scores[1] if len(scores) > 1 else 0.0,
        score_margin=margin(scores),
        candidate_entropy=normalized_entropy(candidate_distribution(scores)),
        candidate_count=min(len(scores), COUNT_CAP) / COUNT_CAP,
        family_confidence=comps["family"],
        entity_match_ratio=comps["entity"],
        command_signature_match=comps["command"],
        path_signature_match=comps["path"],
        stack_signature_match=comps["stack"],
        historical_acceptance_rate=record.historical_acceptance_rate,
        historical_false_positive_rate=record.historical_false_positive_rate,
        **tail,
    )
