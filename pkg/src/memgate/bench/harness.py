"""Experiment suites over a generated dataset.

Every suite is a pure function of the dataset, the seeds, and the reward
configuration, except :func:`run_hotpath`, whose timings depend on the host.
"""

from __future__ import annotations

import gc
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence

from ..baselines import FullController, Oracle, Policy, PolicyKind, StaticInject, create_policy
from ..features import BudgetState, build_state
from ..memory import MemoryBank
from ..policy import (
    INJECTION_ACTIONS,
    Action,
    InvalidConfig,
    Knobs,
    Outcome,
    RewardConfig,
    compute_reward,
    safety_override,
)
from ..retrieval import (
    CHANNEL_WEIGHTS,
    DEFAULT_K,
    LEXICAL_ONLY_WEIGHTS,
    Candidate,
    RawContext,
    normalize,
    retrieve,
    score_all,
)
from .generate import (
    BUDGET_MODES,
    ContextBudgetCase,
    Dataset,
    HardNegativeCase,
    QueryCase,
    ReplayEvent,
    STATIC_ABSTAIN_THRESHOLD,
)

HOTPATH_DECISIONS = 200
HOTPATH_WARMUP = 20
BUDGET_TOKEN_COST = 0.0001
BUDGET_LATENCY_COST = 0.001


class EmptyQuerySet(ValueError):
    pass


class MissingOutcome(KeyError):
    def __init__(self, event_id: str, action: Action) -> None:
        super().__init__(f"event {event_id} has no outcome for {action.value}")
        self.event_id = event_id
        self.action = action


class UnknownVariant(ValueError):
    pass


# -- retrieval ---------------------------------------------------------------


class RetrievalMethod(str, Enum):
    LEXICAL_ONLY = "lexical_only"
    STATIC_HYBRID = "static_hybrid"
    STATIC_HYBRID_WITH_ABSTENTION = "static_hybrid_with_abstention"
    FULL_SYSTEM = "full_system"
    ORACLE_UPPER_BOUND = "oracle_upper_bound"


@dataclass(frozen=True)
class RetrievalMetrics:
    recall_at_1: float
    recall_at_3: float
    mrr: float
    ndcg_at_3: float
    top1_accuracy: float
    n_queries: int


def metrics_from_ranks(ranks: Sequence[int | None]) -> RetrievalMetrics:
    """Aggregate 1-based gold ranks (``None`` when the gold was not returned)."""
    n = len(ranks)
    if n == 0:
        raise EmptyQuerySet("no queries to evaluate")
    r1 = sum(1 for r in ranks if r is not None and r <= 1) / n
    r3 = sum(1 for r in ranks if r is not None and r <= 3) / n
    mrr = math.fsum(1.0 / r for r in ranks if r is not None) / n
    ndcg = math.fsum(1.0 / math.log2(r + 1) for r in ranks if r is not None and r <= 3) / n
    return RetrievalMetrics(r1, r3, mrr, ndcg, r1, n)


def ranked_candidates(
    method: RetrievalMethod | str, q: QueryCase, bank: MemoryBank, k: int = DEFAULT_K
) -> list[Candidate]:
    """The candidate list a retrieval method hands downstream (empty when it abstains)."""
    method = RetrievalMethod(method)
    profile = normalize(q.raw)
    if method is RetrievalMethod.LEXICAL_ONLY:
        return retrieve(profile, bank, weights=LEXICAL_ONLY_WEIGHTS)[:k]
    cands = retrieve(profile, bank)[:k]
    if method is RetrievalMethod.STATIC_HYBRID_WITH_ABSTENTION:
        return cands if cands and cands[0].score >= STATIC_ABSTAIN_THRESHOLD else []
    if method is RetrievalMethod.FULL_SYSTEM:
        z = build_state(profile, cands, bank)
        final, _ = safety_override(z, Action.TOP1_RESOLUTION)
        return cands if final is Action.TOP1_RESOLUTION else []
    if method is RetrievalMethod.ORACLE_UPPER_BOUND:
        gold = next(c for c in score_all(profile, bank) if c.record_ref == q.gold_pattern_id)
        rest = [c for c in cands if c.record_ref != q.gold_pattern_id]
        return ([gold] + rest)[:k]
    return cands


def gold_rank(cands: Sequence[Candidate], gold: str) -> int | None:
    for i, c in enumerate(cands, start=1):
        if c.record_ref == gold:
            return i
    return None


def eval_retrieval(method: RetrievalMethod | str, queries: Sequence[QueryCase], bank: MemoryBank) -> RetrievalMetrics:
    if not queries:
        raise EmptyQuerySet("no queries to evaluate")
    return metrics_from_ranks([gold_rank(ranked_candidates(method, q, bank), q.gold_pattern_id) for q in queries])


# -- replay ------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayMetrics:
    success_rate: float
    fp_rate: float
    abstention_rate: float
    verified_reuse_rate: float
    correct_abstention_rate: float
    avg_reward: float
    cumulative_reward: float
    regret_proxy: float
    n_events: int
    n_success: int
    n_fp: int
    n_rejected: int
    n_wrong_abstain: int


@dataclass
class _Tally:
    rewards: list[float] = field(default_factory=list)
    success: int = 0
    fp: int = 0
    rejected: int = 0
    wrong_abstain: int = 0
    non_injection: int = 0
    verified: int = 0
    correct_abstain: int = 0

    def add(self, action: Action, outcome: Outcome, reward: float) -> None:
        self.rewards.append(reward)
        if outcome.success:
            self.success += 1
        elif outcome.false_positive:
            self.fp += 1
        elif outcome.rejected:
            self.rejected += 1
        else:
            self.wrong_abstain += 1
        self.verified += outcome.verified
        self.correct_abstain += outcome.correct_abstain
        self.non_injection += not action.injects_memory

    def metrics(self, oracle_cumulative: float) -> ReplayMetrics:
        n = len(self.rewards)
        cum = math.fsum(self.rewards)
        return ReplayMetrics(
            success_rate=self.success / n,
            fp_rate=self.fp / n,
            abstention_rate=self.non_injection / n,
            verified_reuse_rate=self.verified / n,
            correct_abstention_rate=self.correct_abstain / n,
            avg_reward=cum / n,
            cumulative_reward=cum,
            regret_proxy=oracle_cumulative - cum,
            n_events=n,
            n_success=self.success,
            n_fp=self.fp,
            n_rejected=self.rejected,
            n_wrong_abstain=self.wrong_abstain,
        )


PolicyFactory = Callable[[int, RewardConfig], Policy]


def _factory(kind: PolicyKind | str | PolicyFactory) -> PolicyFactory:
    if callable(kind) and not isinstance(kind, (str, Enum)):
        return kind
    return lambda seed, cfg: create_policy(kind, seed, cfg)


def _prepare(policy: Policy, raw: RawContext, session_id: str, bank: MemoryBank, budget: BudgetState):
    profile = normalize(raw, session_rejections=policy.session_rejections(session_id))
    cands = retrieve(profile, bank, weights=policy.retrieval_weights)
    return cands, build_state(profile, cands, bank, budget)


def replay_seed(
    kind: PolicyKind | str | PolicyFactory,
    dataset: Dataset,
    seed: int,
    cfg: RewardConfig = RewardConfig(),
    audit: list | None = None,
) -> tuple[_Tally, list[Action]]:
    policy = _factory(kind)(seed, cfg)
    tally = _Tally()
    chosen: list[Action] = []
    for ev in dataset.events_for(seed):
        raw = dataset.lookup_raw(ev.source, ev.query_id)
        cands, z = _prepare(policy, raw, ev.session_id, dataset.bank, ev.budget())
        d = policy.decide(z, cands, ev)
        if d.chosen not in ev.outcome_per_action:
            raise MissingOutcome(ev.event_id, d.chosen)
        outcome = ev.outcome_per_action[d.chosen]
        r = compute_reward(outcome, cfg)
        policy.update(d.chosen, z, outcome, r, ev.session_id)
        tally.add(d.chosen, outcome, r)
        chosen.append(d.chosen)
        if audit is not None:
            audit.append(dict(d.to_audit_dict(), event_id=ev.event_id, seed=seed, reward=r, outcome=outcome.label))
    return tally, chosen


def _oracle_cumulative(dataset: Dataset, seed: int, cfg: RewardConfig) -> float:
    return math.fsum(compute_reward(ev.outcome_per_action[ev.oracle_action], cfg) for ev in dataset.events_for(seed))


def run_replay(
    kind: PolicyKind | str | PolicyFactory,
    dataset: Dataset,
    seeds: Iterable[int] | None = None,
    cfg: RewardConfig = RewardConfig(),
    audit: list | None = None,
) -> dict:
    """Replay metrics per seed plus a ``"pooled"`` entry (event-weighted)."""
    seeds = list(dataset.replay_seeds if seeds is None else seeds)
    out: dict = {}
    pooled = _Tally()
    oracle_total = 0.0
    for s in seeds:
        tally, _ = replay_seed(kind, dataset, s, cfg, audit)
        if not tally.rewards:
            raise EmptyQuerySet(f"no replay events for seed {s}")
        oc = _oracle_cumulative(dataset, s, cfg)
        out[s] = tally.metrics(oc)
        oracle_total += oc
        pooled.rewards += tally.rewards
        for f in ("success", "fp", "rejected", "wrong_abstain", "non_injection", "verified", "correct_abstain"):
            setattr(pooled, f, getattr(pooled, f) + getattr(tally, f))
    out["pooled"] = pooled.metrics(oracle_total)
    return out


# -- hard negatives and abstention ------------------------------------------


@dataclass(frozen=True)
class SafetyMetrics:
    false_positive_rate: float
    unsafe_injection_rate: float
    correct_abstention_rate: float
    wrong_abstention_rate: float
    n_cases: int


@dataclass(frozen=True)
class _Probe:
    oracle_action: Action


def _hard_negative_outcome(action: Action, top_family, true_family) -> Outcome:
    if not action.injects_memory:
        return Outcome(correct_abstain=True)
    if top_family is not true_family:
        return Outcome(false_positive=True)
    return Outcome(rejected=True)


def run_hard_negative(
    kind: PolicyKind | str | PolicyFactory,
    cases: Sequence[HardNegativeCase],
    bank: MemoryBank,
    seed: int = 0,
    cfg: RewardConfig = RewardConfig(),
) -> SafetyMetrics:
    """Safety on must-not-inject cases; the policy learns online across cases."""
    policy = _factory(kind)(seed, cfg)
    fp = unsafe = 0
    for case in cases:
        cands, z = _prepare(policy, case.raw, case.raw.session_id, bank, BudgetState())
        d = policy.decide(z, cands, _Probe(Action.ABSTAIN))
        top_family = bank.record(cands[0].record_ref).pattern.family if cands else None
        if d.chosen.injects_memory:
            unsafe += 1
            fp += top_family is not case.confusable_with
        outcome = _hard_negative_outcome(d.chosen, top_family, case.confusable_with)
        policy.update(d.chosen, z, outcome, None, case.raw.session_id)
    n = len(cases)
    if n == 0:
        raise EmptyQuerySet("no hard-negative cases")
    return SafetyMetrics(fp / n, unsafe / n, (n - unsafe) / n, 0.0, n)


@dataclass(frozen=True)
class AbstentionMetrics:
    answer_rate: float
    risk_rate: float
    correct_abstention_rate: float
    wrong_abstention_rate: float
    n_cases: int


def run_abstention(
    kind: PolicyKind | str | PolicyFactory,
    dataset: Dataset,
    seed: int = 0,
    cfg: RewardConfig = RewardConfig(),
) -> AbstentionMetrics:
    """Hard negatives (must abstain) followed by canonical queries (should answer)."""
    bank = dataset.bank
    policy = _factory(kind)(seed, cfg)
    answered = risky = correct_abs = wrong_abs = 0
    items: list[tuple[RawContext, bool, object]] = [(h.raw, False, h) for h in dataset.hard_negatives]
    items += [(q.raw, True, q) for q in dataset.queries]
    for raw, answerable, case in items:
        cands, z = _prepare(policy, raw, raw.session_id, bank, BudgetState())
        d = policy.decide(z, cands, _Probe(Action.TOP1_RESOLUTION if answerable else Action.ABSTAIN))
        top = bank.record(cands[0].record_ref) if cands else None
        if d.chosen.injects_memory:
            answered += 1
            if answerable:
                ok = top is not None and top.pattern_id == case.gold_pattern_id
                outcome = Outcome(verified=True) if ok else Outcome(false_positive=True)
            else:
                outcome = _hard_negative_outcome(d.chosen, top.pattern.family if top else None, case.confusable_with)
            risky += outcome.false_positive
        elif answerable:
            wrong_abs += 1
            outcome = Outcome()
        else:
            correct_abs += 1
            outcome = Outcome(correct_abstain=True)
        policy.update(d.chosen, z, outcome, None, raw.session_id)
    n = len(items)
    return AbstentionMetrics(answered / n, risky / n, correct_abs / n, wrong_abs / n, n)


# -- ablations ---------------------------------------------------------------


ABLATION_VARIANTS = (
    "full",
    "minus_family_features",
    "minus_entity_features",
    "minus_abstention",
    "minus_contextual_bandit",
    "minus_risk_objective",
    "static_hybrid_only",
    "oracle",
)


def ablation_factory(variant: str) -> PolicyFactory:
    base = Knobs()
    makers: dict[str, PolicyFactory] = {
        "full": lambda s, c: FullController(s, c),
        "minus_family_features": lambda s, c: FullController(s, c, zero_features=("family_confidence",)),
        "minus_entity_features": lambda s, c: FullController(s, c, zero_features=("entity_match_ratio",)),
        "minus_abstention": lambda s, c: FullController(s, c, allow_non_injection=False, use_overrides=False),
        "minus_contextual_bandit": lambda s, c: FullController(s, c, use_context_models=False),
        "minus_risk_objective": lambda s, c: FullController(
            s, c, Knobs(base.rho, 0.0, base.lambda_c, base.w_u, 0.0), use_overrides=False
        ),
        "static_hybrid_only": lambda s, c: StaticInject(PolicyKind.STATIC_HYBRID, s, c),
        "oracle": lambda s, c: Oracle(s, c),
    }
    if variant not in makers:
        raise UnknownVariant(f"unknown ablation variant {variant!r}")
    return makers[variant]


@dataclass(frozen=True)
class AblationResult:
    replay: Mapping
    safety: SafetyMetrics


def run_ablation(variant: str, dataset: Dataset, seeds: Iterable[int] | None = None) -> AblationResult:
    factory = ablation_factory(variant)
    seeds = list(dataset.replay_seeds if seeds is None else seeds)
    replay = run_replay(factory, dataset, seeds)
    safety = run_hard_negative(factory, dataset.hard_negatives, dataset.bank, seeds[0])
    return AblationResult(replay, safety)


# -- reward sweep ------------------------------------------------------------


SWEEP_GAMMAS = (1.0, 2.5, 4.0, 8.0)
SWEEP_BETAS = (0.5, 1.0)
SWEEP_KAPPAS = (0.5, 1.0)
SWEEP_LAMBDAS = (0.0, 0.01)
DEFAULT_ALPHA = 2.0
LOW_GAMMA_ALPHA = 0.75  # keeps gamma > alpha when gamma = 1


def _tag(x: float) -> str:
    s = f"{x:g}"
    return s.replace(".", "p")


def sweep_name(gamma: float, beta: float, kappa: float, lam: float) -> str:
    return f"fp{_tag(gamma)}_acc{_tag(beta)}_cab{_tag(kappa)}_tok{_tag(lam)}"


@dataclass(frozen=True)
class SweepPoint:
    name: str
    alpha: float
    beta: float
    kappa: float
    gamma: float
    lam: float


def sweep_grid() -> list[SweepPoint]:
    out = []
    for gamma, beta, kappa, lam in product(SWEEP_GAMMAS, SWEEP_BETAS, SWEEP_KAPPAS, SWEEP_LAMBDAS):
        alpha = LOW_GAMMA_ALPHA if gamma <= DEFAULT_ALPHA / 2 else DEFAULT_ALPHA
        out.append(SweepPoint(sweep_name(gamma, beta, kappa, lam), alpha, beta, kappa, gamma, lam))
    return out


def risk_adjusted_utility(cumulative_reward: float, fp_count: int, gamma: float) -> float:
    return cumulative_reward - gamma * fp_count


@dataclass(frozen=True)
class SweepResult:
    point: SweepPoint
    status: str
    metrics: ReplayMetrics | None = None
    utility: float | None = None


def run_reward_sweep(
    dataset: Dataset,
    grid: Sequence[SweepPoint] | None = None,
    seeds: Iterable[int] | None = None,
    kind: PolicyKind | str = PolicyKind.FULL_RSCB_MC,
) -> list[SweepResult]:
    grid = sweep_grid() if grid is None else grid
    out = []
    for p in grid:
        try:
            cfg = RewardConfig(alpha=p.alpha, beta=p.beta, kappa=p.kappa, gamma=p.gamma, lam=p.lam)
        except InvalidConfig:
            out.append(SweepResult(p, "invalid_config"))
            continue
        m = run_replay(kind, dataset, seeds, cfg)["pooled"]
        out.append(SweepResult(p, "ok", m, risk_adjusted_utility(m.cumulative_reward, m.n_fp, p.gamma)))
    return out


# -- context budget ----------------------------------------------------------


@dataclass(frozen=True)
class BudgetSummary:
    mode: str
    tokens: float
    latency_ms: float
    success_proxy: float
    fp_influence_proxy: float
    utility: float


def budget_utility(success: float, fp_influence: float, tokens: float, latency_ms: float) -> float:
    return success - fp_influence - BUDGET_TOKEN_COST * tokens - BUDGET_LATENCY_COST * latency_ms


def run_context_budget(cases: Sequence[ContextBudgetCase]) -> list[BudgetSummary]:
    if not cases:
        raise EmptyQuerySet("no context-budget cases")
    out = []
    n = len(cases)
    for m in BUDGET_MODES:
        mean = {
            key: math.fsum(c.modes[m][key] for c in cases) / n
            for key in ("tokens", "latency_ms", "success_proxy", "fp_influence_proxy")
        }
        out.append(
            BudgetSummary(
                m,
                mean["tokens"],
                mean["latency_ms"],
                mean["success_proxy"],
                mean["fp_influence_proxy"],
                budget_utility(mean["success_proxy"], mean["fp_influence_proxy"], mean["tokens"], mean["latency_ms"]),
            )
        )
    return out


def budget_ordering_holds(summary: Sequence[BudgetSummary]) -> bool:
    by = {s.mode: s for s in summary}
    best_utility = max(summary, key=lambda s: s.utility).mode
    best_success = max(summary, key=lambda s: s.success_proxy).mode
    nm = by["no_memory"]
    return (
        best_utility == "no_memory"
        and best_success == "short_hint"
        and nm.tokens == 0.0
        and nm.latency_ms == 0.0
        and nm.fp_influence_proxy == 0.0
    )


# -- hot path ----------------------------------------------------------------


@dataclass(frozen=True)
class LatencyStats:
    mean_us: float
    p95_us: float
    n_decisions: int
    success_rate: float = 0.0
    fp_rate: float = 0.0


def p95_nearest_rank(samples: Sequence[float]) -> float:
    if not samples:
        raise ValueError("no samples")
    ordered = sorted(samples)
    return ordered[max(1, math.ceil(0.95 * len(ordered))) - 1]


def run_hotpath(
    kinds: Iterable[PolicyKind | str],
    dataset: Dataset,
    n_per_method: int = HOTPATH_DECISIONS,
    warmup: int = HOTPATH_WARMUP,
    seed: int | None = None,
    cfg: RewardConfig = RewardConfig(),
) -> dict[str, LatencyStats]:
    """Time ``decide`` alone over a cycled replay stream, per method."""
    seed = dataset.replay_seeds[0] if seed is None else seed
    events = dataset.events_for(seed)
    out = {}
    for kind in kinds:
        policy = create_policy(kind, seed, cfg)
        timings: list[float] = []
        success = fp = 0
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for i in range(warmup + n_per_method):
                ev = events[i % len(events)]
                raw = dataset.lookup_raw(ev.source, ev.query_id)
                cands, z = _prepare(policy, raw, ev.session_id, dataset.bank, ev.budget())
                t0 = time.perf_counter_ns()
                d = policy.decide(z, cands, ev)
                elapsed = time.perf_counter_ns() - t0
                outcome = ev.outcome_per_action[d.chosen]
                policy.update(d.chosen, z, outcome, compute_reward(outcome, cfg), ev.session_id)
                if i >= warmup:
                    timings.append(elapsed / 1000.0)
                    success += outcome.success
                    fp += outcome.false_positive
        finally:
            if gc_was_enabled:
                gc.enable()
        out[PolicyKind(kind).value] = LatencyStats(
            mean_us=math.fsum(timings) / len(timings),
            p95_us=p95_nearest_rank(timings),
            n_decisions=len(timings),
            success_rate=success / len(timings),
            fp_rate=fp / len(timings),
        )
    return out


def as_row(obj) -> dict:
    return asdict(obj)
