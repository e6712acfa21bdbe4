"""Deterministic smoke-scale dataset generator and validator.

``generate_artifacts`` writes the memory bank, canonical queries, paraphrases,
hard negatives, replay events, and context-budget cases for one generator
seed. Each file's content depends only on the configuration.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .. import jsonio
from ..features import BudgetState, build_state
from ..memory import (
    Episode,
    FailureFamily,
    MemoryBank,
    MemoryRecord,
    Pattern,
    Variant,
    Violation,
    load_bank,
    record_from_dict,
    save_bank,
    validate_bank,
)
from ..policy import (
    ACTIONS,
    INJECTION_ACTIONS,
    TIE_BREAK_ORDER,
    Action,
    Outcome,
    RewardConfig,
    available_actions,
    compute_reward,
    safety_override,
)
from ..retrieval import STOPWORDS, QueryProfile, RawContext, normalize, retrieve, words
from ..rng import Lcg64
from . import templates as tpl
from .templates import RecordTemplate, VariantTemplate

DEFAULT_SEED = 1337
DEFAULT_REPLAY_SEEDS = (1337, 2024)
SCALE = "smoke"

SMOKE_COUNTS = {
    "queries": 24,
    "paraphrases": 96,
    "hard_negatives": 32,
    "events_per_seed": 40,
    "records": 16,
    "variants": 32,
    "context_budget": 24,
}

FILES = (
    "memory_bank.jsonl",
    "queries.jsonl",
    "paraphrases.jsonl",
    "hard_negatives.jsonl",
    "replay_events.jsonl",
    "context_budget.jsonl",
)

TRANSFORMS = ("synonym", "reorder", "truncate", "noise")
TRUNCATE_FRACTION = 0.6
NOISE_COUNT = 3
STATIC_ABSTAIN_THRESHOLD = 0.55

BUDGET_MODES = ("no_memory", "short_hint", "top1_resolution", "top3_summary", "full_trace")

# (success, fp_influence, tokens, latency_ms) base rates per context mode.
BUDGET_BASE: Mapping[str, tuple[float, float, float, float]] = {
    "no_memory": (0.62, 0.0, 0.0, 0.0),
    "short_hint": (0.76, 0.28, 41.0, 17.8),
    "top1_resolution": (0.58, 0.86, 29.0, 15.9),
    "top3_summary": (0.56, 0.86, 157.0, 54.0),
    "full_trace": (0.48, 0.53, 351.0, 115.0),
}
BUDGET_JITTER = 0.05

# Per-action payload (latency_ms, tokens) before jitter.
PAYLOAD_BASE: Mapping[Action, tuple[float, float]] = {
    Action.NO_MEMORY: (0.0, 0.0),
    Action.TOP1_RESOLUTION: (16.0, 29.0),
    Action.TOP3_SUMMARY: (54.0, 157.0),
    Action.HIGH_PRECISION_RETRIEVAL: (20.0, 24.0),
    Action.HIGH_RECALL_RETRIEVAL: (60.0, 110.0),
    Action.ABSTAIN: (1.0, 0.0),
    Action.ASK_FEEDBACK: (5.0, 24.0),
}
PAYLOAD_JITTER = 0.1

N = Action.NO_MEMORY
T1 = Action.TOP1_RESOLUTION
T3 = Action.TOP3_SUMMARY
HP = Action.HIGH_PRECISION_RETRIEVAL
HR = Action.HIGH_RECALL_RETRIEVAL
AB = Action.ABSTAIN
AF = Action.ASK_FEEDBACK

# Outcome label per action for each replay event kind.
OUTCOME_TABLE: Mapping[str, Mapping[Action, str]] = {
    "verified": {T1: "verified", HP: "verified", T3: "accepted", HR: "accepted", N: "none", AB: "none", AF: "none"},
    "accepted": {T1: "accepted", HP: "accepted", T3: "accepted", HR: "verified", N: "none", AB: "none", AF: "none"},
    "rejected": {
        T1: "rejected", HP: "rejected", T3: "rejected", HR: "accepted",
        N: "none", AB: "correct_abstain", AF: "correct_abstain",
    },
    "false_positive": {
        T1: "false_positive", T3: "false_positive", HR: "false_positive", HP: "rejected",
        N: "none", AB: "correct_abstain", AF: "correct_abstain",
    },
    "correct_abstain": {
        T1: "false_positive", T3: "false_positive", HR: "false_positive", HP: "rejected",
        N: "correct_abstain", AB: "correct_abstain", AF: "correct_abstain",
    },
}

CONFUSABLE_CYCLE = ("verified", "accepted", "rejected", "false_positive", "correct_abstain")
PLAIN_CYCLE = ("verified", "accepted", "rejected")


class IoFailure(OSError):
    pass


class GenerationError(RuntimeError):
    """The vocabulary no longer produces the structural guarantees the suites rely on."""


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = DEFAULT_SEED
    scale: str = SCALE
    replay_seeds: tuple[int, ...] = DEFAULT_REPLAY_SEEDS
    counts: Mapping[str, int] = field(default_factory=lambda: dict(SMOKE_COUNTS))

    def __post_init__(self) -> None:
        if self.scale != SCALE:
            raise ValueError(f"only the {SCALE!r} scale is supported, got {self.scale!r}")
        if dict(self.counts) != SMOKE_COUNTS:
            raise ValueError("smoke-scale counts are fixed")
        if not self.replay_seeds:
            raise ValueError("at least one replay seed is required")


# -- dataset model -----------------------------------------------------------


@dataclass(frozen=True)
class QueryCase:
    query_id: str
    raw: RawContext
    gold_pattern_id: str
    family: FailureFamily
    gold_variant_id: str = ""

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "raw": self.raw.to_dict(),
            "gold_pattern_id": self.gold_pattern_id,
            "gold_variant_id": self.gold_variant_id,
            "family": self.family.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QueryCase":
        return cls(
            d["query_id"],
            RawContext.from_dict(d["raw"]),
            d["gold_pattern_id"],
            FailureFamily(d["family"]),
            d.get("gold_variant_id", ""),
        )


@dataclass(frozen=True)
class ParaphraseCase(QueryCase):
    source_query_id: str = ""
    transform: str = ""

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(source_query_id=self.source_query_id, transform=self.transform)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParaphraseCase":
        return cls(
            d["query_id"],
            RawContext.from_dict(d["raw"]),
            d["gold_pattern_id"],
            FailureFamily(d["family"]),
            d.get("gold_variant_id", ""),
            d["source_query_id"],
            d["transform"],
        )


@dataclass(frozen=True)
class HardNegativeCase:
    case_id: str
    raw: RawContext
    decoy_pattern_id: str
    confusable_with: FailureFamily
    flavor: str
    label: str = "must_not_inject"

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "raw": self.raw.to_dict(),
            "decoy_pattern_id": self.decoy_pattern_id,
            "confusable_with": self.confusable_with.value,
            "flavor": self.flavor,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "HardNegativeCase":
        return cls(
            d["case_id"],
            RawContext.from_dict(d["raw"]),
            d["decoy_pattern_id"],
            FailureFamily(d["confusable_with"]),
            d.get("flavor", ""),
            d.get("label", "must_not_inject"),
        )


@dataclass(frozen=True)
class ReplayEvent:
    event_id: str
    seed: int
    session_id: str
    query_id: str
    source: str
    family: FailureFamily
    kind: str
    outcome_per_action: Mapping[Action, Outcome]
    oracle_action: Action
    token_budget_remaining: float = 1.0

    @property
    def latency_ms(self) -> dict[Action, float]:
        return {a: o.latency_ms for a, o in self.outcome_per_action.items()}

    @property
    def token_cost(self) -> dict[Action, float]:
        return {a: o.token_cost for a, o in self.outcome_per_action.items()}

    def budget(self) -> BudgetState:
        payload = {a.value: (o.latency_ms, o.token_cost) for a, o in self.outcome_per_action.items()}
        return BudgetState(self.token_budget_remaining, payload)

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "seed": self.seed,
            "session_id": self.session_id,
            "query_id": self.query_id,
            "source": self.source,
            "family": self.family.value,
            "kind": self.kind,
            "outcome_per_action": {a.value: o.to_dict() for a, o in self.outcome_per_action.items()},
            "oracle_action": self.oracle_action.value,
            "token_budget_remaining": self.token_budget_remaining,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReplayEvent":
        return cls(
            d["event_id"],
            int(d["seed"]),
            d["session_id"],
            d["query_id"],
            d["source"],
            FailureFamily(d["family"]),
            d["kind"],
            {Action(k): Outcome.from_dict(v) for k, v in d["outcome_per_action"].items()},
            Action(d["oracle_action"]),
            float(d.get("token_budget_remaining", 1.0)),
        )


@dataclass(frozen=True)
class ContextBudgetCase:
    """One budget case with every context mode's proxy numbers."""

    case_id: str
    modes: Mapping[str, Mapping[str, float]]

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "modes": {m: dict(v) for m, v in self.modes.items()}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContextBudgetCase":
        return cls(d["case_id"], {m: dict(v) for m, v in d["modes"].items()})


@dataclass(frozen=True)
class Dataset:
    bank: MemoryBank
    queries: tuple[QueryCase, ...]
    paraphrases: tuple[ParaphraseCase, ...]
    hard_negatives: tuple[HardNegativeCase, ...]
    events: tuple[ReplayEvent, ...]
    context_budget: tuple[ContextBudgetCase, ...]
    manifest: Mapping

    def events_for(self, seed: int) -> list[ReplayEvent]:
        return [e for e in self.events if e.seed == seed]

    @property
    def replay_seeds(self) -> tuple[int, ...]:
        return tuple(self.manifest["replay_seeds"])

    def lookup_raw(self, source: str, ref: str) -> RawContext:
        return self._index()[(source, ref)]

    def _index(self) -> dict[tuple[str, str], RawContext]:
        idx = self.__dict__.get("_raw_index")
        if idx is None:
            idx = {("queries", q.query_id): q.raw for q in self.queries}
            idx.update({("paraphrases", p.query_id): p.raw for p in self.paraphrases})
            idx.update({("hard_negatives", h.case_id): h.raw for h in self.hard_negatives})
            object.__setattr__(self, "_raw_index", idx)
        return idx

    @property
    def digest(self) -> str:
        return self.manifest["digest"]


# -- rendering ---------------------------------------------------------------


def _content_tokens(text: str) -> frozenset[str]:
    return frozenset(w for w in words(text) if w not in STOPWORDS)


def render_stack(frames) -> str:
    return "\n".join(
        f'File "{fname}", line {10 + 7 * j}, in {func}' for j, (fname, func) in enumerate(frames)
    )


def render_canonical(rt: RecordTemplate, vt: VariantTemplate, session_id: str = "canonical") -> RawContext:
    return RawContext(
        error_text=rt.symptom,
        stack_excerpt=render_stack(vt.frames),
        command=vt.command,
        paths=vt.paths,
        repo_scope="repo-main",
        env_metadata=dict(vt.env),
        prior_attempts=0,
        session_id=session_id,
    )


def variant_id(rt: RecordTemplate, vt: VariantTemplate) -> str:
    return f"{rt.pattern_id}-{vt.suffix}"


def build_bank() -> MemoryBank:
    """The 16-record smoke bank; history rates come from the seeded episodes."""
    records = []
    ts = 0
    for rt in tpl.RECORDS:
        variants = []
        for vt in rt.variants:
            prof = normalize(render_canonical(rt, vt))
            variants.append(
                Variant(
                    variant_id=variant_id(rt, vt),
                    parent_pattern_id=rt.pattern_id,
                    fix_strategy=vt.fix,
                    command_signature=prof.command_signature,
                    path_signature=prof.path_signature,
                    stack_signature=prof.stack_signature,
                    entities=prof.entities,
                )
            )
        va, vb = (v.variant_id for v in variants)
        if rt.pattern_id in tpl.CONFUSABLE_RECORDS:
            history = ((va, "verified"), (va, "accepted"), (vb, "false_positive"), (va, "false_positive"), (vb, "rejected"))
        else:
            history = ((va, "verified"), (va, "accepted"), (vb, "accepted"), (vb, "rejected"), (va, "none"))
        episodes = []
        for k, (vid, label) in enumerate(history):
            ts += 1
            episodes.append(
                Episode(
                    episode_id=f"{rt.pattern_id}-e{k + 1}",
                    parent_variant_id=vid,
                    observed_evidence=f"{label} reuse of {vid}",
                    validated=label == "verified",
                    feedback_label=label,
                    timestamp=ts,
                )
            )
        labels = [lab for _, lab in history]
        adopted = sum(lab in ("verified", "accepted") for lab in labels)
        records.append(
            MemoryRecord(
                pattern=Pattern(
                    pattern_id=rt.pattern_id,
                    family=rt.family,
                    symptom_tokens=_content_tokens(rt.symptom),
                    root_cause_tokens=_content_tokens(rt.root_cause),
                    description=rt.symptom,
                ),
                variants=tuple(variants),
                episodes=tuple(episodes),
                historical_acceptance_rate=adopted / len(labels),
                historical_false_positive_rate=labels.count("false_positive") / len(labels),
            )
        )
    return MemoryBank(records=tuple(records))


def canonical_queries() -> list[QueryCase]:
    """Variant ``a`` of every record, then variant ``b`` of the first eight."""
    pairs = [(rt, rt.variants[0]) for rt in tpl.RECORDS]
    pairs += [(rt, rt.variants[1]) for rt in tpl.RECORDS[:8]]
    return [
        QueryCase(f"q{i + 1:02d}", render_canonical(rt, vt), rt.pattern_id, rt.family, variant_id(rt, vt))
        for i, (rt, vt) in enumerate(pairs)
    ]


_WORD_SPAN = re.compile(r"[A-Za-z0-9_]+")


def _substitute(text: str) -> str:
    return _WORD_SPAN.sub(lambda m: tpl.SYNONYMS.get(m.group(0).lower(), m.group(0)), text)


def _keep(n: int) -> int:
    return max(1, math.ceil(TRUNCATE_FRACTION * n))


def paraphrase(raw: RawContext, transform: str, rng: Lcg64) -> RawContext:
    """Apply one deterministic surface transform to a raw context."""
    error, stack = raw.error_text, raw.stack_excerpt
    if transform == "synonym":
        error = _substitute(error)
    elif transform == "reorder":
        toks = error.split()
        rng.shuffle(toks)
        error = " ".join(toks)
        stack = "\n".join(reversed(stack.splitlines()))
    elif transform == "truncate":
        toks = error.split()
        error = " ".join(toks[: _keep(len(toks))])
        lines = stack.splitlines()
        stack = "\n".join(lines[: max(1, int(TRUNCATE_FRACTION * len(lines)))])
    elif transform == "noise":
        toks = error.split()
        for _ in range(NOISE_COUNT):
            toks.insert(rng.randrange(len(toks) + 1), rng.choice(tpl.NOISE_TOKENS))
        error = " ".join(toks)
    else:
        raise ValueError(f"unknown transform {transform!r}")
    return RawContext(
        error_text=error,
        stack_excerpt=stack,
        command=raw.command,
        paths=raw.paths,
        repo_scope=raw.repo_scope,
        env_metadata=dict(raw.env_metadata),
        prior_attempts=raw.prior_attempts + 1,
        session_id=raw.session_id,
    )


def build_paraphrases(queries: list[QueryCase], rng: Lcg64) -> list[ParaphraseCase]:
    out = []
    for q in queries:
        for j, t in enumerate(TRANSFORMS):
            out.append(
                ParaphraseCase(
                    f"{q.query_id}-p{j + 1}",
                    paraphrase(q.raw, t, rng),
                    q.gold_pattern_id,
                    q.family,
                    q.gold_variant_id,
                    q.query_id,
                    t,
                )
            )
    return out


def build_hard_negatives() -> list[HardNegativeCase]:
    """Wrong-family decoys cycled over the directed confusable pairs.

    Flavors: ``collision`` carries the decoy's full symptom line, ``thin`` only
    its trailing words, and ``hinted`` adds the last root-cause words of the
    true family. Structure comes from contexts no stored variant shares.
    """
    by_id = {rt.pattern_id: rt for rt in tpl.RECORDS}
    n = SMOKE_COUNTS["hard_negatives"]
    flavors = ("collision", "thin", "hinted", "thin")
    out = []
    for i in range(n):
        decoy_id, true_id = tpl.DIRECTED_PAIRS[i % len(tpl.DIRECTED_PAIRS)]
        decoy, true = by_id[decoy_id], by_id[true_id]
        flavor = flavors[i // len(tpl.DIRECTED_PAIRS)]
        sym = decoy.symptom.split()
        if flavor == "thin":
            error = " ".join(sym[-_keep(len(sym)) :])
        elif flavor == "hinted":
            error = f"{decoy.symptom}. {' '.join(true.root_cause.split()[-2:])}"
        else:
            error = decoy.symptom
        command, paths, frames, env = tpl.NOVEL_CONTEXTS[i % len(tpl.NOVEL_CONTEXTS)]
        raw = RawContext(
            error_text=error,
            stack_excerpt=render_stack(frames),
            command=command,
            paths=paths,
            repo_scope="repo-main",
            env_metadata=dict(env),
            session_id="hardneg",
        )
        out.append(HardNegativeCase(f"hn{i + 1:02d}", raw, decoy_id, true.family, flavor))
    return out


def _jittered(base: float, rng: Lcg64) -> float:
    return base * (1.0 + rng.uniform(-PAYLOAD_JITTER, PAYLOAD_JITTER))


def oracle_action(outcomes: Mapping[Action, Outcome], available, cfg: RewardConfig = RewardConfig()) -> Action:
    best, best_r = None, -math.inf
    for a in TIE_BREAK_ORDER:
        if a not in available:
            continue
        r = compute_reward(outcomes[a], cfg)
        if r > best_r:
            best, best_r = a, r
    assert best is not None
    return best


def _passes_gates(profile: QueryProfile, bank: MemoryBank, gold: str) -> bool:
    cands = retrieve(profile, bank)
    if not cands or cands[0].record_ref != gold:
        return False
    z = build_state(profile, cands, bank)
    return safety_override(z, Action.TOP1_RESOLUTION)[0] is Action.TOP1_RESOLUTION


def build_events(
    replay_seed: int,
    gen_seed: int,
    bank: MemoryBank,
    queries: list[QueryCase],
    paraphrases: list[ParaphraseCase],
    hard_negatives: list[HardNegativeCase],
) -> list[ReplayEvent]:
    rng = Lcg64((gen_seed * 1_000_003) ^ replay_seed)
    families = list(FailureFamily)
    family_of = {rt.pattern_id: rt.family for rt in tpl.RECORDS}
    confusable_families = {family_of[p] for p in tpl.CONFUSABLE_RECORDS}
    phase = {f: rng.randrange(len(CONFUSABLE_CYCLE if f in confusable_families else PLAIN_CYCLE)) for f in families}

    canon_by_family: dict[FailureFamily, list[QueryCase]] = {}
    for q in queries:
        canon_by_family.setdefault(q.family, []).append(q)
    para_by_family: dict[FailureFamily, list[ParaphraseCase]] = {}
    safe_para_by_family: dict[FailureFamily, list[ParaphraseCase]] = {}
    for p in paraphrases:
        para_by_family.setdefault(p.family, []).append(p)
        if _passes_gates(normalize(p.raw), bank, p.gold_pattern_id):
            safe_para_by_family.setdefault(p.family, []).append(p)
    hn_by_decoy_family: dict[FailureFamily, dict[str, list[HardNegativeCase]]] = {}
    for h in hard_negatives:
        kind = "correct_abstain" if h.flavor == "thin" else "false_positive"
        hn_by_decoy_family.setdefault(family_of[h.decoy_pattern_id], {}).setdefault(kind, []).append(h)

    n = SMOKE_COUNTS["events_per_seed"]
    seen: dict[FailureFamily, int] = {}
    drafts = []
    for e in range(n):
        fam = families[e % len(families)]
        occ = seen.get(fam, 0)
        seen[fam] = occ + 1
        cycle = CONFUSABLE_CYCLE if fam in confusable_families else PLAIN_CYCLE
        kind = cycle[(occ + phase[fam]) % len(cycle)]
        if kind == "verified":
            case = rng.choice(canon_by_family[fam])
            source, ref = "queries", case.query_id
        elif kind == "accepted":
            pool = safe_para_by_family.get(fam) or canon_by_family[fam]
            case = rng.choice(pool)
            source = "paraphrases" if isinstance(case, ParaphraseCase) else "queries"
            ref = case.query_id
        elif kind == "rejected":
            case = rng.choice(para_by_family[fam])
            source, ref = "paraphrases", case.query_id
        else:
            case = rng.choice(hn_by_decoy_family[fam][kind])
            source, ref = "hard_negatives", case.case_id
        drafts.append((fam, kind, source, ref, case.raw))

    rng.shuffle(drafts)
    events = []
    for e, (fam, kind, source, ref, raw) in enumerate(drafts):
        outcomes = {}
        for a in ACTIONS:
            ms_base, tok_base = PAYLOAD_BASE[a]
            outcomes[a] = Outcome.from_label(
                OUTCOME_TABLE[kind][a],
                latency_ms=round(_jittered(ms_base, rng), 3),
                token_cost=float(round(_jittered(tok_base, rng))),
            )
        budget = round(rng.uniform(0.5, 1.0), 6)
        avail = available_actions(retrieve(normalize(raw), bank))
        events.append(
            ReplayEvent(
                event_id=f"s{replay_seed}-e{e + 1:02d}",
                seed=replay_seed,
                session_id=f"sess-{replay_seed}-{e // 4}",
                query_id=ref,
                source=source,
                family=fam,
                kind=kind,
                outcome_per_action=outcomes,
                oracle_action=oracle_action(outcomes, avail),
                token_budget_remaining=budget,
            )
        )
    return events


def build_context_budget(rng: Lcg64) -> list[ContextBudgetCase]:
    out = []
    for i in range(SMOKE_COUNTS["context_budget"]):
        modes = {}
        for m in BUDGET_MODES:
            success, fp, tokens, ms = BUDGET_BASE[m]
            jit = 1.0 + rng.uniform(-PAYLOAD_JITTER, PAYLOAD_JITTER)
            modes[m] = {
                "success_proxy": round(min(1.0, max(0.0, success + rng.uniform(-BUDGET_JITTER, BUDGET_JITTER))), 6),
                "fp_influence_proxy": round(
                    min(1.0, max(0.0, fp + rng.uniform(-BUDGET_JITTER, BUDGET_JITTER))) if fp > 0 else 0.0, 6
                ),
                "tokens": float(round(tokens * jit)),
                "latency_ms": round(ms * jit, 3),
            }
        out.append(ContextBudgetCase(f"cb{i + 1:02d}", modes))
    return out


def check_guarantees(
    bank: MemoryBank, queries: list[QueryCase], hard_negatives: list[HardNegativeCase]
) -> None:
    """Raise :class:`GenerationError` if the suites' structural assumptions fail."""
    for q in queries:
        prof = normalize(q.raw)
        cands = retrieve(prof, bank)
        if cands[0].record_ref != q.gold_pattern_id:
            raise GenerationError(f"{q.query_id}: gold is not ranked first")
        if cands[0].score < STATIC_ABSTAIN_THRESHOLD:
            raise GenerationError(f"{q.query_id}: canonical top score {cands[0].score:.3f} below threshold")
        if not _passes_gates(prof, bank, q.gold_pattern_id):
            raise GenerationError(f"{q.query_id}: canonical query trips a safety override")
    for h in hard_negatives:
        prof = normalize(h.raw)
        cands = retrieve(prof, bank)
        if not cands:
            raise GenerationError(f"{h.case_id}: no candidates")
        top = bank.record(cands[0].record_ref)
        if top.pattern.family is h.confusable_with:
            raise GenerationError(f"{h.case_id}: top candidate is in the true family")
        if cands[0].score >= STATIC_ABSTAIN_THRESHOLD:
            raise GenerationError(f"{h.case_id}: decoy scores {cands[0].score:.3f}, above threshold")
        z = build_state(prof, cands, bank)
        for a in INJECTION_ACTIONS:
            if safety_override(z, a)[0] is a:
                raise GenerationError(f"{h.case_id}: no safety override fires")


# -- io ----------------------------------------------------------------------


def build_dataset(cfg: GeneratorConfig = GeneratorConfig()) -> Dataset:
    """Assemble every artifact in memory; a pure function of ``cfg``."""
    rng = Lcg64(cfg.seed)
    bank = build_bank()
    queries = canonical_queries()
    paraphrases = build_paraphrases(queries, rng)
    hard_negatives = build_hard_negatives()
    check_guarantees(bank, queries, hard_negatives)
    events = []
    for s in cfg.replay_seeds:
        events += build_events(s, cfg.seed, bank, queries, paraphrases, hard_negatives)
    budget = build_context_budget(rng)
    manifest = {
        "seed": cfg.seed,
        "scale": cfg.scale,
        "replay_seeds": list(cfg.replay_seeds),
        "counts": {
            "queries": len(queries),
            "paraphrases": len(paraphrases),
            "hard_negatives": len(hard_negatives),
            "replay_events": len(events),
            "records": len(bank.records),
            "variants": bank.n_variants,
            "context_budget": len(budget),
        },
    }
    return Dataset(bank, tuple(queries), tuple(paraphrases), tuple(hard_negatives), tuple(events), tuple(budget), manifest)


def manifest_digest(files: Mapping[str, str]) -> str:
    return hashlib.sha256(jsonio.dumps(dict(files)).encode("utf-8")).hexdigest()


def generate_artifacts(cfg: GeneratorConfig, out_dir: str | Path) -> Path:
    """Write the dataset for ``cfg`` into ``out_dir`` and return the directory."""
    ds = build_dataset(cfg)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_bank(ds.bank, out / "memory_bank.jsonl")
        jsonio.write_jsonl(out / "queries.jsonl", (q.to_dict() for q in ds.queries))
        jsonio.write_jsonl(out / "paraphrases.jsonl", (p.to_dict() for p in ds.paraphrases))
        jsonio.write_jsonl(out / "hard_negatives.jsonl", (h.to_dict() for h in ds.hard_negatives))
        jsonio.write_jsonl(out / "replay_events.jsonl", (e.to_dict() for e in ds.events))
        jsonio.write_jsonl(out / "context_budget.jsonl", (c.to_dict() for c in ds.context_budget))
        files = {name: jsonio.file_digest(out / name) for name in FILES}
        manifest = dict(ds.manifest, files=files, digest=manifest_digest(files))
        jsonio.write_json(out / "manifest.json", manifest)
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {out}: {exc}") from exc
    return out


def _read_rows(path: Path) -> list[dict]:
    return [obj for _, obj in jsonio.read_jsonl(path)]


def load_dataset(data_dir: str | Path) -> Dataset:
    d = Path(data_dir)
    manifest = jsonio.read_json(d / "manifest.json")
    return Dataset(
        bank=load_bank(d / "memory_bank.jsonl"),
        queries=tuple(QueryCase.from_dict(r) for r in _read_rows(d / "queries.jsonl")),
        paraphrases=tuple(ParaphraseCase.from_dict(r) for r in _read_rows(d / "paraphrases.jsonl")),
        hard_negatives=tuple(HardNegativeCase.from_dict(r) for r in _read_rows(d / "hard_negatives.jsonl")),
        events=tuple(ReplayEvent.from_dict(r) for r in _read_rows(d / "replay_events.jsonl")),
        context_budget=tuple(ContextBudgetCase.from_dict(r) for r in _read_rows(d / "context_budget.jsonl")),
        manifest=manifest,
    )


def validate_dataset(data_dir: str | Path) -> list[Violation]:
    """Every problem found in a dataset directory; empty when it is valid."""
    d = Path(data_dir)
    out: list[Violation] = []
    for name in FILES + ("manifest.json",):
        if not (d / name).is_file():
            out.append(Violation("MissingFile", name))
    if out:
        return out

    rows: dict[str, list[dict]] = {}
    for name in FILES:
        try:
            rows[name] = _read_rows(d / name)
        except ValueError as exc:
            out.append(Violation("MalformedRecord", name, str(exc)))
    if out:
        return out

    try:
        records = [record_from_dict(r) for r in rows["memory_bank.jsonl"]]
    except (KeyError, TypeError, ValueError) as exc:
        return [Violation("MalformedRecord", "memory_bank.jsonl", str(exc))]
    bank = MemoryBank(tuple(records))
    out += validate_bank(bank)
    pattern_ids = {r.pattern_id for r in records}

    manifest = jsonio.read_json(d / "manifest.json")
    seeds = manifest.get("replay_seeds", [])
    expected = {
        "memory_bank.jsonl": SMOKE_COUNTS["records"],
        "queries.jsonl": SMOKE_COUNTS["queries"],
        "paraphrases.jsonl": SMOKE_COUNTS["paraphrases"],
        "hard_negatives.jsonl": SMOKE_COUNTS["hard_negatives"],
        "replay_events.jsonl": SMOKE_COUNTS["events_per_seed"] * len(seeds),
        "context_budget.jsonl": SMOKE_COUNTS["context_budget"],
    }
    for name, n in expected.items():
        if len(rows[name]) != n:
            out.append(Violation("CardinalityMismatch", name, f"expected {n}, found {len(rows[name])}"))
    if bank.n_variants != SMOKE_COUNTS["variants"]:
        out.append(Violation("CardinalityMismatch", "variants", f"found {bank.n_variants}"))

    for name, digest in manifest.get("files", {}).items():
        if (d / name).is_file() and jsonio.file_digest(d / name) != digest:
            out.append(Violation("DigestMismatch", name))

    ids: dict[str, set[str]] = {"queries": set(), "paraphrases": set(), "hard_negatives": set()}
    for key, name, id_field in (
        ("queries", "queries.jsonl", "query_id"),
        ("paraphrases", "paraphrases.jsonl", "query_id"),
        ("hard_negatives", "hard_negatives.jsonl", "case_id"),
    ):
        for r in rows[name]:
            ids[key].add(r.get(id_field, ""))
            ref = r.get("decoy_pattern_id") if key == "hard_negatives" else r.get("gold_pattern_id")
            if ref not in pattern_ids:
                out.append(Violation("DanglingReference", r.get(id_field, "?"), f"pattern {ref!r}"))
    for r in rows["paraphrases.jsonl"]:
        if r.get("source_query_id") not in ids["queries"]:
            out.append(Violation("DanglingReference", r.get("query_id", "?"), "source query"))
    for r in rows["hard_negatives.jsonl"]:
        if r.get("label") != "must_not_inject":
            out.append(Violation("BadLabel", r.get("case_id", "?"), str(r.get("label"))))

    for r in rows["replay_events.jsonl"]:
        eid = r.get("event_id", "?")
        if r.get("query_id") not in ids.get(r.get("source"), set()):
            out.append(Violation("DanglingReference", eid, f"{r.get('source')}:{r.get('query_id')}"))
        try:
            ev = ReplayEvent.from_dict(r)
        except (KeyError, TypeError, ValueError) as exc:
            out.append(Violation("LabelExclusivity", eid, str(exc)))
            continue
        if set(ev.outcome_per_action) != set(ACTIONS):
            out.append(Violation("MissingOutcome", eid))

    for r in rows["context_budget.jsonl"]:
        if set(r.get("modes", {})) != set(BUDGET_MODES):
            out.append(Violation("BadBudgetModes", r.get("case_id", "?")))

    if any(v.kind == "DanglingReference" for v in out):
        return out
    for r in rows["queries.jsonl"]:
        q = QueryCase.from_dict(r)
        cands = retrieve(normalize(q.raw), bank)
        if not cands or cands[0].record_ref != q.gold_pattern_id:
            out.append(Violation("SaturationFailure", q.query_id, "gold pattern not ranked first"))
    return out
