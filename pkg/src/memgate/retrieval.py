"""Query normalization and deterministic candidate retrieval.

``normalize`` turns a raw debugging context into a :class:`QueryProfile` of
token sets per evidence channel. ``retrieve`` scores every (record, variant)
pair in a bank with a fixed weighted sum of per-channel overlaps.
"""

from __future__ import annotations

import functools
import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping

from .memory import FailureFamily, MemoryBank, MemoryRecord, Variant

_WORD = re.compile(r"[a-z0-9_]+")
_FRAME_FUNC = re.compile(r"\bin\s+([A-Za-z_][\w.]*)")
_FRAME_FILE = re.compile(r'File\s+"([^"]+)"')
_QUOTED = re.compile(r"['\"]([A-Za-z_][\w.\-]*)['\"]")

STOPWORDS = frozenset(
    """
    a an the is are was were be been being to of in on at for from by with and or
    not no this that it its as into while during after before when then than but
    so if file line traceback most recent call last
    """.split()
)

CHANNELS = ("lexical", "family", "entity", "command", "path", "stack", "history")

CHANNEL_WEIGHTS: Mapping[str, float] = {
    "lexical": 0.30,
    "family": 0.20,
    "entity": 0.10,
    "command": 0.15,
    "path": 0.10,
    "stack": 0.10,
    "history": 0.05,
}

LEXICAL_ONLY_WEIGHTS: Mapping[str, float] = {"lexical": 1.0}

HIGH_PRECISION_GATE = 0.5
HIGH_RECALL_LEXICAL_WEIGHT = 0.45
DEFAULT_K = 3


def _high_recall_weights() -> dict[str, float]:
    rest = 1.0 - CHANNEL_WEIGHTS["lexical"]
    scale = (1.0 - HIGH_RECALL_LEXICAL_WEIGHT) / rest
    w = {ch: CHANNEL_WEIGHTS[ch] * scale for ch in CHANNELS if ch != "lexical"}
    w["lexical"] = HIGH_RECALL_LEXICAL_WEIGHT
    return w


HIGH_RECALL_WEIGHTS: Mapping[str, float] = _high_recall_weights()


# -- types -------------------------------------------------------------------


@dataclass(frozen=True)
class RawContext:
    error_text: str = ""
    stack_excerpt: str = ""
    command: str = ""
    paths: tuple[str, ...] = ()
    repo_scope: str = ""
    env_metadata: Mapping[str, str] = field(default_factory=dict)
    prior_attempts: int = 0
    session_id: str = "default"

    def to_dict(self) -> dict:
        return {
            "error_text": self.error_text,
            "stack_excerpt": self.stack_excerpt,
            "command": self.command,
            "paths": list(self.paths),
            "repo_scope": self.repo_scope,
            "env_metadata": dict(self.env_metadata),
            "prior_attempts": self.prior_attempts,
            "session_id": self.session_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RawContext":
        return cls(
            error_text=d.get("error_text", ""),
            stack_excerpt=d.get("stack_excerpt", ""),
            command=d.get("command", ""),
            paths=tuple(d.get("paths", ())),
            repo_scope=d.get("repo_scope", ""),
            env_metadata=dict(d.get("env_metadata", {})),
            prior_attempts=int(d.get("prior_attempts", 0)),
            session_id=d.get("session_id", "default"),
        )


@dataclass(frozen=True)
class QueryProfile:
    tokens: frozenset[str] = frozenset()
    family_votes: Mapping[FailureFamily, float] = field(default_factory=dict)
    command_signature: frozenset[str] = frozenset()
    path_signature: frozenset[str] = frozenset()
    stack_signature: frozenset[str] = frozenset()
    entities: frozenset[str] = frozenset()
    session_id: str = "default"
    session_rejections: int = 0


@dataclass(frozen=True)
class Candidate:
    record_ref: str
    variant_ref: str
    score: float
    component_scores: Mapping[str, float]


class ModeKind(str, Enum):
    STANDARD = "standard"
    HIGH_PRECISION = "high_precision"
    HIGH_RECALL = "high_recall"


@dataclass(frozen=True)
class RetrievalMode:
    kind: ModeKind = ModeKind.STANDARD
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


# -- family rules ------------------------------------------------------------


@dataclass(frozen=True)
class FamilyRule:
    family: FailureFamily
    keywords: frozenset[str]
    weight: float


def load_family_rules(path: str | os.PathLike | None = None) -> tuple[FamilyRule, ...]:
    """Read keyword rules from ``family_rules.jsonl`` (the shipped copy by default)."""
    if path is None:
        text = resources.files("memgate").joinpath("data/family_rules.jsonl").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rules = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        rules.append(
            FamilyRule(FailureFamily(d["family"]), frozenset(d["keywords"]), float(d["weight"]))
        )
    return tuple(rules)


@functools.lru_cache(maxsize=1)
def default_rules() -> tuple[FamilyRule, ...]:
    return load_family_rules()


# -- normalization -----------------------------------------------------------


def words(text: str) -> list[str]:
    """Lowercased alphanumeric words of ``text``; pure numbers are dropped."""
    return [w for w in _WORD.findall(text.lower()) if not w.isdigit()]


def _path_tokens(path: str) -> set[str]:
    segments = [s for s in re.split(r"[\\/]+", path) if s]
    out: set[str] = set()
    for i, seg in enumerate(segments):
        if i == len(segments) - 1:
            seg = os.path.splitext(seg)[0] or seg
        out.update(words(seg))
    return out


def _basename(path: str) -> str:
    return re.split(r"[\\/]+", path.rstrip("/\\"))[-1].lower()


def stack_frames(stack_excerpt: str) -> set[str]:
    """Function names and module stems mentioned in a traceback excerpt."""
    out: set[str] = set()
    for func in _FRAME_FUNC.findall(stack_excerpt):
        out.update(words(func))
    for fname in _FRAME_FILE.findall(stack_excerpt):
        stem = os.path.splitext(_basename(fname))[0]
        out.update(words(stem))
    return out


def extract_entities(error_text: str, paths, env_metadata: Mapping[str, str]) -> set[str]:
    ents = {k.lower() for k in env_metadata}
    ents.update(_basename(p) for p in paths if _basename(p))
    ents.update(q.lower() for q in _QUOTED.findall(error_text))
    return ents


def family_votes(universe: set[str] | frozenset[str], rules=None) -> dict[FailureFamily, float]:
    rules = default_rules() if rules is None else rules
    votes: dict[FailureFamily, float] = {}
    for rule in rules:
        if rule.keywords <= universe:
            votes[rule.family] = votes.get(rule.family, 0.0) + rule.weight
    return votes


def normalize(raw: RawContext, session_rejections: int = 0, rules=None) -> QueryProfile:
    """Map a raw debugging context to its query profile.

    ``session_rejections`` is supplied by the caller from policy state; the raw
    context itself carries no feedback counts.
    """
    tokens = {w for w in words(raw.error_text) + words(raw.stack_excerpt) if w not in STOPWORDS}
    command = {w for w in words(raw.command) if w not in STOPWORDS}
    path_sig: set[str] = set()
    for p in raw.paths:
        path_sig |= _path_tokens(p)
    stack_sig = stack_frames(raw.stack_excerpt)
    entities = extract_entities(raw.error_text, raw.paths, raw.env_metadata)
    universe = tokens | command | path_sig | stack_sig | entities
    return QueryProfile(
        tokens=frozenset(tokens),
        family_votes=family_votes(universe, rules),
        command_signature=frozenset(command),
        path_signature=frozenset(path_sig),
        stack_signature=frozenset(stack_sig),
        entities=frozenset(entities),
        session_id=raw.session_id,
        session_rejections=max(0, int(session_rejections)),
    )


# -- scoring -----------------------------------------------------------------


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def component_scores(profile: QueryProfile, record: MemoryRecord, variant: Variant) -> dict[str, float]:
    total_votes = sum(profile.family_votes.values())
    fam = profile.family_votes.get(record.pattern.family, 0.0) / total_votes if total_votes > 0 else 0.0
    return {
        "lexical": jaccard(profile.tokens, record.pattern.tokens),
        "family": fam,
        "entity": len(profile.entities & variant.entities) / max(1, len(variant.entities)),
        "command": jaccard(profile.command_signature, variant.command_signature),
        "path": jaccard(profile.path_signature, variant.path_signature),
        "stack": jaccard(profile.stack_signature, variant.stack_signature),
        "history": record.historical_acceptance_rate,
    }


def score_candidate(
    profile: QueryProfile,
    record: MemoryRecord,
    variant: Variant,
    weights: Mapping[str, float] = CHANNEL_WEIGHTS,
) -> Candidate:
    comps = component_scores(profile, record, variant)
    score = sum(weights.get(ch, 0.0) * comps[ch] for ch in CHANNELS)
    return Candidate(record.pattern_id, variant.variant_id, min(1.0, max(0.0, score)), comps)


def _order_key(c: Candidate):
    return (-c.score, c.record_ref, c.variant_ref)


def score_all(profile: QueryProfile, bank: MemoryBank, weights=CHANNEL_WEIGHTS) -> list[Candidate]:
    """Every (record, variant) pair scored and sorted by the retrieval order."""
    cands = [score_candidate(profile, r, v, weights) for r, v in bank.pairs()]
    cands.sort(key=_order_key)
    return cands


def retrieve(
    profile: QueryProfile,
    bank: MemoryBank,
    mode: RetrievalMode = RetrievalMode(),
    weights: Mapping[str, float] | None = None,
) -> list[Candidate]:
    """Top candidates for ``profile`` under ``mode``, best first.

    ``weights`` overrides the channel weights of standard and high-precision
    modes (the lexical-only baseline passes a lexical-only weighting).
    """
    if mode.kind is ModeKind.HIGH_RECALL:
        return score_all(profile, bank, HIGH_RECALL_WEIGHTS)[: 2 * mode.k]
    cands = score_all(profile, bank, CHANNEL_WEIGHTS if weights is None else weights)
    if mode.kind is ModeKind.HIGH_PRECISION:
        cands = [
            c
            for c in cands
            if max(c.component_scores[ch] for ch in ("command", "path", "stack")) >= HIGH_PRECISION_GATE
        ]
    return cands[: mode.k]
