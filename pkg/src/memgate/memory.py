"""Pattern / variant / episode issue-memory schema and its JSONL storage.

A memory bank file holds one :class:`MemoryRecord` per line. Sets are written
as sorted lists and keys are sorted, so saving is a pure function of content.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from . import jsonio


class FailureFamily(str, Enum):
    DUPLICATE_SERVER_INSTANCE = "duplicate_server_instance"
    SQLITE_INIT_LOCKING = "sqlite_init_locking"
    WRONG_VIRTUALENV = "wrong_virtualenv"
    WRONG_PYTHONPATH = "wrong_pythonpath"
    LOCKFILE_CONFLICT = "lockfile_conflict"
    STALE_MIGRATION = "stale_migration"
    RETRIEVAL_FALSE_POSITIVE = "retrieval_false_positive"
    REJECTED_MEMORY_REUSE = "rejected_memory_reuse"
    WRONG_ENV_VAR = "wrong_env_var"
    OUTDATED_MEMORY_VARIANT = "outdated_memory_variant"
    MIGRATION_ORDER_MISMATCH = "migration_order_mismatch"
    CORRUPTED_LOCAL_STATE = "corrupted_local_state"
    MISSING_BACKUP_DIR = "missing_backup_dir"
    INVALID_CONFIG_KEY = "invalid_config_key"
    RUNTIME_EVIDENCE_GAP = "runtime_evidence_gap"


FEEDBACK_LABELS = ("verified", "accepted", "rejected", "false_positive", "none")


class BankError(Exception):
    """Base class for memory-bank load failures."""


class MalformedRecord(BankError):
    def __init__(self, line_number: int, reason: str) -> None:
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class DuplicatePatternId(BankError):
    def __init__(self, pattern_id: str) -> None:
        super().__init__(f"duplicate pattern_id {pattern_id!r}")
        self.pattern_id = pattern_id


class DanglingReference(BankError):
    def __init__(self, ref: str) -> None:
        super().__init__(f"dangling reference {ref!r}")
        self.ref = ref


@dataclass(frozen=True)
class Pattern:
    pattern_id: str
    family: FailureFamily
    symptom_tokens: frozenset[str]
    root_cause_tokens: frozenset[str]
    description: str = ""

    @property
    def tokens(self) -> frozenset[str]:
        return self.symptom_tokens | self.root_cause_tokens


@dataclass(frozen=True)
class Variant:
    variant_id: str
    parent_pattern_id: str
    fix_strategy: str
    command_signature: frozenset[str] = frozenset()
    path_signature: frozenset[str] = frozenset()
    stack_signature: frozenset[str] = frozenset()
    entities: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Episode:
    episode_id: str
    parent_variant_id: str
    observed_evidence: str
    validated: bool
    feedback_label: str
    timestamp: int


@dataclass(frozen=True)
class MemoryRecord:
    pattern: Pattern
    variants: tuple[Variant, ...]
    episodes: tuple[Episode, ...] = ()
    historical_acceptance_rate: float = 0.0
    historical_false_positive_rate: float = 0.0

    @property
    def pattern_id(self) -> str:
        return self.pattern.pattern_id


@dataclass(frozen=True)
class MemoryBank:
    records: tuple[MemoryRecord, ...] = ()
    bank_version: int = 1

    def record(self, pattern_id: str) -> MemoryRecord:
        for rec in self.records:
            if rec.pattern_id == pattern_id:
                return rec
        raise KeyError(pattern_id)

    def pairs(self):
        """Iterate over every ``(record, variant)`` pair in bank order."""
        for rec in self.records:
            for var in rec.variants:
                yield rec, var

    @property
    def n_variants(self) -> int:
        return sum(len(r.variants) for r in self.records)


@dataclass(frozen=True)
class Violation:
    kind: str
    ref: str
    message: str = field(default="", compare=False)


def validate_bank(bank: MemoryBank) -> list[Violation]:
    """Return every invariant violation in ``bank``; empty when valid."""
    out: list[Violation] = []
    seen: set[str] = set()
    seen_variants: set[str] = set()
    for rec in bank.records:
        pid = rec.pattern.pattern_id
        if pid in seen:
            out.append(Violation("DuplicatePatternId", pid, "pattern_id appears twice"))
        seen.add(pid)
        if not isinstance(rec.pattern.family, FailureFamily):
            out.append(Violation("UnknownFamily", pid, f"family {rec.pattern.family!r}"))
        if not rec.pattern.symptom_tokens:
            out.append(Violation("EmptySymptomTokens", pid))
        for name in ("historical_acceptance_rate", "historical_false_positive_rate"):
            value = getattr(rec, name)
            if not 0.0 <= value <= 1.0:
                out.append(Violation("RateOutOfRange", pid, f"{name}={value}"))
        local_variants = set()
        for var in rec.variants:
            if var.parent_pattern_id != pid:
                out.append(
                    Violation("DanglingReference", var.variant_id, f"parent {var.parent_pattern_id!r}")
                )
            if var.variant_id in seen_variants:
                out.append(Violation("DuplicateVariantId", var.variant_id))
            seen_variants.add(var.variant_id)
            local_variants.add(var.variant_id)
            if not (var.command_signature or var.path_signature or var.stack_signature):
                out.append(Violation("EmptySignatures", var.variant_id))
        for ep in rec.episodes:
            if ep.parent_variant_id not in local_variants:
                out.append(
                    Violation("DanglingReference", ep.episode_id, f"variant {ep.parent_variant_id!r}")
                )
            if ep.feedback_label not in FEEDBACK_LABELS:
                out.append(Violation("BadFeedbackLabel", ep.episode_id, ep.feedback_label))
    return out


# -- serialization -----------------------------------------------------------


def record_to_dict(rec: MemoryRecord) -> dict[str, Any]:
    p = rec.pattern
    return {
        "pattern": {
            "pattern_id": p.pattern_id,
            "family": p.family.value,
            "symptom_tokens": sorted(p.symptom_tokens),
            "root_cause_tokens": sorted(p.root_cause_tokens),
            "description": p.description,
        },
        "variants": [
            {
                "variant_id": v.variant_id,
                "parent_pattern_id": v.parent_pattern_id,
                "fix_strategy": v.fix_strategy,
                "command_signature": sorted(v.command_signature),
                "path_signature": sorted(v.path_signature),
                "stack_signature": sorted(v.stack_signature),
                "entities": sorted(v.entities),
            }
            for v in rec.variants
        ],
        "episodes": [
            {
                "episode_id": e.episode_id,
                "parent_variant_id": e.parent_variant_id,
                "observed_evidence": e.observed_evidence,
                "validated": e.validated,
                "feedback_label": e.feedback_label,
                "timestamp": e.timestamp,
            }
            for e in rec.episodes
        ],
        "historical_acceptance_rate": float(rec.historical_acceptance_rate),
        "historical_false_positive_rate": float(rec.historical_false_positive_rate),
    }


def record_from_dict(d: dict[str, Any]) -> MemoryRecord:
    p = d["pattern"]
    pattern = Pattern(
        pattern_id=str(p["pattern_id"]),
        family=FailureFamily(p["family"]),
        symptom_tokens=frozenset(p["symptom_tokens"]),
        root_cause_tokens=frozenset(p["root_cause_tokens"]),
        description=str(p.get("description", "")),
    )
    variants = tuple(
        Variant(
            variant_id=str(v["variant_id"]),
            parent_pattern_id=str(v["parent_pattern_id"]),
            fix_strategy=str(v["fix_strategy"]),
            command_signature=frozenset(v.get("command_signature", ())),
            path_signature=frozenset(v.get("path_signature", ())),
            stack_signature=frozenset(v.get("stack_signature", ())),
            entities=frozenset(v.get("entities", ())),
        )
        for v in d["variants"]
    )
    episodes = tuple(
        Episode(
            episode_id=str(e["episode_id"]),
            parent_variant_id=str(e["parent_variant_id"]),
            observed_evidence=str(e["observed_evidence"]),
            validated=bool(e["validated"]),
            feedback_label=str(e["feedback_label"]),
            timestamp=int(e["timestamp"]),
        )
        for e in d.get("episodes", ())
    )
    return MemoryRecord(
        pattern=pattern,
        variants=variants,
        episodes=episodes,
        historical_acceptance_rate=float(d["historical_acceptance_rate"]),
        historical_false_positive_rate=float(d["historical_false_positive_rate"]),
    )


def load_bank(path: str | Path, bank_version: int = 1) -> MemoryBank:
    """Load and validate a ``memory_bank.jsonl`` file.

    Raises:
        MalformedRecord: a line is not valid JSON or misses required fields.
        DuplicatePatternId: two lines share a pattern id.
        DanglingReference: a variant or episode parent does not resolve.
    """
    records: list[MemoryRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = record_from_dict(json.loads(line))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, f"{type(exc).__name__}: {exc}") from exc
        if rec.pattern_id in seen:
            raise DuplicatePatternId(rec.pattern_id)
        seen.add(rec.pattern_id)
        records.append(rec)
    bank = MemoryBank(records=tuple(records), bank_version=bank_version)
    for v in validate_bank(bank):
        if v.kind == "DanglingReference":
            raise DanglingReference(v.ref)
        raise MalformedRecord(0, f"{v.kind} on {v.ref}: {v.message}")
    return bank


def save_bank(bank: MemoryBank, path: str | Path) -> None:
    jsonio.write_jsonl(path, (record_to_dict(r) for r in bank.records))
