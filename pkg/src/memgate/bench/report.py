"""Write suite results to CSV/JSON and render them back as readable tables.

Every CSV row carries the dataset digest, and ``bench_manifest.json`` records
a sha256 per non-timing output file, so a report can refuse outputs that were
mixed from different datasets or edited after the run.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .. import jsonio
from ..baselines import ABSTENTION_THRESHOLD, EPSILON_EXPLORATION, LINUCB_RIDGE, LINUCB_WIDTH, PolicyKind
from ..policy import DEFAULT_COSTS, DEFAULT_LEARNING_RATE, Knobs, RewardConfig
from . import harness as h
from .generate import Dataset

SUITES = ("retrieval", "paraphrase", "hardneg", "abstention", "replay", "ablation", "sweep", "budget", "hotpath")
TIMING_FILES = frozenset({"hotpath.csv"})
SUMMARY = "summary.json"
BENCH_MANIFEST = "bench_manifest.json"
AUDIT_LOG = "audit_full_rscb_mc.jsonl"

COLUMNS: Mapping[str, tuple[str, ...]] = {
    "retrieval": ("method", "recall_at_1", "recall_at_3", "mrr", "ndcg_at_3", "top1_accuracy", "n_queries"),
    "paraphrase": (
        "method", "original_r1", "paraphrase_r1", "original_mrr", "paraphrase_mrr", "n_original", "n_paraphrase",
    ),
    "hardneg": (
        "method", "false_positive_rate", "unsafe_injection_rate", "correct_safe_non_injection", "n_cases", "n_seeds",
    ),
    "abstention": ("method", "answer_rate", "risk_rate", "correct_abstention_rate", "wrong_abstention_rate", "n_cases"),
    "replay": (
        "method", "seed", "success_rate", "fp_rate", "abstention_rate", "verified_reuse_rate",
        "correct_abstention_rate", "avg_reward", "cumulative_reward", "regret_proxy",
        "n_events", "n_success", "n_fp", "n_rejected", "n_wrong_abstain",
    ),
    "ablation": (
        "variant", "seed", "success_rate", "fp_rate", "correct_abstention_rate", "cumulative_reward",
        "hardneg_fp_rate", "hardneg_unsafe_rate",
    ),
    "sweep": (
        "config", "alpha", "beta", "kappa", "gamma", "lam", "status",
        "success_rate", "fp_rate", "cumulative_reward", "fp_count", "utility",
    ),
    "budget": ("mode", "tokens", "latency_ms", "success_proxy", "fp_influence_proxy", "utility"),
    "hotpath": ("method", "mean_us", "p95_us", "n_decisions", "success_rate", "fp_rate"),
}


class ReportMismatch(RuntimeError):
    """Outputs in a report directory do not belong together."""


# -- suites to rows ----------------------------------------------------------


def _retrieval_rows(ds: Dataset) -> list[dict]:
    return [
        {"method": m.value, **asdict(h.eval_retrieval(m, ds.queries, ds.bank))} for m in h.RetrievalMethod
    ]


def _paraphrase_rows(ds: Dataset) -> list[dict]:
    rows = []
    for m in h.RetrievalMethod:
        o = h.eval_retrieval(m, ds.queries, ds.bank)
        p = h.eval_retrieval(m, ds.paraphrases, ds.bank)
        rows.append(
            {
                "method": m.value,
                "original_r1": o.recall_at_1,
                "paraphrase_r1": p.recall_at_1,
                "original_mrr": o.mrr,
                "paraphrase_mrr": p.mrr,
                "n_original": o.n_queries,
                "n_paraphrase": p.n_queries,
            }
        )
    return rows


def _hardneg_rows(ds: Dataset, seeds: Sequence[int]) -> list[dict]:
    rows = []
    for kind in PolicyKind:
        runs = [h.run_hard_negative(kind, ds.hard_negatives, ds.bank, s) for s in seeds]
        rows.append(
            {
                "method": kind.value,
                "false_positive_rate": sum(r.false_positive_rate for r in runs) / len(runs),
                "unsafe_injection_rate": sum(r.unsafe_injection_rate for r in runs) / len(runs),
                "correct_safe_non_injection": sum(r.correct_abstention_rate for r in runs) / len(runs),
                "n_cases": runs[0].n_cases,
                "n_seeds": len(runs),
            }
        )
    return rows


def _abstention_rows(ds: Dataset, seeds: Sequence[int]) -> list[dict]:
    return [{"method": k.value, **asdict(h.run_abstention(k, ds, seeds[0]))} for k in PolicyKind]


def _replay_rows(ds: Dataset, seeds: Sequence[int], audit: list) -> list[dict]:
    rows = []
    for kind in PolicyKind:
        result = h.run_replay(kind, ds, seeds, audit=audit if kind is PolicyKind.FULL_RSCB_MC else None)
        for key, m in result.items():
            rows.append({"method": kind.value, "seed": str(key), **asdict(m)})
    return rows


def _ablation_rows(ds: Dataset, seeds: Sequence[int]) -> list[dict]:
    rows = []
    for v in h.ABLATION_VARIANTS:
        res = h.run_ablation(v, ds, seeds)
        for key, m in res.replay.items():
            rows.append(
                {
                    "variant": v,
                    "seed": str(key),
                    "success_rate": m.success_rate,
                    "fp_rate": m.fp_rate,
                    "correct_abstention_rate": m.correct_abstention_rate,
                    "cumulative_reward": m.cumulative_reward,
                    "hardneg_fp_rate": res.safety.false_positive_rate,
                    "hardneg_unsafe_rate": res.safety.unsafe_injection_rate,
                }
            )
    return rows


def _sweep_rows(ds: Dataset, seeds: Sequence[int]) -> list[dict]:
    rows = []
    for r in h.run_reward_sweep(ds, seeds=seeds):
        p = r.point
        row = {
            "config": p.name, "alpha": p.alpha, "beta": p.beta, "kappa": p.kappa,
            "gamma": p.gamma, "lam": p.lam, "status": r.status,
            "success_rate": "", "fp_rate": "", "cumulative_reward": "", "fp_count": "", "utility": "",
        }
        if r.metrics is not None:
            row.update(
                success_rate=r.metrics.success_rate,
                fp_rate=r.metrics.fp_rate,
                cumulative_reward=r.metrics.cumulative_reward,
                fp_count=r.metrics.n_fp,
                utility=r.utility,
            )
        rows.append(row)
    return rows


def _budget_rows(ds: Dataset) -> list[dict]:
    return [asdict(s) for s in h.run_context_budget(ds.context_budget)]


def _hotpath_rows(ds: Dataset, seeds: Sequence[int]) -> list[dict]:
    stats = h.run_hotpath(list(PolicyKind), ds, seed=seeds[0])
    return [{"method": k, **asdict(v)} for k, v in stats.items()]


# -- writing -----------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return jsonio.format_float(v)
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping], digest: str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns) + ["data_digest"])
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns] + [digest])
    path.write_text(buf.getvalue(), encoding="utf-8")


def hyperparameters() -> dict:
    return {
        "reward_defaults": asdict(RewardConfig()),
        "knobs": asdict(Knobs()),
        "costs": {a.value: c for a, c in DEFAULT_COSTS.items()},
        "learning_rate": DEFAULT_LEARNING_RATE,
        "epsilon_exploration": EPSILON_EXPLORATION,
        "linucb_ridge": LINUCB_RIDGE,
        "linucb_width": LINUCB_WIDTH,
        "static_abstention_threshold": ABSTENTION_THRESHOLD,
        "sweep_low_gamma_alpha": h.LOW_GAMMA_ALPHA,
        "budget_utility": {"per_token": h.BUDGET_TOKEN_COST, "per_ms": h.BUDGET_LATENCY_COST},
        "hotpath": {"decisions": h.HOTPATH_DECISIONS, "warmup": h.HOTPATH_WARMUP},
    }


def parse_suites(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise ValueError("no suite given")
    if "all" in names:
        return list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    return [s for s in SUITES if s in names]


def run_bench(ds: Dataset, suites: Sequence[str], out_dir: str | Path, seeds: Sequence[int] | None = None) -> Path:
    """Run ``suites`` on ``ds`` and write CSVs, the summary, and the bench manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(ds.replay_seeds if seeds is None else seeds)
    digest = ds.digest
    audit: list = []
    builders = {
        "retrieval": lambda: _retrieval_rows(ds),
        "paraphrase": lambda: _paraphrase_rows(ds),
        "hardneg": lambda: _hardneg_rows(ds, seeds),
        "abstention": lambda: _abstention_rows(ds, seeds),
        "replay": lambda: _replay_rows(ds, seeds, audit),
        "ablation": lambda: _ablation_rows(ds, seeds),
        "sweep": lambda: _sweep_rows(ds, seeds),
        "budget": lambda: _budget_rows(ds),
        "hotpath": lambda: _hotpath_rows(ds, seeds),
    }
    results: dict[str, list[dict]] = {}
    files: dict[str, str] = {}
    for suite in suites:
        rows = builders[suite]()
        name = f"{suite}.csv"
        write_csv(out / name, COLUMNS[suite], rows, digest)
        if name in TIMING_FILES:
            # timings stay out of the summary so it is reproducible
            rows = [{k: r[k] for k in ("method", "n_decisions", "success_rate", "fp_rate")} for r in rows]
        else:
            files[name] = jsonio.file_digest(out / name)
        results[suite] = rows
    if audit:
        jsonio.write_jsonl(out / AUDIT_LOG, audit)
        files[AUDIT_LOG] = jsonio.file_digest(out / AUDIT_LOG)
    if "budget" in results:
        results["budget_ordering_holds"] = h.budget_ordering_holds(h.run_context_budget(ds.context_budget))
    summary = {
        "data_digest": digest,
        "data_manifest": {k: ds.manifest[k] for k in ("seed", "scale", "replay_seeds", "counts")},
        "seeds": seeds,
        "suites": list(suites),
        "hyperparameters": hyperparameters(),
        "results": results,
    }
    jsonio.write_json(out / SUMMARY, summary)
    files[SUMMARY] = jsonio.file_digest(out / SUMMARY)
    jsonio.write_json(
        out / BENCH_MANIFEST,
        {"data_digest": digest, "files": files, "timing_files": sorted(TIMING_FILES & {f"{s}.csv" for s in suites})},
    )
    return out


# -- reading -----------------------------------------------------------------


def _read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def verify_report_dir(in_dir: str | Path) -> dict:
    """Check digests and dataset provenance; return the bench manifest."""
    d = Path(in_dir)
    try:
        manifest = jsonio.read_json(d / BENCH_MANIFEST)
        summary = jsonio.read_json(d / SUMMARY)
    except FileNotFoundError as exc:
        raise ReportMismatch(f"missing {exc.filename}") from exc
    digest = manifest.get("data_digest")
    if summary.get("data_digest") != digest:
        raise ReportMismatch("summary.json was produced from a different dataset")
    for name, sha in manifest.get("files", {}).items():
        p = d / name
        if not p.is_file():
            raise ReportMismatch(f"{name} is missing")
        if jsonio.file_digest(p) != sha:
            raise ReportMismatch(f"{name} does not match the bench manifest")
    for suite in summary.get("suites", []):
        p = d / f"{suite}.csv"
        if not p.is_file():
            raise ReportMismatch(f"{p.name} is missing")
        if any(r.get("data_digest") != digest for r in _read_csv(p)):
            raise ReportMismatch(f"{p.name} holds rows from a different dataset")
    return manifest


def _pct(v: str) -> str:
    return f"{100.0 * float(v):.1f}%" if v != "" else "n/a"


def _num(v: str, nd: int = 3) -> str:
    return f"{float(v):.{nd}f}" if v != "" else "n/a"


def _md_table(title: str, header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    lines = [f"## {title}", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _render_md(d: Path, suites: Sequence[str]) -> str:
    parts = ["# Benchmark report", ""]
    rows = {s: _read_csv(d / f"{s}.csv") for s in suites}
    if "retrieval" in rows:
        parts.append(_md_table(
            "Canonical retrieval",
            ["Method", "R@1", "R@3", "MRR", "nDCG@3", "Top-1", "Queries"],
            [[r["method"], _pct(r["recall_at_1"]), _pct(r["recall_at_3"]), _pct(r["mrr"]),
              _pct(r["ndcg_at_3"]), _pct(r["top1_accuracy"]), r["n_queries"]] for r in rows["retrieval"]],
        ))
    if "paraphrase" in rows:
        parts.append(_md_table(
            "Paraphrase robustness",
            ["Method", "Original R@1", "Paraphrase R@1", "Original MRR", "Paraphrase MRR"],
            [[r["method"], _pct(r["original_r1"]), _pct(r["paraphrase_r1"]), _pct(r["original_mrr"]),
              _pct(r["paraphrase_mrr"])] for r in rows["paraphrase"]],
        ))
    if "hardneg" in rows:
        parts.append(_md_table(
            "Hard-negative safety",
            ["Method", "False-positive", "Unsafe injection", "Correct safe non-injection", "Cases"],
            [[r["method"], _pct(r["false_positive_rate"]), _pct(r["unsafe_injection_rate"]),
              _pct(r["correct_safe_non_injection"]), r["n_cases"]] for r in rows["hardneg"]],
        ))
    if "abstention" in rows:
        parts.append(_md_table(
            "Abstention set",
            ["Method", "Answered", "Risk", "Correct abstention", "Wrong abstention", "Cases"],
            [[r["method"], _pct(r["answer_rate"]), _pct(r["risk_rate"]), _pct(r["correct_abstention_rate"]),
              _pct(r["wrong_abstention_rate"]), r["n_cases"]] for r in rows["abstention"]],
        ))
    if "replay" in rows:
        parts.append(_md_table(
            "Offline replay (pooled over seeds)",
            ["Method", "Success", "False-positive", "Abstention", "Verified reuse", "Cum. reward", "Regret"],
            [[r["method"], _pct(r["success_rate"]), _pct(r["fp_rate"]), _pct(r["abstention_rate"]),
              _pct(r["verified_reuse_rate"]), _num(r["cumulative_reward"]), _num(r["regret_proxy"])]
             for r in rows["replay"] if r["seed"] == "pooled"],
        ))
    if "ablation" in rows:
        parts.append(_md_table(
            "Ablations (pooled over seeds)",
            ["Variant", "False-positive", "Correct abstention", "Cum. reward", "Hard-negative FP"],
            [[r["variant"], _pct(r["fp_rate"]), _pct(r["correct_abstention_rate"]), _num(r["cumulative_reward"]),
              _pct(r["hardneg_fp_rate"])] for r in rows["ablation"] if r["seed"] == "pooled"],
        ))
    if "sweep" in rows:
        parts.append(_md_table(
            "Reward sweep",
            ["Config", "Status", "Success", "False-positive", "Cum. reward", "Utility"],
            [[r["config"], r["status"], _pct(r["success_rate"]), _pct(r["fp_rate"]),
              _num(r["cumulative_reward"]), _num(r["utility"])] for r in rows["sweep"]],
        ))
    if "budget" in rows:
        parts.append(_md_table(
            "Context budget",
            ["Mode", "Tokens", "Latency", "Exp. success", "FP influence", "Utility"],
            [[r["mode"], _num(r["tokens"], 1), f"{_num(r['latency_ms'], 1)} ms", _pct(r["success_proxy"]),
              _pct(r["fp_influence_proxy"]), _pct(r["utility"])] for r in rows["budget"]],
        ))
    if "hotpath" in rows:
        parts.append(_md_table(
            "Hot-path decisions",
            ["Method", "Success", "False-positive", "Mean lat. (us)", "p95 lat. (us)", "Decisions"],
            [[r["method"], _pct(r["success_rate"]), _pct(r["fp_rate"]), _num(r["mean_us"]),
              _num(r["p95_us"]), r["n_decisions"]] for r in rows["hotpath"]],
        ))
    return "\n".join(parts)


def render_report(in_dir: str | Path, fmt: str = "md") -> str:
    """Render a verified report directory as markdown, JSON, or concatenated CSV."""
    d = Path(in_dir)
    verify_report_dir(d)
    summary = jsonio.read_json(d / SUMMARY)
    suites = summary["suites"]
    if fmt == "md":
        return _render_md(d, suites)
    if fmt == "json":
        return jsonio.dumps(summary) + "\n"
    if fmt == "csv":
        return "".join(f"# {s}\n" + (d / f"{s}.csv").read_text(encoding="utf-8") for s in suites)
    raise ValueError(f"unknown format {fmt!r}")
