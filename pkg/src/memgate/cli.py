"""Command line entry point: ``memgate gen | bench | report``.

Exit codes: 0 on success, 1 when a dataset or report fails validation,
2 on usage errors (bad arguments, missing directories).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .bench import report
from .bench.generate import DEFAULT_REPLAY_SEEDS, DEFAULT_SEED, GenerationError, GeneratorConfig, IoFailure
from .bench.generate import generate_artifacts, load_dataset, validate_dataset

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError("seeds must be distinct")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memgate", description="Risk-aware memory injection benchmark.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a benchmark dataset")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--seeds", type=_seed_list, default=DEFAULT_REPLAY_SEEDS, help="replay seeds, e.g. 1337,2024")

    b = sub.add_parser("bench", help="run benchmark suites over a dataset")
    b.add_argument("--suite", default="all", help=f"comma separated subset of: all,{','.join(report.SUITES)}")
    b.add_argument("--data", required=True, type=Path)
    b.add_argument("--out", required=True, type=Path)
    b.add_argument("--seeds", type=_seed_list, default=None, help="defaults to the dataset's replay seeds")

    r = sub.add_parser("report", help="render benchmark outputs")
    r.add_argument("--in", dest="in_dir", required=True, type=Path)
    r.add_argument("--format", choices=("md", "json", "csv"), default="md")
    return p


def _require_dir(path: Path, what: str) -> None:
    if not path.is_dir():
        raise UsageError(f"{what} directory {path} does not exist")


def _gen(args) -> int:
    try:
        out = generate_artifacts(GeneratorConfig(seed=args.seed, replay_seeds=args.seeds), args.out)
    except (GenerationError, IoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problems = validate_dataset(out)
    for v in problems:
        print(f"invalid: {v}", file=sys.stderr)
    if problems:
        return EXIT_INVALID
    print(f"wrote dataset to {out}")
    return EXIT_OK


def _bench(args) -> int:
    _require_dir(args.data, "data")
    try:
        suites = report.parse_suites(args.suite)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    problems = validate_dataset(args.data)
    for v in problems:
        print(f"invalid: {v}", file=sys.stderr)
    if problems:
        return EXIT_INVALID
    ds = load_dataset(args.data)
    seeds = args.seeds
    if seeds is not None:
        missing = [s for s in seeds if s not in ds.replay_seeds]
        if missing:
            print(f"invalid: dataset has no replay events for seed(s) {missing}", file=sys.stderr)
            return EXIT_INVALID
    out = report.run_bench(ds, suites, args.out, seeds)
    print(f"wrote {', '.join(suites)} to {out}")
    return EXIT_OK


def _report(args) -> int:
    _require_dir(args.in_dir, "input")
    try:
        text = report.render_report(args.in_dir, args.format)
    except report.ReportMismatch as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(text)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"gen": _gen, "bench": _bench, "report": _report}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"memgate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
