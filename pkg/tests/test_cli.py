from __future__ import annotations

import csv
import json

import pytest

from memgate import jsonio
from memgate.bench import report
from memgate.cli import main


@pytest.fixture(scope="module")
def bench_dir(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert main(["bench", "--suite", "retrieval,replay,budget", "--data", str(data_dir), "--out", str(out)]) == 0
    return out


def test_gen_writes_valid_dataset(tmp_path, capsys):
    assert main(["gen", "--seed", "1337", "--out", str(tmp_path / "d"), "--seeds", "1337,2024"]) == 0
    assert (tmp_path / "d" / "manifest.json").is_file()
    assert "wrote dataset" in capsys.readouterr().out


def test_bad_seeds_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--out", str(tmp_path), "--seeds", "a,b"])
    assert exc.value.code == 2


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_missing_data_dir(tmp_path):
    assert main(["bench", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


def test_unknown_suite(data_dir, tmp_path):
    assert main(["bench", "--suite", "vibes", "--data", str(data_dir), "--out", str(tmp_path)]) == 2


def test_invalid_dataset_exit_one(data_dir, tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    for p in data_dir.iterdir():
        (d / p.name).write_bytes(p.read_bytes())
    (d / "context_budget.jsonl").unlink()
    assert main(["bench", "--data", str(d), "--out", str(tmp_path / "o")]) == 1


def test_seed_not_in_dataset(data_dir, tmp_path):
    assert main(["bench", "--suite", "replay", "--data", str(data_dir), "--out", str(tmp_path), "--seeds", "99"]) == 1


def test_bench_outputs(bench_dir, data_dir):
    digest = jsonio.read_json(data_dir / "manifest.json")["digest"]
    with open(bench_dir / "replay.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10 * 3
    assert {r["data_digest"] for r in rows} == {digest}
    manifest = jsonio.read_json(bench_dir / report.BENCH_MANIFEST)
    assert set(manifest["files"]) == {"retrieval.csv", "replay.csv", "budget.csv", report.AUDIT_LOG, report.SUMMARY}
    summary = jsonio.read_json(bench_dir / report.SUMMARY)
    assert summary["results"]["budget_ordering_holds"] is True
    assert summary["hyperparameters"]["reward_defaults"]["gamma"] == 4.0


@pytest.mark.parametrize("fmt", ["md", "json", "csv"])
def test_report_formats(bench_dir, capsys, fmt):
    assert main(["report", "--in", str(bench_dir), "--format", fmt]) == 0
    out = capsys.readouterr().out
    if fmt == "md":
        assert "## Offline replay" in out and "full_rscb_mc" in out
    elif fmt == "json":
        assert json.loads(out)["suites"] == ["retrieval", "replay", "budget"]
    else:
        assert out.startswith("# retrieval\n")


def test_report_rejects_edited_output(bench_dir, tmp_path):
    d = tmp_path / "r"
    d.mkdir()
    for p in bench_dir.iterdir():
        (d / p.name).write_bytes(p.read_bytes())
    text = (d / "budget.csv").read_text()
    (d / "budget.csv").write_text(text.replace("no_memory", "no_memory_x", 1))
    assert main(["report", "--in", str(d)]) == 1


def test_report_rejects_mixed_digest(bench_dir, tmp_path):
    d = tmp_path / "r"
    d.mkdir()
    for p in bench_dir.iterdir():
        (d / p.name).write_bytes(p.read_bytes())
    summary = jsonio.read_json(d / report.SUMMARY)
    summary["data_digest"] = "0" * 64
    jsonio.write_json(d / report.SUMMARY, summary)
    assert main(["report", "--in", str(d)]) == 1


def test_report_missing_dir(tmp_path):
    assert main(["report", "--in", str(tmp_path / "nope")]) == 2
    assert main(["report", "--in", str(tmp_path)]) == 1


def test_parse_suites():
    assert report.parse_suites("all") == list(report.SUITES)
    assert report.parse_suites("replay,retrieval") == ["retrieval", "replay"]
    with pytest.raises(ValueError):
        report.parse_suites(",")
