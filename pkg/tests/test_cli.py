import json
from pathlib import Path

import pytest

from cadrcn.cli import main

TINY_MODEL = {"word_dim": 8, "type_dim": 8, "bi_hidden": 4, "uni_hidden": 8, "capsule_dim": 4, "batch_size": 32}


def run_all(root: Path) -> Path:
    """Every subcommand once, chained; returns the root directory."""
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "model.json"
    cfg.write_text(json.dumps(TINY_MODEL))
    assert main(["generate", "--n-documents", "12", "--seed", "4", "--out-dir", str(root / "gen")]) == 0
    assert main(["ner", "--input", str(root / "gen/documents.jsonl"), "--output", str(root / "ner.jsonl")]) == 0
    assert main(["build-dataset", "--instances", str(root / "gen/instances.jsonl"), "--seed", "1",
                 "--out-dir", str(root / "data")]) == 0
    assert main(["train", "--train", str(root / "data/train.jsonl"), "--dev", str(root / "data/test.jsonl"),
                 "--config", str(cfg), "--epochs", "2", "--seed", "2", "--out-dir", str(root / "model")]) == 0
    ckpt = str(root / "model/checkpoint.json")
    assert main(["eval-relations", "--checkpoint", ckpt, "--instances", str(root / "data/test.jsonl"),
                 "--out-dir", str(root / "rel")]) == 0
    assert main(["eval-severity", "--docs", str(root / "gen/documents.jsonl"), "--oracle",
                 "--out-dir", str(root / "oracle")]) == 0
    assert main(["eval-severity", "--docs", str(root / "gen/documents.jsonl"), "--checkpoint", ckpt,
                 "--out-dir", str(root / "sev")]) == 0
    assert main(["classify", "--input", str(root / "gen/documents.jsonl"), "--checkpoint", ckpt,
                 "--output", str(root / "reports.jsonl")]) == 0
    return root


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    return run_all(base / "a"), run_all(base / "b")


EXPECTED = [
    "gen/documents.jsonl", "gen/instances.jsonl", "gen/summary.json", "gen/class_counts.tsv",
    "gen/class_counts.png", "ner.jsonl", "data/train.jsonl", "data/test.jsonl", "data/split_counts.tsv",
    "data/split_counts.png", "model/config.json", "model/train_log.jsonl", "model/checkpoint.json",
    "model/training_curve.png", "rel/relation_metrics.json", "rel/relation_metrics.tsv", "rel/predictions.jsonl",
    "rel/relation_scores.png", "rel/relation_confusion.png", "oracle/severity_metrics.json",
    "oracle/severity_metrics.tsv", "oracle/reports.jsonl", "oracle/severity_confusion.png",
    "sev/severity_metrics.json", "reports.jsonl",
]


def test_outputs_exist(runs):
    a, _ = runs
    for rel in EXPECTED:
        assert (a / rel).is_file() and (a / rel).stat().st_size > 0, rel


def test_every_output_bit_identical(runs):
    a, b = runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) >= len(EXPECTED)
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_oracle_severity_is_perfect(runs):
    a, _ = runs
    metrics = json.loads((a / "oracle/severity_metrics.json").read_text())
    assert metrics["accuracy"] == 1.0


def test_training_log_fields(runs):
    a, _ = runs
    rows = [json.loads(line) for line in (a / "model/train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2]
    assert set(rows[0]) == {"epoch", "loss", "train_f1", "dev_f1"}


def test_ner_records(runs):
    a, _ = runs
    first = json.loads((a / "ner.jsonl").read_text(encoding="utf-8").splitlines()[0])
    assert first["id"] == "doc00000" and first["entities"]


def test_classify_reports(runs):
    a, _ = runs
    lines = (a / "reports.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 12
    rec = json.loads(lines[0])
    assert {"id", "relations", "lesions", "total", "level", "left_total", "right_total"} <= set(rec)


def test_empty_input_gives_empty_report(runs, tmp_path, capsys):
    a, _ = runs
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    out = tmp_path / "out.jsonl"
    assert main(["classify", "--input", str(empty), "--checkpoint", str(a / "model/checkpoint.json"),
                 "--output", str(out)]) == 0
    assert out.read_text() == ""


def test_plain_text_input(runs, tmp_path):
    a, _ = runs
    src = tmp_path / "texts.txt"
    src.write_text("左前降支中段40%狭窄，右前降支、右回旋支未见明显狭窄。\n", encoding="utf-8")
    out = tmp_path / "out.jsonl"
    assert main(["classify", "--input", str(src), "--checkpoint", str(a / "model/checkpoint.json"),
                 "--output", str(out)]) == 0
    assert json.loads(out.read_text(encoding="utf-8"))["id"] == "line0"


@pytest.mark.parametrize("argv", [
    ["classify", "--input", "missing.txt", "--checkpoint", "missing.json", "--output", "x.jsonl"],
    ["eval-relations", "--checkpoint", "missing.json", "--instances", "x.jsonl", "--out-dir", "o"],
    ["ner", "--input", "missing.txt", "--output", "x.jsonl"],
    ["ner", "--input", "README.md", "--lexicon", "nope.json", "--output", "x.jsonl"],
])
def test_missing_files_exit_nonzero(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(Path(__file__).resolve().parents[1])
    argv = [str(tmp_path / a) if a.startswith(("x.", "o")) else a for a in argv]
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert "missing" in err or "nope.json" in err


def test_severity_needs_checkpoint_or_oracle(runs, tmp_path, capsys):
    a, _ = runs
    assert main(["eval-severity", "--docs", str(a / "gen/documents.jsonl"), "--out-dir", str(tmp_path)]) == 2
    assert "--checkpoint" in capsys.readouterr().err


def test_bad_discard_fraction(runs, tmp_path):
    a, _ = runs
    assert main(["build-dataset", "--instances", str(a / "gen/instances.jsonl"), "--discard", "1.5",
                 "--out-dir", str(tmp_path)]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code != 0
