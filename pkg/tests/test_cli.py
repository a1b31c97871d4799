import logging
from collections import Counter

import pytest

from app.main import run
from app.utils.config import load_run_config
from app.utils.corpus import load_tsv

TINY = ["--set", "layers=1", "--set", "model_dim=8", "--set", "heads=2", "--set", "ff_dim=16",
        "--set", "max_len=32", "--set", "epochs=2", "--set", "lr=0.003", "--set", "batch_size=16"]


@pytest.fixture(autouse=True)
def restore_root_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_synth_writes_a_balanced_corpus(tmp_path, capsys):
    out = tmp_path / "train.tsv"
    assert run(["synth", "--task", "track2", "--n", "700", "--seed", "11", "--out", str(out)]) == 0
    counts = Counter(r.emotion.value for r in load_tsv(out).records)
    assert set(counts.values()) == {100}
    assert "700 records" in capsys.readouterr().out


def test_synth_transfer_benchmark(tmp_path):
    assert run(["synth", "--transfer", "--seed", "2", "--out", str(tmp_path)]) == 0
    assert len(load_tsv(tmp_path / "main.tsv")) == 140
    assert len(load_tsv(tmp_path / "heldout.tsv")) == 140


def test_missing_config_exits_1(tmp_path, capsys):
    code = run(["train", "--config", str(tmp_path / "missing.cfg"), "--train", "x.tsv"])
    assert code == 1
    assert "missing.cfg" in capsys.readouterr().err


def test_unknown_subcommand_exits_1(capsys):
    assert run(["frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


def test_help_exits_0(capsys):
    assert run(["--help"]) == 0


def test_malformed_data_exits_2(tmp_path, data_dir, capsys):
    header, first = (data_dir / "dev_fixture.tsv").read_text(encoding="utf-8").splitlines()[:2]
    bad = tmp_path / "bad.tsv"
    bad.write_text(f"{header}\n{first.replace(chr(9) + 'sadness' + chr(9), chr(9) + 'bliss' + chr(9))}\n",
                   encoding="utf-8")
    predictions = tmp_path / "one.txt"
    predictions.write_text("joy\n", encoding="utf-8")
    code = run(["evaluate", "--task", "track2", "--predictions", str(predictions), "--data", str(bad)])
    assert code == 2
    assert "row 2" in capsys.readouterr().err


@pytest.mark.parametrize("task", ["track1", "track2"])
def test_evaluate_prediction_file_reproduces_golden_report(task, data_dir, tmp_path, capsys):
    code = run(["evaluate", "--task", task, "--predictions", str(data_dir / f"dev_predictions_{task}.txt"),
                "--data", str(data_dir / "dev_fixture.tsv"), "--out", str(tmp_path / "report.json")])
    assert code == 0
    assert capsys.readouterr().out == (data_dir / f"dev_report_{task}.txt").read_text(encoding="utf-8")
    assert (tmp_path / "report.json").is_file()


def test_prediction_count_mismatch_exits_2(tmp_path, data_dir):
    short = tmp_path / "short.txt"
    short.write_text("joy\n", encoding="utf-8")
    assert run(["evaluate", "--task", "track2", "--predictions", str(short),
                "--data", str(data_dir / "dev_fixture.tsv")]) == 2


def train_and_evaluate(tmp_path, name, task, extra, capsys):
    data = tmp_path / f"{task}.tsv"
    if not data.exists():
        n = "70" if task == "track2" else "40"
        assert run(["synth", "--task", task, "--n", n, "--seed", "4", "--out", str(data)]) == 0
    run_dir = tmp_path / name
    assert run(["train", "--config", f"configs/{task}.cfg", "--train", str(data), "--out", str(run_dir)]
               + TINY + extra) == 0
    capsys.readouterr()
    assert run(["evaluate", "--model", str(run_dir), "--data", str(data)]) == 0
    report = capsys.readouterr().out
    predictions = tmp_path / f"{name}.pred"
    assert run(["predict", "--model", str(run_dir / "model"), "--data", str(data), "--out", str(predictions)]) == 0
    return run_dir, report, predictions.read_text(encoding="utf-8")


@pytest.mark.parametrize("task, extra", [
    ("track2", []),
    ("track2", ["--model-kind", "classifier"]),
    ("track1", ["--regressor", "gbt", "--set", "gbt_trees=5"]),
])
def test_end_to_end_runs_are_reproducible(task, extra, tmp_path, capsys, config_dir, monkeypatch):
    monkeypatch.chdir(config_dir.parent)
    first_dir, first_report, first_pred = train_and_evaluate(tmp_path, "a", task, extra, capsys)
    _, second_report, second_pred = train_and_evaluate(tmp_path, "b", task, extra, capsys)
    assert first_report == second_report
    assert first_pred == second_pred
    assert first_report.splitlines()[-1].split() == ["n", "70" if task == "track2" else "40"]

    log = (first_dir / "train.log").read_text(encoding="utf-8").splitlines()
    assert log[0].startswith("# ")
    assert any(line.split("\t")[0] == "1" for line in log)
    saved = load_run_config(first_dir / "config.cfg")
    assert saved.task == task
    assert saved.model_dim == 8
    assert (first_dir / "model" / "manifest.json").is_file()
    if task == "track2":
        assert (first_dir / "validation.json").is_file()
