import csv

import pytest

from prodrop.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, run
from prodrop.corpus import load_corpus

SMALL = ["d_emb=6", "d_hidden=4", "d_arc=4", "d_rel=4", "dropout=0", "val_fraction=0"]


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "train.jsonl"
    assert run(["generate-data", "--out", str(path), "n_snippets=3", "vocab_size=15",
                "seed=2"]) == EXIT_OK
    return path


def test_generate_data_reproducible(tmp_path, corpus_file):
    again = tmp_path / "again.jsonl"
    run(["generate-data", "--out", str(again), "n_snippets=3", "vocab_size=15", "seed=2"])
    assert again.read_bytes() == corpus_file.read_bytes()
    assert len(load_corpus(corpus_file)) == 3


def test_prints_resolved_config(tmp_path, capsys, corpus_file):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nepochs = 7\nlr = 0.5\n")
    out = tmp_path / "m.npz"
    assert run(["train", "--corpus", str(corpus_file), "--out", str(out), "--config", str(conf),
                "epochs=1", *SMALL]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "epochs = 1" in printed and "lr = 0.5" in printed


def test_train_predict_evaluate(tmp_path, capsys, corpus_file):
    ckpt, log = tmp_path / "m.npz", tmp_path / "log.csv"
    assert run(["train", "--corpus", str(corpus_file), "--out", str(ckpt), "--log", str(log),
                "--last", str(tmp_path / "last.npz"), "epochs=2", *SMALL]) == EXIT_OK
    assert len(list(csv.reader(log.open()))) == 3
    preds = tmp_path / "pred.jsonl"
    assert run(["predict", "--corpus", str(corpus_file), "--checkpoint", str(ckpt),
                "--out", str(preds)]) == EXIT_OK
    assert len(load_corpus(preds)) == 3
    capsys.readouterr()
    assert run(["evaluate", "--corpus", str(corpus_file), "--predictions", str(preds)]) == EXIT_OK
    from_file = capsys.readouterr().out.split("# resolved config")[1]
    assert run(["evaluate", "--corpus", str(corpus_file), "--checkpoint", str(ckpt)]) == EXIT_OK
    from_model = capsys.readouterr().out.split("# resolved config")[1]
    assert from_file == from_model


def test_evaluate_gold_as_prediction(capsys, corpus_file):
    assert run(["evaluate", "--corpus", str(corpus_file), "--predictions",
                str(corpus_file)]) == EXIT_OK
    out = capsys.readouterr().out
    for key in ("dpr_p", "dpr_r", "dpr_f", "arc_f", "rel_f"):
        assert f"{key}=1.000000" in out


def test_sweep_writes_table(tmp_path, corpus_file):
    table = tmp_path / "sweep.csv"
    assert run(["sweep", "--corpus", str(corpus_file), "--out", str(table), "--ratios", "0.5,1",
                "epochs=1", *SMALL]) == EXIT_OK
    rows = list(csv.DictReader(table.open()))
    assert [r["ratio"] for r in rows] == ["0.5", "1.0"]


def test_gradcheck_small(capsys):
    assert run(["gradcheck", "d_emb=3", "d_hidden=2", "d_arc=2", "d_rel=2",
                "relgcn_layers=1", "--snippets", "1"]) == EXIT_OK
    assert "max_rel_err=" in capsys.readouterr().out


def test_gradcheck_failure_exit_code():
    assert run(["gradcheck", "d_emb=3", "d_hidden=2", "d_arc=2", "d_rel=2", "relgcn_layers=1",
                "--snippets", "1", "--tol", "0"]) == EXIT_NUMERICAL


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["generate-data"],
    ["generate-data", "--out", "x.jsonl", "no_equals_sign"],
    ["generate-data", "--out", "x.jsonl", "unknown_key=1"],
    ["train", "--corpus", "c.jsonl", "--out", "m.npz", "epochs=abc"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == EXIT_USAGE


def test_evaluate_needs_one_source(corpus_file):
    assert run(["evaluate", "--corpus", str(corpus_file)]) == EXIT_USAGE


def test_validation_errors(tmp_path, corpus_file):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{broken\n")
    assert run(["evaluate", "--corpus", str(bad), "--predictions", str(bad)]) == EXIT_VALIDATION
    assert run(["train", "--corpus", str(tmp_path / "missing.jsonl"),
                "--out", str(tmp_path / "m.npz")]) == EXIT_VALIDATION


def test_numerical_failure_exit_code(tmp_path, corpus_file):
    assert run(["train", "--corpus", str(corpus_file), "--out", str(tmp_path / "m.npz"),
                "epochs=3", "lr=1e300", *SMALL]) == EXIT_NUMERICAL
