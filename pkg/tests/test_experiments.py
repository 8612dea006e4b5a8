import json
import math

import numpy as np
import pytest

from szlab import cli
from szlab.data import synthetic_blobs, write_mnist_idx
from szlab.experiments import (CSV_FIELDS, Overrides, emit_csv, get_preset, load_data, read_csv, run_sweep,
                               session_seed, summarize)
from szlab.networks import build
from szlab.train import MetricsRecord, TrainConfig, evaluate, fit
from szlab.window import read_pgm


@pytest.fixture(scope="module")
def mnist_like():
    train = synthetic_blobs(600, 10, 784, seed=1, separation=12, shape=(28, 28, 1))
    val = synthetic_blobs(200, 10, 784, seed=1, separation=12, shape=(28, 28, 1))
    return train, val


def test_degenerate_disorganized_sweep_equals_evaluate(mnist_like):
    train, val = mnist_like
    ov = Overrides(epochs=1, sessions=1, reductions=(0.0,), windows=("diagonal",), hidden=64)
    records, _ = run_sweep("b-dis", ov, data=mnist_like)
    row = [r for r in summarize(records) if r["window"] == "diagonal"]
    assert len(row) == 1
    net = build("B", hidden=64)
    fit(net, train, val, TrainConfig(epochs=1, seed=session_seed(0, 0), regime="disorganized"))
    loss, err = evaluate(net, val)
    assert row[0]["mean_error_pct"] == err and row[0]["mean_loss"] == loss


def test_developmental_sweep_record_counts(mnist_like):
    ov = Overrides(epochs=2, sessions=3, reductions=(0.0, 0.5), windows=("diagonal",))
    records, manifest = run_sweep("a-dev", ov, data=mnist_like)
    for split in ("train", "val"):
        assert len([r for r in records if r.split == split]) == 12
    runs = {(r.window, r.reduction_target, r.session) for r in records}
    assert len(runs) == 6
    assert manifest.seeds == [session_seed(0, s) for s in range(3)]
    assert {a["window"] for a in manifest.achieved} == {"full", "diagonal"}


def test_l1_baseline_records(mnist_like):
    ov = Overrides(epochs=1, sessions=1, reductions=(0.5,), l1=1e-3)
    train = synthetic_blobs(64, 10, 3072, seed=2, shape=(32, 32, 3))
    records, _ = run_sweep("c-dev", ov, data=(train, train))
    l1 = [r for r in records if r.window == "l1"]
    assert len(l1) == 2 and 0.0 <= l1[0].reduction_achieved <= 1.0


def test_emit_csv_round_trip(tmp_path):
    assert (emit_csv([], tmp_path / "e.csv")).read_text() == ",".join(CSV_FIELDS) + "\n"
    recs = [MetricsRecord(1, 3, "val", 0.1 + 0.2, 12.345678901234567, 0.6, 0.5997161865234375, "diagonal", 42),
            MetricsRecord(0, 1, "train", 1e-17, 0.0, 0.0, 0.0, "full", 7)]
    back = read_csv(emit_csv(recs, tmp_path / "r.csv"))
    assert back == recs
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == \
        "session,epoch,split,loss,error_pct,reduction_target,reduction_achieved,window,seed"


def test_summary_means():
    rng = np.random.default_rng(0)
    recs = [MetricsRecord(s, 5, "val", float(rng.random()), float(rng.random() * 100), 0.5, 0.5, "diagonal", s)
            for s in range(17)]
    row = summarize(recs)[0]
    assert row["n"] == 17
    assert abs(row["mean_error_pct"] - sum(r.error_pct for r in recs) / 17) <= 1e-9
    assert row["sd_error_pct"] == pytest.approx(np.std([r.error_pct for r in recs], ddof=1))


def test_sweep_outputs_and_manifest_rerun(tmp_path, mnist_like):
    ov = Overrides(epochs=1, sessions=2, reductions=(0.0, 0.6), windows=("diagonal", "random"), hidden=32,
                   seed=3)
    _, manifest = run_sweep("b-dis", ov, tmp_path / "a", data=mnist_like)
    saved = json.loads((tmp_path / "a" / "manifest.json").read_text())
    ov2 = Overrides(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in saved["overrides"].items()})
    run_sweep(saved["preset"], ov2, tmp_path / "b", data=mnist_like)
    for name in ("records.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert saved["seeds"] == manifest.seeds
    assert {(a["window"], a["reduction_target"]) for a in saved["achieved"]} == {
        ("diagonal", 0.0), ("diagonal", 0.6), ("random", 0.0), ("random", 0.6)}


def test_invalid_preset_and_missing_data(monkeypatch):
    with pytest.raises(ValueError):
        get_preset("e-dev")
    monkeypatch.delenv("SZLAB_DATA_DIR", raising=False)
    with pytest.raises(FileNotFoundError):
        load_data(get_preset("a-dev"), Overrides())


# CLI -------------------------------------------------------------------------


def test_cli_window(tmp_path, capsys):
    out = tmp_path / "w.pgm"
    assert cli.main(["window", "--kind", "full", "--n-x", "512", "--n-y", "512", "--out", str(out)]) == 0
    img = read_pgm(out)
    assert img.shape == (512, 512) and np.all(img == 0)
    assert cli.main(["window", "--kind", "diagonal", "--reduction", "0.417", "--n-x", "3", "--n-y", "64"]) == 0
    assert "kept=112" in capsys.readouterr().out


def test_cli_stats(capsys):
    assert cli.main(["stats", "1,2,3", "4,5,6"]) == 0
    assert "U=0 p=0.1" in capsys.readouterr().out


def test_cli_sweep_with_config_and_env(tmp_path, monkeypatch, capsys):
    train = synthetic_blobs(200, 10, 784, seed=0, separation=12, shape=(28, 28, 1))
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    write_mnist_idx(train, data_dir / "train-images-idx3-ubyte", data_dir / "train-labels-idx1-ubyte")
    write_mnist_idx(train.head(50), data_dir / "t10k-images-idx3-ubyte", data_dir / "t10k-labels-idx1-ubyte")
    monkeypatch.setenv("SZLAB_DATA_DIR", str(data_dir))
    conf = tmp_path / "run.conf"
    conf.write_text("# desk run\npreset = b-dis\nepochs = 3\nsessions = 1\nreductions = 0, 0.5\n"
                    "window = diagonal\nhidden = 16\n")
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(conf), "--epochs", "1", "--out-dir", str(out)]) == 0
    recs = read_csv(out / "records.csv")
    assert {r.epoch for r in recs} == {1}  # flag beat the config file
    assert {r.reduction_target for r in recs if r.window == "diagonal"} == {0.0, 0.5}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["data"]["n_train"] == 200 and manifest["overrides"]["hidden"] == 16
    capsys.readouterr()
    sel = f"{out / 'records.csv'}:window=diagonal:reduction=0.5"
    assert cli.main(["stats", sel, sel]) == 0
    assert "p=1" in capsys.readouterr().out


def test_cli_errors(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("SZLAB_DATA_DIR", raising=False)
    assert cli.main(["sweep", "--preset", "a-dev", "--out-dir", str(tmp_path)]) != 0
    assert "SZLAB_DATA_DIR" in capsys.readouterr().err
    assert cli.main(["sweep", "--out-dir", str(tmp_path)]) != 0
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--preset", "nope"])
    bad = tmp_path / "bad.conf"
    bad.write_text("no equals sign\n")
    assert cli.main(["sweep", "--config", str(bad)]) != 0


def test_cli_train_and_export_filters(tmp_path):
    assert cli.main(["train", "--preset", "a-dev", "--synthetic", "--subset", "200", "--epochs", "1",
                     "--reductions", "0.6", "--out-dir", str(tmp_path / "t")]) == 0
    recs = read_csv(tmp_path / "t" / "records.csv")
    assert [r.split for r in recs] == ["train", "val"] and recs[0].reduction_target == 0.6
    assert (tmp_path / "t" / "weights.npz").exists()
    assert cli.main(["export-filters", "--synthetic", "--subset", "64", "--epochs", "1", "--filters", "8",
                     "--out-dir", str(tmp_path / "f")]) == 0
    ppm = sorted((tmp_path / "f").glob("*.ppm"))
    assert len(ppm) == 8 and ppm[0].read_bytes().startswith(b"P6\n3 3\n255\n")
