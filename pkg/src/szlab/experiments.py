"""Experiment presets, sweep runner and CSV/manifest emitters."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, load_cifar10, load_mnist, synthetic_blobs
from .networks import CIFAR_SHAPE, MNIST_SHAPE, build
from .optim import AdamConfig, RMSpropConfig
from .train import MetricsRecord, TrainConfig, evaluate, fit
from .window import KINDS, WindowSpec, build_window

log = logging.getLogger(__name__)

CSV_FIELDS = [f.name for f in fields(MetricsRecord)]
SUMMARY_FIELDS = ["window", "reduction_target", "epoch", "split", "n", "mean_error_pct",
                  "sd_error_pct", "mean_loss", "mean_reduction_achieved"]
DEFAULT_REDUCTIONS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
DATA_ENV = "SZLAB_DATA_DIR"


@dataclass(frozen=True)
class ExperimentPreset:
    id: str
    network: str
    regime: str
    dataset: str
    optimizer: AdamConfig | RMSpropConfig
    epochs: int
    sessions: int
    windows: tuple = ("diagonal",)
    reductions: tuple = DEFAULT_REDUCTIONS
    hidden: int | None = None
    batch_size: int = 32


PRESETS = {
    "a-dev": ExperimentPreset("a-dev", "A", "developmental", "mnist", AdamConfig(lr=1e-3), 50, 100,
                              windows=("diagonal", "gaussian", "random")),
    "b-dis": ExperimentPreset("b-dis", "B", "disorganized", "mnist", AdamConfig(lr=1e-3), 20, 100,
                              windows=("diagonal", "gaussian", "stripe", "centered", "random"), hidden=512),
    "c-dev": ExperimentPreset("c-dev", "C", "developmental", "cifar10", RMSpropConfig(lr=1e-4, decay=1e-6),
                              75, 10, reductions=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)),
    "d-dis": ExperimentPreset("d-dis", "D", "disorganized", "cifar10", RMSpropConfig(lr=1e-4, decay=1e-6),
                              100, 30),
}


@dataclass
class Overrides:
    epochs: int | None = None
    sessions: int | None = None
    reductions: tuple | None = None
    windows: tuple | None = None
    hidden: int | None = None
    seed: int = 0
    subset: int | None = None
    val_subset: int | None = None
    l1: float = 0.0
    batch_size: int | None = None
    data_dir: str | None = None
    synthetic: bool = False


@dataclass
class RunManifest:
    preset: str
    overrides: dict
    seeds: list
    artifacts: dict
    version: str = __version__
    numpy_version: str = np.__version__
    achieved: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


def resolve_data_dir(data_dir: str | None) -> Path:
    d = data_dir or os.environ.get(DATA_ENV)
    if not d:
        raise FileNotFoundError(f"no data directory: pass --data-dir or set {DATA_ENV}")
    return Path(d)


def load_data(preset: ExperimentPreset, ov: Overrides) -> tuple[Dataset, Dataset]:
    if ov.synthetic:
        shape = MNIST_SHAPE if preset.dataset == "mnist" else CIFAR_SHAPE
        dim = int(np.prod(shape))
        n = ov.subset or 2000
        train = synthetic_blobs(n, 10, dim, seed=1000 + ov.seed, separation=6.0, shape=shape)
        # same class means, fresh noise: reuse the generator seed for means only
        val = _resample_blobs(train, ov.val_subset or max(n // 4, 10), seed=2000 + ov.seed)
        return train, val
    root = resolve_data_dir(ov.data_dir)
    loader = load_mnist if preset.dataset == "mnist" else load_cifar10
    return loader(root, "train").head(ov.subset), loader(root, "test").head(ov.val_subset)


def _resample_blobs(train: Dataset, n: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    flat = train.images.reshape(len(train), -1).astype(np.float64)
    classes = train.n_classes
    means = np.stack([flat[train.labels == c].mean(axis=0) for c in range(classes)])
    sigma = float(np.mean([flat[train.labels == c].std(axis=0).mean() for c in range(classes)]))
    labels = rng.permutation(np.arange(n) % classes)
    x = np.clip(means[labels] + sigma * rng.standard_normal((n, flat.shape[1])), 0, 1)
    return Dataset(x.astype(np.float32).reshape((n, *train.shape)), labels.astype(np.int64), "blobs", "val")


def session_seed(base: int, session: int) -> int:
    return base * 100003 + session


def _train_config(preset, ov, seed):
    return TrainConfig(optimizer=preset.optimizer, batch_size=ov.batch_size or preset.batch_size,
                       epochs=preset.epochs if ov.epochs is None else ov.epochs,
                       seed=seed, regime=preset.regime, precision="single")


def run_sweep(preset: ExperimentPreset | str, ov: Overrides | None = None, out_dir=None,
              data: tuple[Dataset, Dataset] | None = None):
    """Run every (window kind, reduction, session) cell of ``preset``.

    Returns ``(records, manifest)``; when ``out_dir`` is given, writes
    ``records.csv``, ``summary.csv`` and ``manifest.json`` there.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    ov = ov or Overrides()
    kinds = tuple(ov.windows or preset.windows)
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown window kind {k!r}")
    reductions = tuple(preset.reductions if ov.reductions is None else ov.reductions)
    sessions = preset.sessions if ov.sessions is None else ov.sessions
    hidden = ov.hidden or preset.hidden
    train, val = data if data is not None else load_data(preset, ov)
    seeds = [session_seed(ov.seed, s) for s in range(sessions)]
    records: list[MetricsRecord] = []
    achieved: dict[tuple, float] = {}

    if preset.regime == "developmental":
        cells = [("full", 0.0)] if 0.0 in reductions else []
        cells += [(k, r) for k in kinds for r in reductions if r != 0.0]
        for kind, rho in cells:
            for s, seed in enumerate(seeds):
                spec = WindowSpec(kind, rho, seed=seed)
                net = build(preset.network, window=spec, hidden=hidden)
                w = net.layers[net.target].window
                achieved[(kind, rho)] = w.achieved_reduction
                log.info("%s %s rho=%.3f session %d", preset.id, kind, rho, s)
                records += fit(net, train, val, _train_config(preset, ov, seed), session=s)
        if ov.l1 > 0:
            for s, seed in enumerate(seeds):
                net = build(preset.network, hidden=hidden, l1=ov.l1)
                records += fit(net, train, val, _train_config(preset, ov, seed), session=s,
                               tags={"window": "l1", "reduction_target": 0.0})
    else:
        for s, seed in enumerate(seeds):
            net = build(preset.network, hidden=hidden)
            cfg = _train_config(preset, ov, seed)
            log.info("%s session %d: training", preset.id, s)
            records += fit(net, train, val, cfg, session=s)
            n_x, n_y = net.layers[net.target].window_shape
            for kind in kinds:
                for rho in reductions:
                    win = build_window(WindowSpec(kind, rho, seed=seed), n_x, n_y)
                    achieved[(kind, rho)] = win.achieved_reduction
                    loss, err = evaluate(net, val, win)
                    records.append(MetricsRecord(s, cfg.epochs, "val", loss, err, rho,
                                                 win.achieved_reduction, kind, seed))

    records = sort_records(records)
    manifest = RunManifest(
        preset=preset.id,
        overrides={k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(ov).items()},
        seeds=seeds, artifacts={},
        achieved=[{"window": k, "reduction_target": r, "reduction_achieved": a}
                  for (k, r), a in sorted(achieved.items())],
        data={"train": train.name, "n_train": len(train), "val": val.name, "n_val": len(val)},
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest.artifacts = {
            "records": str(emit_csv(records, out / "records.csv")),
            "summary": str(emit_summary(summarize(records), out / "summary.csv")),
        }
        (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return records, manifest


def sort_records(records):
    return sorted(records, key=lambda r: (r.window, r.reduction_target, r.session, r.epoch, r.split))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(records, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])
    return path


def read_csv(path) -> list[MetricsRecord]:
    types = {f.name: f.type for f in fields(MetricsRecord)}
    conv = {"int": int, "float": float, "str": str}
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(MetricsRecord(**{k: conv[types[k]](v) for k, v in row.items()}))
    return out


def summarize(records) -> list[dict]:
    cells: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        cells.setdefault((r.window, r.reduction_target, r.epoch, r.split), []).append(r)
    rows = []
    for (window, rho, epoch, split), rs in sorted(cells.items()):
        errs = [r.error_pct for r in rs]
        rows.append({
            "window": window, "reduction_target": rho, "epoch": epoch, "split": split, "n": len(rs),
            "mean_error_pct": math.fsum(errs) / len(errs),
            "sd_error_pct": float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0,
            "mean_loss": math.fsum(r.loss for r in rs) / len(rs),
            "mean_reduction_achieved": math.fsum(r.reduction_achieved for r in rs) / len(rs),
        })
    return rows


def emit_summary(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in SUMMARY_FIELDS])
    return path


def final_errors(records, window: str, rho: float, split: str = "val") -> list[float]:
    """Per-session error at the last recorded epoch of one sweep cell, ordered by session."""
    cell = [r for r in records if r.window == window and r.reduction_target == rho and r.split == split]
    if not cell:
        return []
    last = max(r.epoch for r in cell)
    return [r.error_pct for r in sorted(cell, key=lambda r: r.session) if r.epoch == last]


def cell_mean(records, window: str, rho: float, split: str = "val") -> float:
    errs = final_errors(records, window, rho, split)
    if not errs:
        raise KeyError(f"no records for window={window} reduction={rho}")
    return math.fsum(errs) / len(errs)


def with_overrides(ov: Overrides, **kw) -> Overrides:
    return replace(ov, **kw)
