"""Command-line front end: ``szlab {train,sweep,window,stats,export-filters}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .experiments import (PRESETS, Overrides, emit_csv, get_preset, load_data, read_csv, run_sweep,
                          session_seed, sort_records)
from .layers import Conv2D, Dense, Flatten, MaxPool2x2, Network, Relu, write_filters_ppm
from .networks import build
from .optim import RMSpropConfig
from .stats import mann_whitney_u
from .train import TrainConfig, fit
from .window import KINDS, WindowSpec, build_window, write_pgm

log = logging.getLogger("szlab")

# config-file keys that take a comma list
LIST_KEYS = {"reductions", "window"}


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _kinds(s: str) -> tuple:
    kinds = tuple(v.strip() for v in s.split(",") if v.strip())
    for k in kinds:
        if k not in KINDS:
            raise argparse.ArgumentTypeError(f"unknown window kind {k!r}")
    return kinds


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--data-dir", help="directory holding MNIST / CIFAR-10 files (default $SZLAB_DATA_DIR)")
    p.add_argument("--out-dir")
    p.add_argument("--reductions", type=_floats, help="comma-separated reduction targets")
    p.add_argument("--window", type=_kinds, help="comma-separated window kinds")
    p.add_argument("--sessions", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int, help="hidden layer size (network B)")
    p.add_argument("--seed", type=int)
    p.add_argument("--subset", type=int, help="cap on training samples")
    p.add_argument("--val-subset", type=int, help="cap on validation samples")
    p.add_argument("--l1", type=float, help="L1 lambda for the fully connected baseline (network C)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--synthetic", action="store_true", default=None,
                   help="use synthetic blobs shaped like the preset's dataset")


def _merge(args) -> dict:
    merged = {}
    if getattr(args, "config", None):
        raw = read_config(args.config)
        parse = {"reductions": _floats, "window": _kinds, "sessions": int, "epochs": int, "hidden": int,
                 "seed": int, "subset": int, "val_subset": int, "l1": float, "batch_size": int,
                 "synthetic": lambda v: v.lower() in ("1", "true", "yes")}
        merged = {k: parse.get(k, str)(v) for k, v in raw.items()}
    for k, v in vars(args).items():
        if v is not None and k not in ("func", "config"):
            merged[k] = v
    return merged


def _overrides(cfg: dict) -> Overrides:
    return Overrides(epochs=cfg.get("epochs"), sessions=cfg.get("sessions"), reductions=cfg.get("reductions"),
                     windows=cfg.get("window"), hidden=cfg.get("hidden"), seed=cfg.get("seed", 0),
                     subset=cfg.get("subset"), val_subset=cfg.get("val_subset"), l1=cfg.get("l1", 0.0),
                     batch_size=cfg.get("batch_size"), data_dir=cfg.get("data_dir"),
                     synthetic=bool(cfg.get("synthetic", False)))


def _require(cfg, key):
    if cfg.get(key) is None:
        raise ValueError(f"--{key.replace('_', '-')} is required")
    return cfg[key]


def cmd_sweep(args):
    cfg = _merge(args)
    preset = get_preset(_require(cfg, "preset"))
    out_dir = Path(_require(cfg, "out_dir"))
    records, manifest = run_sweep(preset, _overrides(cfg), out_dir)
    print(f"{len(records)} records -> {manifest.artifacts['records']}")
    print(f"summary -> {manifest.artifacts['summary']}")
    return 0


def cmd_train(args):
    cfg = _merge(args)
    preset = get_preset(_require(cfg, "preset"))
    ov = _overrides(cfg)
    rho = (ov.reductions or (0.0,))[0]
    kind = (ov.windows or preset.windows)[0]
    seed = session_seed(ov.seed, 0)
    train, val = load_data(preset, ov)
    spec = WindowSpec(kind, rho, seed=seed) if preset.regime == "developmental" else None
    net = build(preset.network, window=spec, hidden=ov.hidden or preset.hidden, l1=ov.l1)
    tc = TrainConfig(optimizer=preset.optimizer, batch_size=ov.batch_size or preset.batch_size,
                     epochs=preset.epochs if ov.epochs is None else ov.epochs, seed=seed, regime=preset.regime)

    def report(epoch, recs):
        r = recs[-1]
        print(f"epoch {epoch}: {r.split} loss {r.loss:.4f} error {r.error_pct:.2f}%", flush=True)

    records = fit(net, train, val, tc, on_epoch=report)
    if cfg.get("out_dir"):
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        emit_csv(sort_records(records), out / "records.csv")
        np.savez(out / "weights.npz", **{f"{i}_{k}": v for i, p in enumerate(net.state()) for k, v in p.items()})
        (out / "manifest.json").write_text(json.dumps(
            {"preset": preset.id, "overrides": {k: (list(v) if isinstance(v, tuple) else v)
                                                for k, v in asdict(ov).items()},
             "seed": seed, "window": kind, "reduction_target": rho}, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_window(args):
    spec = WindowSpec(args.kind, args.reduction, seed=args.seed)
    win = build_window(spec, args.n_x, args.n_y)
    print(f"kind={win.kind} n_x={win.n_x} n_y={win.n_y} target={spec.target_reduction} "
          f"achieved={win.achieved_reduction:.6f} kept={win.kept:g}")
    for k, v in win.params.items():
        print(f"{k}={v}")
    if args.out:
        write_pgm(win, args.out)
        print(f"wrote {args.out}")
    return 0


def _sample(text: str) -> list[float]:
    """A comma list, or ``file.csv:key=value:...`` selecting final-epoch val errors."""
    if ":" in text and text.split(":", 1)[0].endswith(".csv"):
        path, *conds = text.split(":")
        want = dict(c.split("=", 1) for c in conds)
        recs = [r for r in read_csv(path) if r.split == want.pop("split", "val")]
        for k, v in want.items():
            k = {"reduction": "reduction_target"}.get(k, k)
            recs = [r for r in recs if str(getattr(r, k)) == v or
                    (isinstance(getattr(r, k), float) and getattr(r, k) == float(v))]
        if not recs:
            raise ValueError(f"no records match {text!r}")
        last = max(r.epoch for r in recs)
        return [r.error_pct for r in sorted(recs, key=lambda r: r.session) if r.epoch == last]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_stats(args):
    a, b = _sample(args.sample_a), _sample(args.sample_b)
    u, p = mann_whitney_u(a, b)
    print(f"n1={len(a)} n2={len(b)} mean1={np.mean(a):.4f} mean2={np.mean(b):.4f} U={u:g} p={p:.6g}")
    return 0


def cmd_export_filters(args):
    cfg = _merge(args)
    ov = _overrides(cfg)
    preset = get_preset("c-dev")
    train, val = load_data(preset, ov)
    seed = session_seed(ov.seed, 0)
    spec = WindowSpec("diagonal", args.reduction, seed=seed)
    conv = Conv2D(3, 3, 3, args.filters, padding="zero", window=build_window(spec, 3, args.filters))
    net = Network((32, 32, 3), [conv, Relu(), MaxPool2x2(), Flatten(), Dense(16 * 16 * args.filters, 10)],
                  name="toy-cnn")
    tc = TrainConfig(optimizer=RMSpropConfig(lr=args.lr), epochs=1 if ov.epochs is None else ov.epochs,
                     seed=seed, batch_size=ov.batch_size or 32)
    records = fit(net, train, val, tc)
    out = Path(_require(cfg, "out_dir"))
    paths = write_filters_ppm(conv, out)
    emit_csv(sort_records(records), out / "records.csv")
    print(f"window reduction {conv.window.achieved_reduction:.4f}; "
          f"final val error {records[-1].error_pct:.2f}%; wrote {len(paths)} filters to {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="szlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run a preset's reduction sweep")
    _common(s)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("train", help="train one session (first reduction / window kind given)")
    _common(t)
    t.set_defaults(func=cmd_train)

    w = sub.add_parser("window", help="build a window matrix and optionally write it as PGM")
    w.add_argument("--kind", choices=KINDS, default="diagonal")
    w.add_argument("--reduction", type=float, default=0.5)
    w.add_argument("--n-x", type=int, default=512)
    w.add_argument("--n-y", type=int, default=512)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out")
    w.set_defaults(func=cmd_window)

    st = sub.add_parser("stats", help="two-sided rank-sum test between two samples")
    st.add_argument("sample_a", help="comma list or records.csv:window=diagonal:reduction=0.7")
    st.add_argument("sample_b")
    st.set_defaults(func=cmd_stats)

    e = sub.add_parser("export-filters", help="train a toy windowed CNN and dump first-layer filters as PPM")
    _common(e)
    e.add_argument("--reduction", type=float, default=0.417)
    e.add_argument("--filters", type=int, default=64)
    e.add_argument("--lr", type=float, default=1e-3)
    e.set_defaults(func=cmd_export_filters)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"szlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
