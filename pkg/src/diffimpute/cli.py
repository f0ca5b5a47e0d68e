"""Command-line interface.

Subcommands:
  synth     emit a synthetic benchmark dataset as CSV
  mask-gen  emit a missingness mask as 0/1 CSV
  train     pretrain the predictor and train the denoiser, save a bundle
  impute    fill a CSV series using a trained bundle
  evaluate  run the scoring harness (single run, sweeps, or the ablation)

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. The DIFFIMPUTE_SEED environment variable overrides the seed from
any other source.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bundle import load_bundle, save_bundle
from .config import resolve_config
from .data import flatten_windows, load_csv, make_synthetic, save_csv
from .errors import ConfigError, DataError, NumericError
from .experiments import prepare_data, run_experiment, sampler_config, train_bundle
from .masking import generate_mask, load_mask_csv, save_mask_csv
from .report import render_history_figure
from .sampler import impute_average
from .training import write_history_csv


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--out", help="output directory or file")


def _add_data_options(parser):
    parser.add_argument("--data", dest="data_csv", help="input CSV (default: synthetic)")
    parser.add_argument("--window-length", type=int, dest="window_length")
    parser.add_argument("--channels", type=int)
    parser.add_argument("--n-windows", type=int, dest="n_windows")


def _add_protocol_options(parser):
    parser.add_argument("--protocol", choices=["point", "block", "hybrid"])
    parser.add_argument("--rate", type=float, dest="missing_rate")


def _add_train_options(parser):
    parser.add_argument("--lr", type=float)
    parser.add_argument("--ar-lr", type=float, dest="ar_lr")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--epochs", type=int, dest="max_epochs")
    parser.add_argument("--patience", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diffimpute",
        description="diffusion-based multivariate time-series imputation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic dataset CSV")
    _add_common(p)
    _add_data_options(p)

    p = sub.add_parser("mask-gen", help="emit a mask CSV")
    _add_common(p)
    _add_protocol_options(p)
    p.add_argument("--rows", type=int, help="number of time steps")
    p.add_argument("--cols", type=int, help="number of channels")
    p.add_argument("--like", help="CSV whose shape and header to reuse")

    p = sub.add_parser("train", help="train models and save a bundle")
    _add_common(p)
    _add_data_options(p)
    _add_protocol_options(p)
    _add_train_options(p)
    p.add_argument("--ar-only", action="store_true")
    p.add_argument("--denoiser-only", action="store_true")
    p.add_argument("--bundle-out", dest="bundle_out", help="bundle file path")

    p = sub.add_parser("impute", help="fill a series with a trained bundle")
    _add_common(p)
    p.add_argument("--input", required=True, help="CSV series to fill")
    p.add_argument("--mask", help="0/1 CSV marking cells to treat as missing")
    p.add_argument("--bundle", required=True, help="trained bundle file")
    p.add_argument("--samples", type=int, help="average this many draws")

    p = sub.add_parser("evaluate", help="score the model against baselines")
    _add_common(p)
    _add_data_options(p)
    _add_protocol_options(p)
    _add_train_options(p)
    p.add_argument("--bundle", help="reuse a trained bundle")
    p.add_argument("--samples", type=int)
    p.add_argument("--sweep", choices=["missing-rate", "lambda", "steps"])
    p.add_argument("--ablation", action="store_true", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--lam", type=float)
    p.add_argument("--n0", type=float)
    return parser


_CONFIG_KEYS = (
    "seed out data_csv window_length channels n_windows protocol missing_rate "
    "lr ar_lr batch_size max_epochs patience bundle bundle_out samples sweep "
    "lam n0"
).split()


def _config_from_args(args) -> dict:
    overrides = {}
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "ablation", None):
        overrides["ablation"] = True
    if getattr(args, "no_figures", False):
        overrides["figures"] = False
    return resolve_config(getattr(args, "config", None), overrides)


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    rng = np.random.default_rng(cfg["seed"])
    ds = make_synthetic(cfg["n_windows"], cfg["window_length"], cfg["channels"], rng)
    out = Path(cfg["out"]) if args.out else Path("synthetic.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "synthetic.csv"
    save_csv(out, flatten_windows(ds.windows), ds.channel_names)
    print(f"wrote {ds.n_windows * ds.window_length} rows x "
          f"{ds.n_channels} channels to {out}")
    return 0


def cmd_mask_gen(args) -> int:
    cfg = _config_from_args(args)
    if args.like:
        ds = load_csv(args.like, 1)
        rows, cols = ds.n_windows, ds.n_channels
        names = ds.channel_names
    else:
        if not args.rows or not args.cols:
            raise ConfigError("mask-gen needs --rows and --cols (or --like)")
        rows, cols = args.rows, args.cols
        names = [f"c{i}" for i in range(cols)]
    rng = np.random.default_rng(cfg["seed"])
    mask = generate_mask(
        cfg["protocol"], rows, cols, rng,
        rate=cfg["missing_rate"],
        point_rate=cfg["block_point_rate"],
        failure_prob=cfg["failure_prob"],
        run_min=cfg["failure_min"],
        run_max=cfg["failure_max"],
    )
    out = Path(cfg["out"]) if args.out else Path("mask.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "mask.csv"
    save_mask_csv(out, mask, names)
    print(f"wrote {rows}x{cols} {cfg['protocol']} mask to {out} "
          f"(missing fraction {1 - mask.mean():.4f})")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    train, val, _test, stats = prepare_data(cfg)
    bundle, histories = train_bundle(
        cfg, train, val, stats,
        ar_only=args.ar_only, denoiser_only=args.denoiser_only,
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    bundle_path = Path(cfg["bundle_out"]) if cfg["bundle_out"] else out / "bundle.dib"
    save_bundle(bundle, bundle_path)
    for name, history in histories.items():
        write_history_csv(out / f"history_{name}.csv", history)
        if cfg["figures"]:
            render_history_figure(
                out / f"history_{name}.png", history, f"{name} training loss"
            )
        print(f"{name}: {len(history)} epochs, "
              f"best val loss {min(h['val_loss'] for h in history):.6f}")
    print(f"wrote bundle to {bundle_path}")
    return 0


def cmd_impute(args) -> int:
    cfg = _config_from_args(args)
    bundle = load_bundle(args.bundle)
    length = bundle.config["window_length"]
    ds = load_csv(args.input, length)
    if list(ds.channel_names) != list(bundle.config["channels"]):
        raise DataError(
            f"channel mismatch: input has {list(ds.channel_names)}, bundle "
            f"was trained on {bundle.config['channels']}"
        )
    mask = ds.native_mask.copy()
    if args.mask:
        provided = load_mask_csv(args.mask)
        rows = ds.n_windows * length
        if provided.shape != (rows, ds.n_channels):
            raise DataError(
                f"mask shape {provided.shape} does not match the "
                f"{rows}x{ds.n_channels} windowed input"
            )
        mask = mask * provided.reshape(ds.n_windows, length, ds.n_channels)

    normalized = (ds.windows - bundle.stats.mean) / bundle.stats.std
    normalized = normalized * ds.native_mask
    x_known = normalized * mask
    rng = np.random.default_rng(cfg["seed"])
    scfg = sampler_config(bundle, cfg)
    filled = impute_average(
        x_known, mask, bundle, scfg, rng, samples=cfg["samples"]
    )
    filled_dn = filled * bundle.stats.std + bundle.stats.mean
    out = Path(cfg["out"]) if args.out else Path("imputed.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "imputed.csv"
    save_csv(out, flatten_windows(filled_dn), ds.channel_names)
    dropped = ds.n_windows * length
    print(f"imputed {int((1 - mask).sum())} cells over {dropped} rows -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg)
    for row in result.rows:
        label = row.get("variant") or row.get("method")
        extras = [
            f"{k}={row[k]}" for k in ("missing_rate", "lam", "steps") if k in row
        ]
        print(
            f"{label:10s} {' '.join(extras):18s} "
            f"mae={row['mae']:.4f} rmse={row['rmse']:.4f}"
        )
    print(f"report: {result.paths['report_csv']}")
    if "figure" in result.paths:
        print(f"figure: {result.paths['figure']}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "mask-gen": cmd_mask_gen,
    "train": cmd_train,
    "impute": cmd_impute,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
