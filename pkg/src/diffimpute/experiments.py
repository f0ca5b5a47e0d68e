"""End-to-end experiment orchestration.

Builds (or loads) a trained bundle, scores it against classical baselines
under the configured missingness protocol, and drives the sweep and ablation
harnesses. Each sweep point runs on its own spawned RNG stream, so results
are reproducible regardless of execution order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import report as report_mod
from .bundle import ModelBundle, load_bundle, save_bundle
from .config import parse_float_list, parse_int_list
from .data import (
    chrono_split,
    compute_stats,
    denormalize,
    flatten_windows,
    load_csv,
    make_synthetic,
    normalize,
    save_csv,
)
from .diffusion import build_linear_schedule
from .evaluation import baseline_impute_windows, mae, per_channel_metrics, rmse
from .masking import generate_mask
from .predictor import OneShotPredictor
from .sampler import SamplerConfig, WeightSchedule, impute_batch
from .training import TrainConfig, pretrain_ar, train_denoiser
from .unet import Denoiser

VARIANTS = {
    # label: (use_condition, use_injection, use_s4_unet)
    "base": (False, False, False),
    "condition": (True, False, False),
    "weight": (False, True, False),
    "s4": (False, False, True),
    "full": (True, True, True),
}


@dataclass
class EvalReport:
    rows: list
    summary: dict
    paths: dict


def _rng_children(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def prepare_data(cfg: dict):
    """Load or synthesize, split chronologically, normalize with train stats."""
    rng_data = _rng_children(cfg["seed"], 1)[0]
    if cfg["data_csv"]:
        ds = load_csv(cfg["data_csv"], cfg["window_length"])
    else:
        ds = make_synthetic(
            cfg["n_windows"], cfg["window_length"], cfg["channels"], rng_data
        )
    train, val, test = chrono_split(ds, cfg["train_frac"], cfg["val_frac"])
    stats = compute_stats(train)
    return (
        normalize(train, stats),
        normalize(val, stats),
        normalize(test, stats),
        stats,
    )


def _denoiser_kwargs(cfg: dict, length: int, channels: int, steps: int,
                     conditional: bool, use_s4: bool) -> dict:
    return {
        "window_length": length,
        "channels": channels,
        "num_steps": steps,
        "conditional": conditional,
        "widths": parse_int_list(cfg["unet_channels"], "unet_channels"),
        "pool": cfg["pool"],
        "emb_dim": cfg["step_embed_dim"],
        "block_kind": "ssm" if use_s4 else "conv",
        "state_dim": cfg["state_dim"],
        "mlp_ratio": cfg["mlp_ratio"],
        "bidirectional": cfg["bidirectional"],
        "ssm_init": cfg["ssm_init"],
    }


def _predictor_kwargs(cfg: dict, length: int, channels: int) -> dict:
    return {
        "window_length": length,
        "channels": channels,
        "latent_dim": cfg["ar_dim"],
        "heads": cfg["ar_heads"],
        "blocks": cfg["ar_blocks"],
        "ffn_hidden": cfg["ar_ffn"],
    }


def _train_config(cfg: dict, lr: float, seed: int,
                  batch_size: int | None = None) -> TrainConfig:
    return TrainConfig(
        lr=lr,
        batch_size=batch_size or cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        patience=cfg["patience"],
        seed=seed,
        mask_protocol=cfg["train_mask_protocol"] or cfg["protocol"],
        mask_rate=cfg["train_mask_rate"],
        block_point_rate=cfg["block_point_rate"],
        failure_prob=cfg["failure_prob"],
        failure_min=cfg["failure_min"],
        failure_max=cfg["failure_max"],
        hide_frac=cfg["hide_frac"],
        recon_weight=cfg["recon_weight"],
    )


def bundle_config(cfg: dict, channel_names, steps: int,
                  conditional: bool, use_s4: bool) -> dict:
    return {
        "window_length": cfg["window_length"],
        "channels": list(channel_names),
        "steps": steps,
        "beta_start": cfg["beta_start"],
        "beta_end": cfg["beta_end"],
        "denoiser": _denoiser_kwargs(
            cfg, cfg["window_length"], len(channel_names), steps, conditional, use_s4
        ),
        "predictor": _predictor_kwargs(cfg, cfg["window_length"], len(channel_names)),
        "weights": {"n0": cfg["n0"], "lam": cfg["lam"]},
        "flags": {
            "use_condition": conditional,
            "use_injection": cfg["use_injection"],
            "use_s4_unet": use_s4,
            "prior_from_known": cfg["prior_from_known"],
            "noise_injected_prediction": cfg["noise_injected_prediction"],
        },
    }


def train_bundle(
    cfg: dict,
    train,
    val,
    stats,
    conditional: bool | None = None,
    use_s4: bool | None = None,
    steps: int | None = None,
    predictor: OneShotPredictor | None = None,
    ar_only: bool = False,
    denoiser_only: bool = False,
):
    """Train (predictor, denoiser) and assemble a bundle.

    Returns (bundle, histories) where histories maps "ar"/"denoiser" to the
    per-epoch loss records actually produced.
    """
    conditional = cfg["use_condition"] if conditional is None else conditional
    use_s4 = cfg["use_s4_unet"] if use_s4 is None else use_s4
    steps = cfg["steps"] if steps is None else steps
    bcfg = bundle_config(cfg, train.channel_names, steps, conditional, use_s4)
    sched = build_linear_schedule(steps, cfg["beta_start"], cfg["beta_end"])
    torch.manual_seed(cfg["seed"])  # weight initialization

    histories = {}
    if predictor is None:
        predictor = OneShotPredictor(**bcfg["predictor"])
        if not denoiser_only:
            predictor, histories["ar"] = pretrain_ar(
                train, val, predictor,
                _train_config(cfg, cfg["ar_lr"], cfg["seed"],
                              batch_size=cfg["ar_batch_size"] or None),
            )
    denoiser = Denoiser(**bcfg["denoiser"])
    if not ar_only:
        denoiser, histories["denoiser"] = train_denoiser(
            train, val, denoiser, sched, _train_config(cfg, cfg["lr"], cfg["seed"] + 1)
        )
    bundle = ModelBundle(
        denoiser=denoiser,
        predictor=predictor,
        schedule=sched,
        stats=stats,
        config=bcfg,
    )
    return bundle, histories


def _protocol_kwargs(cfg: dict, missing_rate: float | None = None) -> dict:
    return {
        "rate": cfg["missing_rate"] if missing_rate is None else missing_rate,
        "point_rate": cfg["block_point_rate"],
        "failure_prob": cfg["failure_prob"],
        "run_min": cfg["failure_min"],
        "run_max": cfg["failure_max"],
    }


def make_eval_masks(cfg: dict, test, rng, protocol=None, missing_rate=None):
    """One evaluation mask per test window, intersected with native presence."""
    protocol = protocol or cfg["protocol"]
    kwargs = _protocol_kwargs(cfg, missing_rate)
    masks = np.stack(
        [
            generate_mask(protocol, test.window_length, test.n_channels, rng, **kwargs)
            for _ in range(test.n_windows)
        ]
    )
    return masks * test.native_mask


def sampler_config(bundle: ModelBundle, cfg: dict, lam=None,
                   use_condition=None, use_injection=None, use_s4=None):
    flags = bundle.config["flags"]
    return SamplerConfig(
        schedule=bundle.schedule,
        weights=WeightSchedule(
            n0=cfg["n0"], lam=cfg["lam"] if lam is None else lam
        ),
        use_condition=flags["use_condition"] if use_condition is None else use_condition,
        use_injection=cfg["use_injection"] if use_injection is None else use_injection,
        use_s4_unet=flags["use_s4_unet"] if use_s4 is None else use_s4,
        prior_from_known=cfg["prior_from_known"],
        noise_injected_prediction=cfg["noise_injected_prediction"],
    )


def score_model(bundle, test, masks, scfg, rng, samples=1):
    """Impute the masked test windows and score against the held-out truth.

    Returns (metrics dict, denormalized imputation of the averaged draw).
    Evaluation cells are those hidden by the mask yet natively present.
    """
    x_known = test.windows * masks
    eval_mask = test.native_mask * (1.0 - masks)
    start = time.perf_counter()
    draws = [
        impute_batch(x_known, masks, bundle, scfg, rng) for _ in range(samples)
    ]
    elapsed = time.perf_counter() - start
    avg = sum(draws) / samples
    avg = masks * x_known + (1.0 - masks) * avg

    truth_dn = denormalize(test.windows, bundle.stats)
    avg_dn = denormalize(avg, bundle.stats)
    draw_maes = [
        mae(denormalize(d, bundle.stats), truth_dn, eval_mask) for d in draws
    ]

    window_maes = [
        mae(avg_dn[i], truth_dn[i], eval_mask[i])
        for i in range(test.n_windows)
        if eval_mask[i].any()
    ]
    ch_mae, ch_rmse = per_channel_metrics(avg_dn, truth_dn, eval_mask)
    metrics = {
        "mae": mae(avg_dn, truth_dn, eval_mask),
        "rmse": rmse(avg_dn, truth_dn, eval_mask),
        "mae_std_windows": float(np.std(window_maes)),
        "mae_std_samples": float(np.std(draw_maes)) if samples > 1 else 0.0,
        "n_eval_cells": int(eval_mask.sum()),
        "seconds": round(elapsed, 3),
        "per_channel_mae": ch_mae,
        "per_channel_rmse": ch_rmse,
    }
    return metrics, avg_dn


def score_baselines(bundle, test, masks):
    """Rows for the classical fills on the same masks."""
    x_known = test.windows * masks
    eval_mask = test.native_mask * (1.0 - masks)
    truth_dn = denormalize(test.windows, bundle.stats)
    rows = []
    for method in ("mean", "locf", "linear"):
        start = time.perf_counter()
        filled = baseline_impute_windows(x_known, masks, method)
        filled_dn = denormalize(filled, bundle.stats)
        rows.append(
            {
                "method": method,
                "mae": mae(filled_dn, truth_dn, eval_mask),
                "rmse": rmse(filled_dn, truth_dn, eval_mask),
                "seconds": round(time.perf_counter() - start, 3),
            }
        )
    return rows


def _acquire_bundle(cfg, train, val, stats):
    if cfg["bundle"]:
        return load_bundle(cfg["bundle"]), {}
    bundle, histories = train_bundle(cfg, train, val, stats)
    if cfg["bundle_out"]:
        save_bundle(bundle, cfg["bundle_out"])
    return bundle, histories


def run_experiment(cfg: dict) -> EvalReport:
    """Dispatch on sweep/ablation and emit the report artifacts."""
    started = time.time()
    train, val, test, stats = prepare_data(cfg)
    mask_rng, sample_rng = _rng_children(cfg["seed"] + 1, 2)

    if cfg["ablation"]:
        rows, extras = _run_ablation(cfg, train, val, test, stats, mask_rng)
        figure = {
            "kind": "bars",
            "filename": "ablation.png",
            "label_key": "variant",
            "title": "Ablation (MAE/RMSE on evaluation cells)",
        }
    else:
        bundle, histories = _acquire_bundle(cfg, train, val, stats)
        if cfg["sweep"] == "missing-rate":
            rows, extras = _run_rate_sweep(cfg, bundle, test, mask_rng, sample_rng)
            figure = {
                "kind": "sweep",
                "filename": "sweep_missing_rate.png",
                "x_key": "missing_rate",
                "x_label": "missing rate",
            }
        elif cfg["sweep"] == "lambda":
            rows, extras = _run_lambda_sweep(cfg, bundle, test, mask_rng, sample_rng)
            figure = {
                "kind": "sweep",
                "filename": "sweep_lambda.png",
                "x_key": "lam",
                "x_label": "decay constant",
                "log_x": True,
            }
        elif cfg["sweep"] == "steps":
            rows, extras = _run_steps_sweep(cfg, train, val, test, stats, mask_rng)
            figure = {
                "kind": "sweep",
                "filename": "sweep_steps.png",
                "x_key": "steps",
                "x_label": "diffusion steps",
            }
        else:
            rows, extras = _run_single(cfg, bundle, test, mask_rng, sample_rng)
            figure = {
                "kind": "bars",
                "filename": "metrics.png",
                "label_key": "method",
                "title": f"{cfg['protocol']} missing, rate {cfg['missing_rate']}",
            }
        if histories:
            extras["epochs_trained"] = {k: len(v) for k, v in histories.items()}

    for row in rows:
        row.setdefault("seed", cfg["seed"])
    summary = {
        "config": dict(cfg),
        "seed": cfg["seed"],
        "rows": rows,
        "wall_clock_s": round(time.time() - started, 3),
        **extras,
    }
    paths = report_mod.emit(
        cfg["out"], rows, summary, figure if cfg["figures"] else None
    )
    return EvalReport(rows=rows, summary=summary, paths=paths)


def _run_single(cfg, bundle, test, mask_rng, sample_rng):
    masks = make_eval_masks(cfg, test, mask_rng)
    scfg = sampler_config(bundle, cfg)
    metrics, imputed_dn = score_model(
        bundle, test, masks, scfg, sample_rng, samples=cfg["samples"]
    )
    per_channel = {
        "mae": metrics.pop("per_channel_mae"),
        "rmse": metrics.pop("per_channel_rmse"),
    }
    rows = [
        {
            "method": "model",
            "protocol": cfg["protocol"],
            "missing_rate": cfg["missing_rate"],
            "samples": cfg["samples"],
            **metrics,
        }
    ]
    for row in score_baselines(bundle, test, masks):
        rows.append(
            {
                **row,
                "protocol": cfg["protocol"],
                "missing_rate": cfg["missing_rate"],
            }
        )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    imputed_path = out / "imputed.csv"
    save_csv(imputed_path, flatten_windows(imputed_dn), test.channel_names)
    extras = {"per_channel": per_channel, "imputed_csv": str(imputed_path)}
    return rows, extras


def _run_rate_sweep(cfg, bundle, test, mask_rng, sample_rng):
    rows = []
    rates = parse_float_list(cfg["sweep_rates"], "sweep_rates")
    streams = np.random.SeedSequence(cfg["seed"] + 2).spawn(len(rates))
    for rate, stream in zip(rates, streams):
        point_rng, draw_rng = (np.random.default_rng(s) for s in stream.spawn(2))
        masks = make_eval_masks(cfg, test, point_rng, protocol="point",
                                missing_rate=rate)
        scfg = sampler_config(bundle, cfg)
        metrics, _ = score_model(
            bundle, test, masks, scfg, draw_rng, samples=cfg["samples"]
        )
        metrics.pop("per_channel_mae")
        metrics.pop("per_channel_rmse")
        rows.append({"method": "model", "missing_rate": rate, **metrics})
        for row in score_baselines(bundle, test, masks):
            rows.append({**row, "missing_rate": rate})
    return rows, {}


def _run_lambda_sweep(cfg, bundle, test, mask_rng, sample_rng):
    masks = make_eval_masks(cfg, test, mask_rng)
    rows = []
    lams = parse_float_list(cfg["sweep_lambdas"], "sweep_lambdas")
    streams = np.random.SeedSequence(cfg["seed"] + 3).spawn(len(lams))
    for lam, stream in zip(lams, streams):
        draw_rng = np.random.default_rng(stream)
        scfg = sampler_config(bundle, cfg, lam=lam)
        metrics, _ = score_model(
            bundle, test, masks, scfg, draw_rng, samples=cfg["samples"]
        )
        metrics.pop("per_channel_mae")
        metrics.pop("per_channel_rmse")
        rows.append({"method": "model", "lam": lam, **metrics})
    return rows, {}


def _run_steps_sweep(cfg, train, val, test, stats, mask_rng):
    masks = make_eval_masks(cfg, test, mask_rng)
    rows = []
    steps_list = parse_int_list(cfg["sweep_steps"], "sweep_steps")
    predictor = None
    streams = np.random.SeedSequence(cfg["seed"] + 4).spawn(len(steps_list))
    for steps, stream in zip(steps_list, streams):
        draw_rng = np.random.default_rng(stream)
        bundle, hist = train_bundle(
            cfg, train, val, stats, steps=steps, predictor=predictor
        )
        predictor = bundle.predictor  # shared across step counts
        scfg = sampler_config(bundle, cfg)
        metrics, _ = score_model(
            bundle, test, masks, scfg, draw_rng, samples=cfg["samples"]
        )
        metrics.pop("per_channel_mae")
        metrics.pop("per_channel_rmse")
        rows.append({"method": "model", "steps": steps, **metrics})
    return rows, {}


def _run_ablation(cfg, train, val, test, stats, mask_rng):
    """Five sampler/backbone variants scored on identical masks."""
    masks = make_eval_masks(cfg, test, mask_rng)

    # One predictor serves every injecting variant.
    torch.manual_seed(cfg["seed"])
    predictor = OneShotPredictor(**_predictor_kwargs(cfg, cfg["window_length"],
                                                     test.n_channels))
    predictor, _ = pretrain_ar(
        train, val, predictor,
        _train_config(cfg, cfg["ar_lr"], cfg["seed"],
                      batch_size=cfg["ar_batch_size"] or None),
    )

    denoisers = {}
    backbones = dict.fromkeys((c, s) for c, _, s in VARIANTS.values())
    for conditional, use_s4 in backbones:
        bundle, _ = train_bundle(
            cfg,
            train,
            val,
            stats,
            conditional=conditional,
            use_s4=use_s4,
            predictor=predictor,
            denoiser_only=True,
        )
        denoisers[(conditional, use_s4)] = bundle

    rows = []
    streams = np.random.SeedSequence(cfg["seed"] + 5).spawn(len(VARIANTS))
    for (label, (use_cond, use_inj, use_s4)), stream in zip(
        VARIANTS.items(), streams
    ):
        draw_rng = np.random.default_rng(stream)
        bundle = denoisers[(use_cond, use_s4)]
        scfg = sampler_config(
            bundle,
            cfg,
            use_condition=use_cond,
            use_injection=use_inj,
            use_s4=use_s4,
        )
        metrics, _ = score_model(
            bundle, test, masks, scfg, draw_rng, samples=cfg["samples"]
        )
        metrics.pop("per_channel_mae")
        metrics.pop("per_channel_rmse")
        rows.append(
            {
                "method": "model",
                "variant": label,
                "use_condition": use_cond,
                "use_injection": use_inj,
                "use_s4_unet": use_s4,
                **metrics,
            }
        )
    return rows, {}
