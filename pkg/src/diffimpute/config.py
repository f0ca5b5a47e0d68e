"""Flat key-value configuration with typed defaults.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Every key has a default; the resolved configuration (defaults, then file,
then explicit overrides, then the seed environment variable) is echoed into
every report. The environment variable DIFFIMPUTE_SEED, when set, overrides
the seed from all other sources.
"""

from __future__ import annotations

import os

from .errors import ConfigError

SEED_ENV_VAR = "DIFFIMPUTE_SEED"

DEFAULTS: dict = {
    # run
    "seed": 0,
    "out": "reports/run",
    "figures": True,
    # data
    "data_csv": "",
    "window_length": 48,
    "channels": 4,
    "n_windows": 2000,
    "train_frac": 0.7,
    "val_frac": 0.1,
    # evaluation masking protocol
    "protocol": "point",
    "missing_rate": 0.1,
    "block_point_rate": 0.05,
    "failure_prob": 0.0015,
    "failure_min": 12,
    "failure_max": 48,
    "mask_csv": "",
    # diffusion schedule
    "steps": 100,
    "beta_start": 1e-4,
    "beta_end": 0.2,
    # injection weights
    "n0": 1.0,
    "lam": 0.5,
    # variant toggles
    "use_condition": True,
    "use_injection": True,
    "use_s4_unet": True,
    "prior_from_known": True,
    "noise_injected_prediction": False,
    # denoiser architecture
    "unet_channels": "32,64,128",
    "pool": 2,
    "step_embed_dim": 64,
    "state_dim": 16,
    "mlp_ratio": 2.0,
    "bidirectional": True,
    "ssm_init": "lin",
    # predictor architecture
    "ar_dim": 160,
    "ar_heads": 4,
    "ar_blocks": 3,
    "ar_ffn": 320,
    # training
    "lr": 3e-6,
    "ar_lr": 3e-6,
    "batch_size": 32,
    "ar_batch_size": 0,  # 0: same as batch_size
    "max_epochs": 120,
    "patience": 10,
    "train_mask_protocol": "",  # empty: reuse the evaluation protocol
    "train_mask_rate": 0.1,
    "hide_frac": 0.15,
    "recon_weight": 0.1,
    # evaluation run
    "samples": 1,
    "bundle": "",
    "bundle_out": "",
    "sweep": "",
    "ablation": False,
    "sweep_rates": "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
    "sweep_lambdas": "0.01,0.05,0.1,0.5",
    "sweep_steps": "10,50,100",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def parse_config_file(path) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _coerce(key, raw)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return values


def resolve_config(config_path=None, overrides=None) -> dict:
    """Defaults <- file <- overrides <- seed env var."""
    cfg = dict(DEFAULTS)
    if config_path:
        cfg.update(parse_config_file(config_path))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            cfg[key] = value
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}"
            ) from None
    _validate(cfg)
    return cfg


def parse_int_list(text: str, key: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected comma-separated ints") from None


def parse_float_list(text: str, key: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(
            f"config key {key!r}: expected comma-separated floats"
        ) from None


def _validate(cfg: dict) -> None:
    if cfg["sweep"] not in ("", "missing-rate", "lambda", "steps"):
        raise ConfigError(f"unknown sweep {cfg['sweep']!r}")
    if cfg["protocol"] not in ("point", "block", "hybrid"):
        raise ConfigError(f"unknown protocol {cfg['protocol']!r}")
    if cfg["train_mask_protocol"] not in ("", "point", "block", "hybrid"):
        raise ConfigError(
            f"unknown train_mask_protocol {cfg['train_mask_protocol']!r}"
        )
    if cfg["ssm_init"] not in ("lin", "real"):
        raise ConfigError(f"unknown ssm_init {cfg['ssm_init']!r}")
    if not 0.0 < cfg["missing_rate"] < 1.0:
        raise ConfigError("missing_rate must lie in (0, 1)")
    if cfg["steps"] < 1:
        raise ConfigError("steps must be >= 1")
    if cfg["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    parse_int_list(cfg["unet_channels"], "unet_channels")
    parse_float_list(cfg["sweep_rates"], "sweep_rates")
    parse_float_list(cfg["sweep_lambdas"], "sweep_lambdas")
    parse_int_list(cfg["sweep_steps"], "sweep_steps")
