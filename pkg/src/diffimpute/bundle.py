"""Checkpoint container for the trained model pair plus its context.

A bundle holds the denoiser and predictor weights, the noise schedule, the
normalization statistics, and the configuration both networks were built
from. On disk it is a self-describing binary container:

    magic "DIMB" | version u32 LE | header length u64 LE | header JSON |
    raw array payloads, little-endian, in header order

The header records a SHA-256 fingerprint of the canonical configuration
JSON; a mismatch on load (tampering, corruption) is an error, as is a
truncated payload. Writing is fully deterministic, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import torch

from .data import ChannelStats
from .diffusion import NoiseSchedule, build_linear_schedule
from .errors import DataError
from .predictor import OneShotPredictor
from .unet import Denoiser

_MAGIC = b"DIMB"
_VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def config_fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ModelBundle:
    denoiser: Denoiser
    predictor: OneShotPredictor
    schedule: NoiseSchedule
    stats: ChannelStats
    config: dict

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.config)

    # numpy adapters used by the sampler; models run in float32 under no_grad
    def denoise(self, x_t, t, x_known, mask):
        self.denoiser.eval()
        with torch.no_grad():
            out = self.denoiser(
                torch.from_numpy(np.ascontiguousarray(x_t, dtype=np.float32)),
                int(t),
                torch.from_numpy(np.ascontiguousarray(x_known, dtype=np.float32)),
                torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32)),
            )
        return out.numpy().astype(np.float64)

    def predict(self, x_known, mask):
        self.predictor.eval()
        with torch.no_grad():
            out = self.predictor(
                torch.from_numpy(np.ascontiguousarray(x_known, dtype=np.float32)),
                torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32)),
            )
        return out.numpy().astype(np.float64)


def _state_arrays(module: torch.nn.Module, prefix: str) -> dict:
    out = {}
    for key, tensor in module.state_dict().items():
        out[f"{prefix}/{key}"] = tensor.detach().cpu().numpy()
    return out


def _dtype_tag(arr: np.ndarray) -> str:
    kind = arr.dtype.kind
    if kind == "f":
        return "<f4" if arr.dtype.itemsize == 4 else "<f8"
    if kind in "iu":
        return "<i8"
    raise DataError(f"unsupported array dtype {arr.dtype}")


def save_bundle(bundle: ModelBundle, path) -> None:
    arrays = {}
    arrays.update(_state_arrays(bundle.denoiser, "denoiser"))
    arrays.update(_state_arrays(bundle.predictor, "predictor"))
    arrays["schedule/betas"] = bundle.schedule.betas
    arrays["stats/mean"] = bundle.stats.mean
    arrays["stats/std"] = bundle.stats.std

    entries, payloads = [], []
    for name in sorted(arrays):
        tag = _dtype_tag(arrays[name])
        arr = np.ascontiguousarray(arrays[name].astype(_DTYPES[tag]))
        entries.append({"name": name, "dtype": tag, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())

    header = {
        "schema_version": _VERSION,
        "fingerprint": config_fingerprint(bundle.config),
        "config": bundle.config,
        "arrays": entries,
    }
    header_bytes = json.dumps(
        header, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_VERSION.to_bytes(4, "little"))
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for blob in payloads:
            fh.write(blob)


def _read_exact(fh, n: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise DataError(f"truncated bundle file while reading {what}")
    return blob


def load_bundle(path) -> ModelBundle:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot read bundle {path}: {exc}") from None
    with fh:
        if _read_exact(fh, 4, "magic") != _MAGIC:
            raise DataError(f"{path}: not a model bundle")
        version = int.from_bytes(_read_exact(fh, 4, "version"), "little")
        if version != _VERSION:
            raise DataError(f"{path}: unsupported bundle version {version}")
        header_len = int.from_bytes(_read_exact(fh, 8, "header length"), "little")
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: corrupt bundle header: {exc}") from None
        config = header["config"]
        if config_fingerprint(config) != header.get("fingerprint"):
            raise DataError(f"{path}: config fingerprint mismatch")
        arrays = {}
        for entry in header["arrays"]:
            dtype = _DTYPES.get(entry["dtype"])
            if dtype is None:
                raise DataError(f"{path}: unknown dtype tag {entry['dtype']}")
            shape = tuple(entry["shape"])
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            blob = _read_exact(fh, nbytes, entry["name"])
            arrays[entry["name"]] = np.frombuffer(blob, dtype=dtype).reshape(shape)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after bundle payload")

    betas = arrays["schedule/betas"].astype(np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    prev = np.concatenate(([1.0], alpha_bars[:-1]))
    schedule = NoiseSchedule(
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        tilde_betas=betas * (1.0 - prev) / (1.0 - alpha_bars),
    )
    stats = ChannelStats(
        mean=arrays["stats/mean"].astype(np.float64),
        std=arrays["stats/std"].astype(np.float64),
    )

    denoiser = Denoiser(**config["denoiser"])
    predictor = OneShotPredictor(**config["predictor"])
    for module, prefix in ((denoiser, "denoiser"), (predictor, "predictor")):
        state = {}
        for key, ref in module.state_dict().items():
            name = f"{prefix}/{key}"
            if name not in arrays:
                raise DataError(f"{path}: bundle is missing array {name}")
            state[key] = torch.from_numpy(arrays[name].copy()).to(ref.dtype)
        module.load_state_dict(state, strict=True)
        module.eval()
    return ModelBundle(
        denoiser=denoiser,
        predictor=predictor,
        schedule=schedule,
        stats=stats,
        config=config,
    )


def build_schedule_from_config(config: dict) -> NoiseSchedule:
    return build_linear_schedule(
        config["steps"], config["beta_start"], config["beta_end"]
    )
