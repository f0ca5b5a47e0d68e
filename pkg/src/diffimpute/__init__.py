"""Diffusion-based multivariate time-series imputation.

A conditional denoising diffusion imputer whose reverse sampler blends in
one-shot transformer predictions with an exponentially shrinking weight, and
whose denoiser is a multi-scale U-Net built on temporal state-space blocks.
"""

from .bundle import ModelBundle, load_bundle, save_bundle
from .data import (
    ChannelStats,
    Dataset,
    chrono_split,
    compute_stats,
    denormalize,
    load_csv,
    make_synthetic,
    normalize,
)
from .diffusion import (
    NoiseSchedule,
    build_linear_schedule,
    forward_sample,
    forward_step,
    noise_prediction_loss,
    reverse_mean,
)
from .evaluation import baseline_impute, mae, rmse
from .experiments import EvalReport, run_experiment, train_bundle
from .masking import apply_mask, block_mask, hybrid_mask, point_mask
from .predictor import OneShotPredictor, ar_loss
from .sampler import (
    SamplerConfig,
    WeightSchedule,
    impute,
    impute_average,
    impute_batch,
    inject,
    noised_known,
    reverse_step,
    weight,
)
from .ssm import (
    S4Kernel,
    S4Parameters,
    apply_convolutional,
    apply_recurrent,
    discretize,
    materialize_kernel,
)
from .training import TrainConfig, pretrain_ar, train_denoiser
from .unet import Denoiser

__version__ = "0.1.0"

__all__ = [
    "ChannelStats",
    "Dataset",
    "Denoiser",
    "EvalReport",
    "ModelBundle",
    "NoiseSchedule",
    "OneShotPredictor",
    "S4Kernel",
    "S4Parameters",
    "SamplerConfig",
    "TrainConfig",
    "WeightSchedule",
    "apply_convolutional",
    "apply_mask",
    "apply_recurrent",
    "ar_loss",
    "baseline_impute",
    "block_mask",
    "build_linear_schedule",
    "chrono_split",
    "compute_stats",
    "denormalize",
    "discretize",
    "forward_sample",
    "forward_step",
    "hybrid_mask",
    "impute",
    "impute_average",
    "impute_batch",
    "inject",
    "load_bundle",
    "load_csv",
    "mae",
    "make_synthetic",
    "materialize_kernel",
    "noise_prediction_loss",
    "noised_known",
    "normalize",
    "point_mask",
    "pretrain_ar",
    "reverse_mean",
    "reverse_step",
    "rmse",
    "run_experiment",
    "save_bundle",
    "train_bundle",
    "train_denoiser",
    "weight",
]
