"""Single-image super-resolution engine: tensors, autodiff, model, loss, training."""

import os

# UNETSR_THREADS caps intra-op parallelism (BLAS matmul threads). The BLAS
# libraries read their env vars at import time, so this must run before numpy
# is imported anywhere in the package.
_threads = os.environ.get("UNETSR_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)
del _threads

from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    TrainingError,
    UnetSRError,
)
from .tensor import Tensor, Tape, backward
from .gradcheck import FiniteDiffReport, finite_diff_check
from .losses import GradientMap, LossConfig, mge, mixge, mse, sobel_maps
from .metrics import MetricReport, SSIMWindow, psnr, ssim
from .model import Model, NetConfig, ParamSet, build, init_params, param_count
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .images import ImageBuf, PairManifest, bicubic_resize, from_tensor, make_pairs, to_tensor
from .training import AdamState, TrainConfig, TrainReport, adam_step, learning_rate, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FiniteDiffReport",
    "GradientMap",
    "ImageBuf",
    "LossConfig",
    "MetricReport",
    "Model",
    "NetConfig",
    "PairManifest",
    "ParamSet",
    "SSIMWindow",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "UnetSRError",
    "adam_step",
    "backward",
    "bicubic_resize",
    "build",
    "finite_diff_check",
    "from_tensor",
    "init_params",
    "learning_rate",
    "load_checkpoint",
    "make_pairs",
    "mge",
    "mixge",
    "mse",
    "param_count",
    "psnr",
    "save_checkpoint",
    "sobel_maps",
    "ssim",
    "to_tensor",
    "train",
]
