"""Pixel and gradient reconstruction losses.

The gradient loss compares per-pixel gradient magnitudes of prediction and
target, computed with the classic 3x3 Sobel masks. Both maps use replicate
padding so every loss term averages over the same n*m*C index set and flat
fields produce exactly zero response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tensor, add, conv2d, mean_all, reshape, scalar_mul, sqrt_eps, square, sub

# The classic Sobel masks, stored 180°-rotated: conv2d computes
# cross-correlation, and cross-correlating with the rotated mask equals true
# convolution with the mask itself. (Both masks are antisymmetric, so the
# rotation only flips the sign, which the squared magnitude ignores.)
_SOBEL_ROW = Tensor(np.array([[[[1, 2, 1], [0, 0, 0], [-1, -2, -1]]]], dtype=np.float64))
_SOBEL_COL = Tensor(np.array([[[[1, 0, -1], [2, 0, -2], [1, 0, -1]]]], dtype=np.float64))

LOSS_KINDS = ("mse", "mixge")


@dataclass
class LossConfig:
    """Loss selection plus the gradient-term weight and stability constant."""

    kind: str = "mixge"
    lambda_g: float = 0.1
    sqrt_epsilon: float = 1e-12
    sobel_pad: str = field(default="replicate")

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if not math.isfinite(self.lambda_g) or self.lambda_g < 0:
            raise ConfigError(f"lambda_g must be finite and >= 0, got {self.lambda_g}")
        if self.sqrt_epsilon <= 0:
            raise ConfigError(f"sqrt_epsilon must be > 0, got {self.sqrt_epsilon}")
        if self.sobel_pad != "replicate":
            raise ConfigError("sobel_pad is fixed to 'replicate'")


@dataclass
class GradientMap:
    """Directional Sobel responses and their combined magnitude, all N,C,H,W."""

    gx: Tensor
    gy: Tensor
    magnitude: Tensor


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Global mean of squared pixel differences (over batch, channels, space)."""
    return mean_all(square(sub(pred, target)))


def sobel_maps(img: Tensor, eps: float = 1e-12) -> GradientMap:
    """Per-channel Sobel responses of an N,C,H,W image, same-size via replicate
    padding, with magnitude sqrt(gx^2 + gy^2 + eps).

    The directional naming follows the classic mask labels; the magnitude is
    invariant to which axis each mask is attributed to. eps = 0 gives the
    exact magnitude for reporting paths that never differentiate.
    """
    n, c, h, w = img.shape
    planes = reshape(img, (n * c, 1, h, w))
    gx = reshape(conv2d(planes, _SOBEL_ROW, padding=1, pad_mode="replicate"), (n, c, h, w))
    gy = reshape(conv2d(planes, _SOBEL_COL, padding=1, pad_mode="replicate"), (n, c, h, w))
    magnitude = sqrt_eps(add(square(gx), square(gy)), eps)
    return GradientMap(gx=gx, gy=gy, magnitude=magnitude)


def mge(pred: Tensor, target: Tensor, eps: float = 1e-12) -> Tensor:
    """Global mean of squared differences between the Sobel gradient magnitudes
    of target and prediction; differentiable through both Sobel passes."""
    g_target = sobel_maps(target, eps).magnitude
    g_pred = sobel_maps(pred, eps).magnitude
    return mean_all(square(sub(g_target, g_pred)))


def mixge(pred: Tensor, target: Tensor, config: LossConfig) -> Tensor:
    """Pixel loss plus lambda_g times the gradient-magnitude loss.

    lambda_g = 0 returns the pixel loss itself, bit-for-bit.
    """
    pixel = mse(pred, target)
    if config.lambda_g == 0.0:
        return pixel
    return add(pixel, scalar_mul(mge(pred, target, config.sqrt_epsilon), config.lambda_g))


def loss_value(pred: Tensor, target: Tensor, config: LossConfig) -> Tensor:
    """Dispatch on config.kind."""
    if config.kind == "mse":
        return mse(pred, target)
    return mixge(pred, target, config)
