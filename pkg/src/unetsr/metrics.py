"""Reconstruction quality metrics: PSNR and patch-based SSIM.

Both operate on float arrays in the [0, 255] value scale, without integer
quantization, averaging jointly over all channels. Nothing here touches the
gradient tape.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

PEAK = 255.0
C1 = (0.01 * PEAK) ** 2
C2 = (0.03 * PEAK) ** 2


@dataclass
class SSIMWindow:
    """Gaussian comparison window; 11x11 with sigma 1.5 is the usual convention.

    covariance=True uses the conventional structure term 2*cov(P,Q)+c2 in the
    numerator; False substitutes the product of patch standard deviations
    2*std(P)*std(Q)+c2, a variant that drops structure correlation.
    """

    size: int = 11
    sigma: float = 1.5
    covariance: bool = True

    def kernel(self) -> np.ndarray:
        half = (self.size - 1) / 2.0
        x = np.arange(self.size, dtype=np.float64) - half
        k = np.exp(-(x * x) / (2.0 * self.sigma * self.sigma))
        return k / k.sum()


def _check_pair(y: np.ndarray, yhat: np.ndarray, op: str) -> None:
    if y.shape != yhat.shape:
        for axis, (ea, eb) in enumerate(zip(y.shape, yhat.shape)):
            if ea != eb:
                raise DimensionError(f"{op}: axis {axis} differs ({ea} vs {eb})")
        raise DimensionError(f"{op}: rank differs ({y.shape} vs {yhat.shape})")


def psnr(y: np.ndarray, yhat: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 255] scale.

    10*log10(255^2 / MSE) with the mean over every pixel and channel;
    identical inputs give +inf.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    _check_pair(y, yhat, "psnr")
    err = y - yhat
    mse = float(np.mean(err * err))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def _filter_valid_1d(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    taps = k.size
    length = a.shape[axis] - taps + 1
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(0, length)
    out = k[0] * a[tuple(sl)]
    for i in range(1, taps):
        sl[axis] = slice(i, i + length)
        out = out + k[i] * a[tuple(sl)]
    return out


def _window_means(plane: np.ndarray, k: np.ndarray) -> np.ndarray:
    return _filter_valid_1d(_filter_valid_1d(plane, k, 0), k, 1)


def ssim(y: np.ndarray, yhat: np.ndarray, window: SSIMWindow | None = None) -> float:
    """Mean structural similarity over all window positions and channels.

    Inputs are (H, W) or (H, W, C) arrays on the [0, 255] scale; images
    smaller than the window are rejected.
    """
    if window is None:
        window = SSIMWindow()
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    _check_pair(y, yhat, "ssim")
    if y.ndim == 2:
        y = y[:, :, None]
        yhat = yhat[:, :, None]
    if y.ndim != 3:
        raise DimensionError(f"ssim: expected (H,W) or (H,W,C) images, got {y.ndim}-d")
    h, w = y.shape[:2]
    if h < window.size or w < window.size:
        raise ContractError(f"ssim: image {h}x{w} smaller than {window.size}x{window.size} window")

    k = window.kernel()
    total = 0.0
    count = 0
    for c in range(y.shape[2]):
        p = y[:, :, c]
        q = yhat[:, :, c]
        mu_p = _window_means(p, k)
        mu_q = _window_means(q, k)
        var_p = _window_means(p * p, k) - mu_p * mu_p
        var_q = _window_means(q * q, k) - mu_q * mu_q
        luminance = (2.0 * mu_p * mu_q + C1) / (mu_p * mu_p + mu_q * mu_q + C1)
        if window.covariance:
            cov = _window_means(p * q, k) - mu_p * mu_q
            structure = (2.0 * cov + C2) / (var_p + var_q + C2)
        else:
            std_p = np.sqrt(np.maximum(var_p, 0.0))
            std_q = np.sqrt(np.maximum(var_q, 0.0))
            structure = (2.0 * std_p * std_q + C2) / (var_p + var_q + C2)
        smap = luminance * structure
        total += float(smap.sum())
        count += smap.size
    return total / count


@dataclass
class MetricRow:
    path: str
    scale: int
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    """Per-image metric rows plus dataset means (order-independent sums)."""

    rows: list[MetricRow] = field(default_factory=list)

    @property
    def mean_psnr_db(self) -> float:
        if not self.rows:
            return math.nan
        return math.fsum(r.psnr_db for r in self.rows) / len(self.rows)

    @property
    def mean_ssim(self) -> float:
        if not self.rows:
            return math.nan
        return math.fsum(r.ssim for r in self.rows) / len(self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "scale", "psnr_db", "ssim"])
            for r in self.rows:
                writer.writerow([r.path, r.scale, repr(r.psnr_db), repr(r.ssim)])

    def write_json(self, path) -> None:
        summary = {
            "images": len(self.rows),
            "mean_psnr_db": _json_float(self.mean_psnr_db),
            "mean_ssim": _json_float(self.mean_ssim),
        }
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _json_float(x: float):
    # Strict JSON has no Infinity literal; keep files parseable everywhere.
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x
