"""Image decode/encode, bicubic resampling and training-pair generation.

Images live on disk as 8-bit RGB (PNG/JPEG/BMP readable, PNG written) and in
memory as float64 [0, 1] rasters. Resampling uses the separable cubic
convolution kernel with a = -0.5, edge-clamped sampling, and kernel support
widened by the scale factor when downscaling (anti-aliasing).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ContractError, DimensionError
from .tensor import Tensor

logger = logging.getLogger(__name__)

HR_TARGET = 224


@dataclass
class ImageBuf:
    """Decoded RGB raster: float64 (H, W, 3) pixels on the [0, 1] scale."""

    height: int
    width: int
    pixels: np.ndarray
    channels: int = 3
    source_path: str = ""

    @classmethod
    def from_array(cls, pixels: np.ndarray, source_path: str = "") -> "ImageBuf":
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DimensionError(f"ImageBuf: expected (H, W, 3) pixels, got {pixels.shape}")
        return cls(height=pixels.shape[0], width=pixels.shape[1], pixels=pixels,
                   source_path=source_path)


def decode_image(path) -> ImageBuf:
    """Read any PIL-decodable image as RGB, promoting 8-bit values to [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return ImageBuf.from_array(arr, source_path=str(path))


def _quantize(pixels: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], scale to 255 and round half away from zero."""
    scaled = np.clip(pixels, 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def encode_png(buf: ImageBuf, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_quantize(buf.pixels), mode="RGB").save(path, format="PNG")


def to_tensor(buf: ImageBuf) -> Tensor:
    """ImageBuf -> Tensor[1, 3, H, W] on the [0, 1] scale."""
    return Tensor(buf.pixels.transpose(2, 0, 1)[None, :, :, :].copy())


def from_tensor(t: Tensor) -> ImageBuf:
    """Tensor[1, 3, H, W] (or [3, H, W]) -> ImageBuf, quantized to the 8-bit grid.

    Values are clamped to [0, 1] and rounded half away from zero at the 255
    scale, so the buffer holds exactly what a PNG write will store.
    """
    data = t.data
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise DimensionError(f"from_tensor: batch axis must be 1, got {data.shape[0]}")
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 3:
        raise DimensionError(f"from_tensor: expected [1,3,H,W] or [3,H,W], got {t.shape}")
    q = _quantize(data.transpose(1, 2, 0))
    return ImageBuf.from_array(q.astype(np.float64) / 255.0)


# ---------------------------------------------------------------------------
# bicubic resampling

_CUBIC_A = -0.5


def _cubic_kernel(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (_CUBIC_A + 2.0) * ax3 - (_CUBIC_A + 3.0) * ax2 + 1.0
    far = _CUBIC_A * (ax3 - 5.0 * ax2 + 8.0 * ax - 4.0)
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) row-stochastic matrix applying the cubic kernel
    along one axis, with pixel centers aligned and indices edge-clamped."""
    if n_out < 1:
        raise ContractError(f"resample target extent must be >= 1, got {n_out}")
    scale = n_out / n_in
    fscale = min(scale, 1.0)
    support = 2.0 / fscale
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        center = (i + 0.5) / scale - 0.5
        lo = math.ceil(center - support)
        hi = math.floor(center + support)
        taps = np.arange(lo, hi + 1)
        weights = _cubic_kernel((taps - center) * fscale)
        np.add.at(m[i], np.clip(taps, 0, n_in - 1), weights)
        m[i] /= weights.sum()
    return m


def bicubic_resize(img, out_h: int, out_w: int):
    """Separable bicubic resize of an ImageBuf or an N,C,H,W Tensor.

    Returns the same kind it was given. Tensor resizing is a plain value
    transform (never recorded on a tape).
    """
    if out_h < 1 or out_w < 1:
        raise ContractError(f"resize target must be at least 1x1, got {out_h}x{out_w}")
    if isinstance(img, ImageBuf):
        mv = resample_matrix(img.height, out_h)
        mh = resample_matrix(img.width, out_w)
        out = np.einsum("oh,hwc,pw->opc", mv, img.pixels, mh, optimize=True)
        return ImageBuf.from_array(out, source_path=img.source_path)
    if isinstance(img, Tensor):
        if img.data.ndim != 4:
            raise DimensionError(f"bicubic_resize: expected N,C,H,W tensor, got {img.data.ndim}-d")
        mv = resample_matrix(img.shape[2], out_h)
        mh = resample_matrix(img.shape[3], out_w)
        return Tensor(np.matmul(np.matmul(mv, img.data), mh.T))
    raise ContractError(f"bicubic_resize: unsupported input type {type(img).__name__}")


# ---------------------------------------------------------------------------
# training pairs

@dataclass
class PairEntry:
    lr: str
    hr: str
    scale: int


@dataclass
class PairManifest:
    """Ordered list of LR/HR pair paths, lexicographic by HR path."""

    entries: list[PairEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def save(self, path) -> None:
        payload = [{"lr": e.lr, "hr": e.hr, "scale": e.scale} for e in self.entries]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PairManifest":
        base = Path(path).parent
        with open(path) as fh:
            payload = json.load(fh)
        entries = [
            PairEntry(lr=str(base / item["lr"]), hr=str(base / item["hr"]),
                      scale=int(item["scale"]))
            for item in payload
        ]
        entries.sort(key=lambda e: e.hr)
        return cls(entries=entries)

    def validate_extents(self) -> None:
        """Check LR extents are exactly HR / scale (header reads only)."""
        for e in self.entries:
            with Image.open(e.lr) as lr, Image.open(e.hr) as hr:
                lw, lh = lr.size
                hw, hh = hr.size
            if lw * e.scale != hw or lh * e.scale != hh:
                raise DimensionError(
                    f"pair {e.hr}: LR {lw}x{lh} times scale {e.scale} != HR {hw}x{hh}")


def make_pairs(src_dir, out_dir, scale: int, target: int = HR_TARGET) -> PairManifest:
    """Generate LR/HR training pairs from a directory of images.

    Every decodable image becomes an HR PNG resized to target x target and an
    LR PNG downscaled by the given power-of-two scale. Undecodable files are
    skipped with a logged warning. Layout: <out>/hr/<name>.png,
    <out>/x<scale>/lr/<name>.png, manifest <out>/x<scale>/pairs.json with
    paths relative to the manifest.
    """
    if scale not in (2, 4, 8):
        raise ContractError(f"scale must be 2, 4 or 8, got {scale}")
    if target % scale:
        raise ContractError(f"target {target} not divisible by scale {scale}")
    src = Path(src_dir)
    out = Path(out_dir)
    if not src.is_dir():
        raise ContractError(f"source directory not found: {src}")

    hr_dir = out / "hr"
    lr_dir = out / f"x{scale}" / "lr"
    hr_dir.mkdir(parents=True, exist_ok=True)
    lr_dir.mkdir(parents=True, exist_ok=True)

    used_names: set[str] = set()
    entries: list[PairEntry] = []
    files = sorted(p for p in src.iterdir() if p.is_file())
    for path in files:
        try:
            buf = decode_image(path)
        except (UnidentifiedImageError, OSError) as exc:
            logger.warning("skipping undecodable file %s: %s", path, exc)
            continue
        name = path.stem
        k = 1
        while name in used_names:
            k += 1
            name = f"{path.stem}_{k}"
        used_names.add(name)
        hr = bicubic_resize(buf, target, target)
        lr = bicubic_resize(hr, target // scale, target // scale)
        encode_png(hr, hr_dir / f"{name}.png")
        encode_png(lr, lr_dir / f"{name}.png")
        entries.append(PairEntry(lr=f"lr/{name}.png", hr=f"../hr/{name}.png", scale=scale))

    if not entries:
        raise ContractError(f"no decodable images in {src}")
    entries.sort(key=lambda e: e.hr)
    manifest = PairManifest(entries=entries)
    manifest_path = out / f"x{scale}" / "pairs.json"
    manifest.save(manifest_path)
    return PairManifest.load(manifest_path)
