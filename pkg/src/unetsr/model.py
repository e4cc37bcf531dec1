"""Encoder-decoder super-resolution network.

The architecture is a U-net trimmed for pixel regression: no batch
normalization anywhere, a single 3x3 convolution per block, channel
concatenation for the skip connections, and log2(scale) extra upscale stages
after the decoder. Each upscale stage fuses the working features with a
convolved copy of the bicubic-upscaled input at the same spatial scale, and
the final 3x3 convolution maps back to RGB with a linear output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, DimensionError
from .images import bicubic_resize
from .tensor import Tensor, concat_channels, conv2d, crop2d, maxpool2x2, pad2d, relu, upsample_nearest2x

SCALES = (2, 4, 8)


@dataclass
class NetConfig:
    """Architecture knobs: depth, magnification scale and channel widths."""

    depth: int = 5
    scale: int = 2
    in_channels: int = 3
    base_width: int = 64
    width_cap: int = 512
    kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.base_width < 1:
            raise ConfigError(f"base_width must be >= 1, got {self.base_width}")
        if self.width_cap < self.base_width:
            raise ConfigError(
                f"width_cap {self.width_cap} must be >= base_width {self.base_width}")
        if self.kernel != 3:
            raise ConfigError("kernel is fixed to 3")

    @property
    def upscale_stages(self) -> int:
        return int(round(math.log2(self.scale)))

    def width(self, level: int) -> int:
        return min(self.base_width * (2 ** level), self.width_cap)


def layer_shapes(config: NetConfig) -> Iterator[tuple[str, tuple[int, int, int, int]]]:
    """Yield (name, weight shape) for every convolution, in canonical order.

    Every layer also carries a bias of length Cout. This single enumeration
    backs parameter initialization, counting and checkpoint layout.
    """
    cin = config.in_channels
    for d in range(config.depth):
        yield f"enc{d}.conv", (config.width(d), cin, 3, 3)
        cin = config.width(d)
    yield "bottleneck.conv", (config.width(config.depth), cin, 3, 3)
    cur = config.width(config.depth)
    for d in reversed(range(config.depth)):
        yield f"dec{d}.up_conv", (config.width(d), cur, 2, 2)
        yield f"dec{d}.fuse_conv", (config.width(d), 2 * config.width(d), 3, 3)
        cur = config.width(d)
    head = config.width(0)
    for s in range(1, config.upscale_stages + 1):
        yield f"head{s}.main_conv", (head, cur, 3, 3)
        yield f"head{s}.skip_conv", (head, config.in_channels, 3, 3)
        yield f"head{s}.fuse_conv", (head, 2 * head, 3, 3)
        cur = head
    yield "out.conv", (config.in_channels, cur, 3, 3)


class ParamSet:
    """Named parameter tensors with stable iteration order."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __len__(self) -> int:
        return len(self._tensors)

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def replace(self, name: str, tensor: Tensor) -> None:
        if name not in self._tensors:
            raise KeyError(name)
        self._tensors[name] = tensor

    def items(self):
        return self._tensors.items()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def total_size(self) -> int:
        return sum(t.size for t in self._tensors.values())


def param_count(config: NetConfig) -> int:
    """Closed-form parameter total (weights plus biases) for a configuration."""
    total = 0
    for _, (cout, cin, kh, kw) in layer_shapes(config):
        total += cout * cin * kh * kw + cout
    return total


def init_params(config: NetConfig, seed: Optional[int] = None) -> ParamSet:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, deterministic per seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in layer_shapes(config):
        cout, cin, kh, kw = shape
        std = math.sqrt(2.0 / (cin * kh * kw))
        tensors[f"{name}.weight"] = Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)
        tensors[f"{name}.bias"] = Tensor(np.zeros(cout), requires_grad=True)
    return ParamSet(tensors)


class Model:
    """Built network: immutable config plus the parameter set it runs with."""

    def __init__(self, config: NetConfig, params: ParamSet):
        self.config = config
        self.params = params

    def _conv(self, x: Tensor, name: str, padding: int = 1) -> Tensor:
        return conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"],
                      padding=padding)

    def forward(self, x: Tensor, pyramids: list[Tensor]) -> Tensor:
        """Run on an N,C,H,W input whose extents divide 2**depth.

        ``pyramids[s-1]`` must hold the bicubic upscale of ``x`` at scale 2**s
        for every upscale stage s; see :meth:`predict` for the variant that
        prepares them (and pads/crops) for you.
        """
        cfg = self.config
        n, c, h, w = x.shape
        if c != cfg.in_channels:
            raise DimensionError(f"forward: channel axis is {c}, config wants {cfg.in_channels}")
        div = 2 ** cfg.depth
        if h % div:
            raise DimensionError(f"forward: height {h} not divisible by 2^depth = {div}")
        if w % div:
            raise DimensionError(f"forward: width {w} not divisible by 2^depth = {div}")
        if len(pyramids) != cfg.upscale_stages:
            raise DimensionError(
                f"forward: expected {cfg.upscale_stages} pyramid levels, got {len(pyramids)}")
        for s, level in enumerate(pyramids, start=1):
            want = (n, c, h * 2 ** s, w * 2 ** s)
            if level.shape != want:
                raise DimensionError(
                    f"forward: pyramid level {s} has shape {level.shape}, expected {want}")

        skips: list[Tensor] = []
        cur = x
        for d in range(cfg.depth):
            cur = relu(self._conv(cur, f"enc{d}.conv"))
            skips.append(cur)
            cur = maxpool2x2(cur)

        cur = relu(self._conv(cur, "bottleneck.conv"))

        for d in reversed(range(cfg.depth)):
            cur = upsample_nearest2x(cur)
            # 2x2 kernel needs one extra row/col to keep the size; pad top-left.
            cur = self._conv(pad2d(cur, (1, 0, 1, 0)), f"dec{d}.up_conv", padding=0)
            cur = concat_channels(cur, skips[d])
            cur = relu(self._conv(cur, f"dec{d}.fuse_conv"))

        for s in range(1, cfg.upscale_stages + 1):
            cur = upsample_nearest2x(cur)
            cur = relu(self._conv(cur, f"head{s}.main_conv"))
            branch = relu(self._conv(pyramids[s - 1], f"head{s}.skip_conv"))
            cur = concat_channels(cur, branch)
            cur = relu(self._conv(cur, f"head{s}.fuse_conv"))

        return self._conv(cur, "out.conv")

    def prepare_input(self, x: Tensor) -> tuple[Tensor, list[Tensor], tuple[int, int]]:
        """Pad to the next multiple of 2**depth (replicate) and build the
        bicubic input pyramid; returns (padded, pyramids, original (h, w))."""
        cfg = self.config
        n, c, h, w = x.shape
        div = 2 ** cfg.depth
        ph = (div - h % div) % div
        pw = (div - w % div) % div
        xp = pad2d(x, (0, ph, 0, pw), "replicate") if (ph or pw) else x
        hp, wp = h + ph, w + pw
        pyramids = [bicubic_resize(xp, hp * 2 ** s, wp * 2 ** s)
                    for s in range(1, cfg.upscale_stages + 1)]
        return xp, pyramids, (h, w)

    def predict(self, x: Tensor) -> Tensor:
        """Super-resolve an N,C,H,W input of any extents via pad-and-crop."""
        xp, pyramids, (h, w) = self.prepare_input(x)
        out = self.forward(xp, pyramids)
        r = self.config.scale
        if out.shape[2] != h * r or out.shape[3] != w * r:
            out = crop2d(out, 0, 0, h * r, w * r)
        return out


def build(config: NetConfig, params: Optional[ParamSet] = None) -> Model:
    """Construct the network, initializing parameters from config.seed unless given."""
    return Model(config, init_params(config) if params is None else params)
