"""Finite-difference verification suites for the CLI gradcheck command.

Each suite builds deterministic random inputs, runs every check through
:func:`unetsr.gradcheck.finite_diff_check`, and returns the reports.
Elementwise checks run at tolerance 1e-6, everything composed at 1e-4.
"""

from __future__ import annotations

import numpy as np

from .gradcheck import FiniteDiffReport, finite_diff_check
from .losses import LossConfig, mge, mixge, mse
from .model import Model, NetConfig, build
from .tensor import (Tensor, add, concat_channels, conv2d, crop2d, maxpool2x2, mean_all, mul,
                     pad2d, relu, scalar_mul, sqrt_eps, square, sub, upsample_nearest2x)

ELEMENTWISE_TOL = 1e-6
COMPOSED_TOL = 1e-4

MODULES = ("all", "loss", "model", "ops")


def _rng(salt: int) -> np.random.Generator:
    return np.random.default_rng(20240 + salt)


def _off_kink(rng, shape, margin: float = 0.05) -> np.ndarray:
    """Values bounded away from zero, so ReLU-style kinks never sit inside
    the finite-difference stencil."""
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs * rng.uniform(margin, 1.0, size=shape)


def ops_suite() -> list[FiniteDiffReport]:
    checks: list[FiniteDiffReport] = []
    x = Tensor(_rng(1).normal(size=(2, 3, 4, 4)))
    y = Tensor(_rng(2).normal(size=(2, 3, 4, 4)))

    checks.append(finite_diff_check(lambda t: mean_all(add(t, y)), x,
                                    tolerance=ELEMENTWISE_TOL, name="add"))
    checks.append(finite_diff_check(lambda t: mean_all(square(sub(t, y))), x,
                                    tolerance=ELEMENTWISE_TOL, name="sub/square"))
    checks.append(finite_diff_check(lambda t: mean_all(mul(t, y)), x,
                                    tolerance=ELEMENTWISE_TOL, name="mul"))
    checks.append(finite_diff_check(lambda t: mean_all(scalar_mul(t, -1.7)), x,
                                    tolerance=ELEMENTWISE_TOL, name="scalar_mul"))
    checks.append(finite_diff_check(lambda t: mean_all(t), x,
                                    tolerance=1e-10, name="mean_all"))
    pos = Tensor(_rng(3).uniform(0.1, 2.0, size=(2, 3, 4, 4)))
    checks.append(finite_diff_check(lambda t: mean_all(square(sqrt_eps(t, 1e-12))), pos,
                                    tolerance=ELEMENTWISE_TOL, name="sqrt_eps"))
    xr = Tensor(_off_kink(_rng(4), (2, 3, 4, 4)))
    checks.append(finite_diff_check(lambda t: mean_all(square(relu(t))), xr,
                                    tolerance=ELEMENTWISE_TOL, name="relu"))

    xc = Tensor(_rng(5).normal(size=(1, 2, 5, 5)))
    w = Tensor(_rng(6).normal(size=(3, 2, 3, 3)))
    b = Tensor(_rng(7).normal(size=(3,)))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(conv2d(t, w, b, padding=1))), xc,
        tolerance=COMPOSED_TOL, name="conv2d wrt input"))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(conv2d(xc, t, b, padding=1))), w,
        tolerance=COMPOSED_TOL, name="conv2d wrt weight"))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(conv2d(xc, w, t, padding=1))), b,
        tolerance=COMPOSED_TOL, name="conv2d wrt bias"))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(conv2d(t, w, b, padding=2, pad_mode="replicate"))), xc,
        tolerance=COMPOSED_TOL, name="conv2d replicate pad"))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(conv2d(t, w, b, stride=2, padding=1))), xc,
        tolerance=COMPOSED_TOL, name="conv2d stride 2"))

    xp = Tensor(_rng(8).normal(size=(1, 2, 4, 4)))
    checks.append(finite_diff_check(lambda t: mean_all(square(maxpool2x2(t))), xp,
                                    tolerance=COMPOSED_TOL, name="maxpool2x2"))
    checks.append(finite_diff_check(lambda t: mean_all(square(upsample_nearest2x(t))), xp,
                                    tolerance=COMPOSED_TOL, name="upsample_nearest2x"))
    other = Tensor(_rng(9).normal(size=(1, 3, 4, 4)))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(concat_channels(t, other))), xp,
        tolerance=COMPOSED_TOL, name="concat_channels"))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(pad2d(t, (1, 2, 0, 1), "replicate"))), xp,
        tolerance=COMPOSED_TOL, name="pad2d replicate"))
    checks.append(finite_diff_check(
        lambda t: mean_all(square(crop2d(t, 1, 0, 2, 3))), xp,
        tolerance=COMPOSED_TOL, name="crop2d"))
    return checks


def loss_suite() -> list[FiniteDiffReport]:
    rng = _rng(20)
    target = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 8, 8)))
    pred = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 8, 8)))
    cfg = LossConfig(kind="mixge", lambda_g=0.1)
    return [
        finite_diff_check(lambda t: mse(t, target), pred,
                          tolerance=COMPOSED_TOL, name="mse"),
        finite_diff_check(lambda t: mge(t, target, 1e-12), pred,
                          tolerance=COMPOSED_TOL, name="mge"),
        finite_diff_check(lambda t: mixge(t, target, cfg), pred,
                          tolerance=COMPOSED_TOL, name="mixge end-to-end"),
    ]


def gradcheck_model(seed: int = 7) -> tuple[Model, Tensor, Tensor, LossConfig]:
    """The small composed-network fixture: depth 2, scale 2, 8x8 input."""
    config = NetConfig(depth=2, scale=2, base_width=4, width_cap=64, seed=seed)
    model = build(config)
    rng = _rng(30 + seed)
    x = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 8, 8)))
    target = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)))
    return model, x, target, LossConfig(kind="mixge", lambda_g=0.1)


def model_suite(seed: int = 7) -> list[FiniteDiffReport]:
    """Composed loss gradients, checked parameter tensor by parameter tensor
    and w.r.t. the input."""
    model, x, target, loss_cfg = gradcheck_model(seed)
    _, pyramids, _ = model.prepare_input(x)

    def loss_with(param_name, candidate: Tensor) -> Tensor:
        original = model.params[param_name]
        model.params.replace(param_name, candidate)
        try:
            return mixge(model.forward(x, pyramids), target, loss_cfg)
        finally:
            model.params.replace(param_name, original)

    checks = []
    for name, tensor in model.params.items():
        checks.append(finite_diff_check(
            lambda t, n=name: loss_with(n, t), tensor,
            tolerance=COMPOSED_TOL, name=f"model loss wrt {name}"))

    def loss_wrt_input(t: Tensor) -> Tensor:
        return mixge(model.forward(t, pyramids), target, loss_cfg)

    checks.append(finite_diff_check(loss_wrt_input, x,
                                    tolerance=COMPOSED_TOL, name="model loss wrt input"))
    return checks


def run_suites(module: str = "all") -> list[FiniteDiffReport]:
    if module not in MODULES:
        raise ValueError(f"unknown gradcheck module {module!r}")
    checks: list[FiniteDiffReport] = []
    if module in ("all", "ops"):
        checks += ops_suite()
    if module in ("all", "loss"):
        checks += loss_suite()
    if module in ("all", "model"):
        checks += model_suite()
    return checks
