"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tape, Tensor, backward

DEFAULT_STEP = 1e-5
DENOM_FLOOR = 1e-8


@dataclass
class FiniteDiffReport:
    """Outcome of comparing autograd against central finite differences."""

    name: str
    max_rel_err: float
    tolerance: float
    passed: bool
    worst_index: tuple[int, ...] = ()

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: max_rel_err={self.max_rel_err:.3e} (tol {self.tolerance:.1e})"


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor,
                      step: float = DEFAULT_STEP, tolerance: float = 1e-4,
                      name: str = "gradcheck") -> FiniteDiffReport:
    """Compare the autograd gradient of scalar-valued ``f`` at ``x`` with
    central differences (f(x+he) - f(x-he)) / 2h per element.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    ``f`` must be deterministic; failures are carried in the report, not raised.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape():
        out = f(probe)
        backward(out)
    analytic = probe.grad
    if analytic is None:
        analytic = np.zeros_like(probe.data)

    flat = x.data.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        up = f(Tensor(bumped.reshape(x.shape))).item()
        bumped[i] = flat[i] - step
        down = f(Tensor(bumped.reshape(x.shape))).item()
        numeric[i] = (up - down) / (2.0 * step)

    a = analytic.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), DENOM_FLOOR)
    rel = np.abs(a - numeric) / denom
    worst = int(rel.argmax()) if rel.size else 0
    max_rel = float(rel[worst]) if rel.size else 0.0
    return FiniteDiffReport(
        name=name,
        max_rel_err=max_rel,
        tolerance=tolerance,
        passed=bool(max_rel <= tolerance),
        worst_index=tuple(np.unravel_index(worst, x.shape)) if rel.size else (),
    )
