"""Dense float64 tensors with reverse-mode automatic differentiation.

Operations record nodes on the thread-local active :class:`Tape`; calling
:func:`backward` on a scalar result walks the tape in reverse append order
and accumulates gradients (+=) into every tensor that requires them. With no
active tape the same functions are plain forward computations.

Convolution is cross-correlation (no kernel flip), the usual deep-learning
convention, implemented as im2col + one matrix multiply.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_local = threading.local()


def _active_tape() -> Optional["Tape"]:
    return getattr(_local, "tape", None)


class Tape:
    """Append-only record of differentiable operations.

    Confined to one thread: entering the context makes this the active tape
    for the current thread only. Nodes are appended in execution order, so a
    single reverse pass visits every node after all of its consumers.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise ContractError("a tape is already active on this thread")
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape = None
        return False


class _Node:
    __slots__ = ("out", "fn")

    def __init__(self, out: "Tensor", fn: Callable[[np.ndarray], None]):
        self.out = out
        self.fn = fn


class Tensor:
    """N-dimensional float64 array, optionally linked to a gradient tape.

    Data is owned by the tensor and must not be mutated after construction;
    only the ``grad`` buffer changes, via backward passes and ``zero_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_node", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.tape_node: Optional[int] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, float(other))

    def __rmul__(self, other):
        return scalar_mul(self, float(other))


def _tracked(t: Tensor) -> bool:
    return t.requires_grad


def _record(out: Tensor, inputs: Sequence[Tensor], fn: Callable[[np.ndarray], None]) -> Tensor:
    tape = _active_tape()
    if tape is None or not any(_tracked(t) for t in inputs):
        return out
    out.requires_grad = True
    out.tape_node = len(tape.nodes)
    out._tape = tape
    tape.nodes.append(_Node(out, fn))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar ``loss`` into all tensors that need them.

    Single reverse pass over the recording tape; the tape is cleared afterward
    and cannot be replayed. Gradients add into any pre-existing ``grad``
    buffers, so callers zero parameter gradients between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise ContractError("loss was not produced under an active tape")
    if tape._consumed:
        raise ContractError("tape already consumed by a previous backward pass")
    tape._consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        node.fn(g)
    tape.nodes.clear()


# ---------------------------------------------------------------------------
# shape checks

def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        for axis, (ea, eb) in enumerate(zip(a.shape, b.shape)):
            if ea != eb:
                raise DimensionError(f"{op}: axis {axis} differs ({ea} vs {eb})")
        raise DimensionError(f"{op}: rank differs ({a.shape} vs {b.shape})")


def _check_nchw(t: Tensor, op: str) -> None:
    if t.data.ndim != 4:
        raise DimensionError(f"{op}: expected a 4-d N,C,H,W tensor, got {t.data.ndim}-d")


# ---------------------------------------------------------------------------
# padding plumbing

def _pad_nchw(x: np.ndarray, top: int, bottom: int, left: int, right: int, mode: str) -> np.ndarray:
    widths = ((0, 0), (0, 0), (top, bottom), (left, right))
    if mode == "zero":
        return np.pad(x, widths, mode="constant")
    if mode == "replicate":
        return np.pad(x, widths, mode="edge")
    raise ContractError(f"unknown pad mode {mode!r}")


def _unpad_fold(g: np.ndarray, top: int, bottom: int, left: int, right: int, mode: str) -> np.ndarray:
    """Adjoint of _pad_nchw: crop for zero padding, fold borders for replicate."""
    hp, wp = g.shape[2], g.shape[3]
    if mode == "zero":
        return g[:, :, top:hp - bottom, left:wp - right]
    rows = g[:, :, top:hp - bottom, :].copy()
    if top:
        rows[:, :, 0, :] += g[:, :, :top, :].sum(axis=2)
    if bottom:
        rows[:, :, -1, :] += g[:, :, hp - bottom:, :].sum(axis=2)
    out = rows[:, :, :, left:wp - right].copy()
    if left:
        out[:, :, :, 0] += rows[:, :, :, :left].sum(axis=3)
    if right:
        out[:, :, :, -1] += rows[:, :, :, wp - right:].sum(axis=3)
    return out


def pad2d(x: Tensor, pads: tuple[int, int, int, int], mode: str = "zero") -> Tensor:
    """Spatial padding of an N,C,H,W tensor by (top, bottom, left, right)."""
    _check_nchw(x, "pad2d")
    top, bottom, left, right = pads
    if min(pads) < 0:
        raise ContractError(f"pad2d: negative pad {pads}")
    out = Tensor(_pad_nchw(x.data, top, bottom, left, right, mode))

    def fn(g: np.ndarray) -> None:
        _accumulate(x, _unpad_fold(g, top, bottom, left, right, mode))

    return _record(out, (x,), fn)


def crop2d(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Spatial crop of an N,C,H,W tensor; gradient zero-fills the removed rim."""
    _check_nchw(x, "crop2d")
    n, c, h, w = x.shape
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise DimensionError(
            f"crop2d: window {height}x{width} at ({top},{left}) exceeds spatial extents {h}x{w}")
    out = Tensor(x.data[:, :, top:top + height, left:left + width].copy())

    def fn(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        gx[:, :, top:top + height, left:left + width] = g
        _accumulate(x, gx)

    return _record(out, (x,), fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def fn(g: np.ndarray) -> None:
        _accumulate(x, g.reshape(x.shape))

    return _record(out, (x,), fn)


# ---------------------------------------------------------------------------
# convolution

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * ho * wo, c * kh * kw), ho, wo


def _col2im(cols: np.ndarray, xp_shape: tuple[int, ...], kh: int, kw: int,
            stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, hp, wp = xp_shape
    c6 = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros(xp_shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride] += c6[:, :, i, j]
    return xp


def conv2d(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, pad_mode: str = "zero") -> Tensor:
    """2-d cross-correlation of N,Cin,H,W with Cout,Cin,kh,kw filters.

    Output extents are floor((H + 2*padding - kh) / stride) + 1 and likewise
    for width. Differentiable w.r.t. input, weight and bias.
    """
    _check_nchw(input, "conv2d")
    if weight.data.ndim != 4:
        raise DimensionError(f"conv2d: weight must be 4-d, got {weight.data.ndim}-d")
    n, cin, h, w = input.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise DimensionError(f"conv2d: channel axis differs (input Cin={cin}, weight Cin={wcin})")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias axis 0 must be Cout={cout}, got {bias.shape}")
    if stride < 1:
        raise ContractError(f"conv2d: stride must be positive, got {stride}")
    if padding < 0:
        raise ContractError(f"conv2d: padding must be non-negative, got {padding}")
    if kh > h + 2 * padding:
        raise DimensionError(f"conv2d: height axis too small (kernel {kh} > padded {h + 2 * padding})")
    if kw > w + 2 * padding:
        raise DimensionError(f"conv2d: width axis too small (kernel {kw} > padded {w + 2 * padding})")

    xp = _pad_nchw(input.data, padding, padding, padding, padding, pad_mode) if padding else input.data
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    outmat = cols @ wmat.T
    if bias is not None:
        outmat += bias.data
    out = Tensor(outmat.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    xp_shape = xp.shape

    def fn(g: np.ndarray) -> None:
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        if weight.requires_grad:
            _accumulate(weight, (gmat.T @ cols).reshape(cout, cin, kh, kw))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, gmat.sum(axis=0))
        if input.requires_grad:
            gxp = _col2im(gmat @ wmat, xp_shape, kh, kw, stride, ho, wo)
            if padding:
                gxp = _unpad_fold(gxp, padding, padding, padding, padding, pad_mode)
            _accumulate(input, gxp)

    inputs = (input, weight) if bias is None else (input, weight, bias)
    return _record(out, inputs, fn)


# ---------------------------------------------------------------------------
# pooling / resampling / activation / concat

def maxpool2x2(input: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient routes to the first max per window."""
    _check_nchw(input, "maxpool2x2")
    n, c, h, w = input.shape
    if h % 2:
        raise DimensionError(f"maxpool2x2: height axis must be even, got {h}")
    if w % 2:
        raise DimensionError(f"maxpool2x2: width axis must be even, got {w}")
    ho, wo = h // 2, w // 2
    windows = input.data.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = windows.argmax(axis=-1)  # first index wins ties, matching scan order
    out = Tensor(np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0])

    def fn(g: np.ndarray) -> None:
        gw = np.zeros((n, c, ho, wo, 4), dtype=np.float64)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        _accumulate(input, gx)

    return _record(out, (input,), fn)


def upsample_nearest2x(input: Tensor) -> Tensor:
    """Replicate every pixel into a 2x2 block; gradient sums the four copies."""
    _check_nchw(input, "upsample_nearest2x")
    n, c, h, w = input.shape
    out = Tensor(np.repeat(np.repeat(input.data, 2, axis=2), 2, axis=3))

    def fn(g: np.ndarray) -> None:
        _accumulate(input, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _record(out, (input,), fn)


def relu(input: Tensor) -> Tensor:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    mask = input.data > 0
    out = Tensor(np.where(mask, input.data, 0.0))

    def fn(g: np.ndarray) -> None:
        _accumulate(input, g * mask)

    return _record(out, (input,), fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two N,C,H,W tensors along the channel axis."""
    _check_nchw(a, "concat_channels")
    _check_nchw(b, "concat_channels")
    for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
        if a.shape[axis] != b.shape[axis]:
            raise DimensionError(
                f"concat_channels: {name} axis differs ({a.shape[axis]} vs {b.shape[axis]})")
    ca = a.shape[1]
    out = Tensor(np.concatenate((a.data, b.data), axis=1))

    def fn(g: np.ndarray) -> None:
        _accumulate(a, g[:, :ca])
        _accumulate(b, g[:, ca:])

    return _record(out, (a, b), fn)


# ---------------------------------------------------------------------------
# elementwise suite

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def fn(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return _record(out, (a, b), fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)

    def fn(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return _record(out, (a, b), fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def fn(g: np.ndarray) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _record(out, (a, b), fn)


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data)

    def fn(g: np.ndarray) -> None:
        _accumulate(x, 2.0 * x.data * g)

    return _record(out, (x,), fn)


def sqrt_eps(x: Tensor, eps: float) -> Tensor:
    """sqrt(x + eps); eps > 0 keeps the derivative finite at x = 0."""
    if eps < 0:
        raise ContractError(f"sqrt_eps: eps must be non-negative, got {eps}")
    y = np.sqrt(x.data + eps)
    out = Tensor(y)

    def fn(g: np.ndarray) -> None:
        _accumulate(x, g * 0.5 / y)

    return _record(out, (x,), fn)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c)

    def fn(g: np.ndarray) -> None:
        _accumulate(x, g * c)

    return _record(out, (x,), fn)


def mean_all(x: Tensor) -> Tensor:
    """Mean over every element, as a scalar (shape ()) tensor."""
    n = x.data.size
    out = Tensor(x.data.mean())

    def fn(g: np.ndarray) -> None:
        _accumulate(x, np.full(x.shape, float(g) / n))

    return _record(out, (x,), fn)
