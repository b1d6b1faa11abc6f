"""Dense tensors with reverse-mode automatic differentiation.

Values live in numpy arrays of the current default dtype (float32 unless
overridden with :func:`default_dtype`). Every op records its parents in
insertion order, so :meth:`Tensor.backward` visits nodes in a reproducible
topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_STATE = {"dtype": np.float32, "grad": True}


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily change the dtype used for new tensors."""
    prev = _STATE["dtype"]
    _STATE["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _STATE["dtype"] = prev


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    prev = _STATE["grad"]
    _STATE["grad"] = False
    try:
        yield
    finally:
        _STATE["grad"] = prev


def get_default_dtype():
    return _STATE["dtype"]


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""


def _shape_error(op: str, a, b) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        dtype = dtype or _STATE["dtype"]
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward: loss must be a scalar, got shape {self.shape}")
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data, dtype=data.dtype if isinstance(data, np.ndarray) else None)
    if _STATE["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(op, a.shape, b.shape) from None


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)), "mul")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return _make(out, (x,), lambda g: (g * (x.data > 0),), "relu")


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    out = np.logaddexp(0, x.data).astype(x.data.dtype)
    return _make(out, (x,), lambda g: (g * _sigmoid(x.data),), "softplus")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2 * g * x.data,), "square")


# reductions / shape --------------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise _shape_error("reshape", x.shape, shape) from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the first."""
    return reshape(x, (x.shape[0], -1))


# linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    return _make(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw), (oh, ow)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (F, C, kh, kw)."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise _shape_error("conv2d", x.shape, w.shape)
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise _shape_error("conv2d", x.shape, w.shape)
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols, (oh, ow) = _im2col(xp, kh, kw, stride)
    wm = w.data.reshape(f, -1)
    out = (cols @ wm.T).reshape(n, oh, ow, f).transpose(0, 3, 1, 2)

    def backward(g):
        gr = g.transpose(0, 2, 3, 1).reshape(-1, f)
        gw = (gr.T @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gr @ wm).reshape(n, oh, ow, c, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = dxp[:, :, p:p + h, p:p + wd] if p else dxp
        return gx, gw

    return _make(np.ascontiguousarray(out), (x, w), backward, "conv2d")


def max_pool2x2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2x2: spatial dims must be even, got {x.shape}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gb.reshape(n, c, h, w),)

    return _make(out, (x,), backward, "max_pool2x2")


# probabilities -------------------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    s = _softmax(x.data)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _make(out, (x,), backward, "log_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of (N, K) logits against integer labels."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise _shape_error("cross_entropy", logits.shape, labels.shape)
    n = logits.shape[0]
    lp = log_softmax(Tensor(logits.data)).data
    out = np.asarray(-lp[np.arange(n), labels].mean(), dtype=logits.data.dtype)

    def backward(g):
        d = np.exp(lp)
        d[np.arange(n), labels] -= 1
        return (d * (g / n),)

    return _make(out, (logits,), backward, "cross_entropy")
