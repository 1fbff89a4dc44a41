"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` value together with the backward
closures linking it to its inputs. Building a scalar loss out of Tensors and
calling :meth:`Tensor.backward` fills ``.grad`` on every node that fed into
it. Plain ndarrays mix freely with Tensors: numpy ufuncs applied to a Tensor
are intercepted through ``__array_ufunc__``, so library code written against
``np.sinh``, ``+``, ``@`` etc. runs unchanged on either type.

Everything is float64 and single-threaded; given identical inputs the forward
values and gradients are bitwise reproducible.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph.

    Parameters
    ----------
    value:
        Array (or scalar) holding the forward value; stored as float64.
    parents:
        Tuple of ``(tensor, vjp)`` pairs; ``vjp`` maps the output gradient to
        this parent's gradient contribution.
    name:
        Optional identifier used in gradient reports.
    """

    __slots__ = ("value", "grad", "parents", "name")

    def __init__(self, value, parents: tuple = (), name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self.parents = parents
        self.name = name

    # -- introspection -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # -- graph construction helpers -----------------------------------------

    def _unary(self, value: Array, dfdx: Callable[[Array], Array]) -> "Tensor":
        return Tensor(value, ((self, dfdx),))

    # -- reductions and shape ops -------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = self.value.sum(axis=axis, keepdims=keepdims)

        def vjp(g: Array) -> Array:
            if axis is None:
                return np.broadcast_to(g, self.value.shape).astype(np.float64)
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            return np.broadcast_to(gg, self.value.shape).astype(np.float64)

        return self._unary(out, vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.value.size
        else:
            count = self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.value.reshape(shape)
        orig = self.value.shape
        return self._unary(out, lambda g: g.reshape(orig))

    @property
    def T(self) -> "Tensor":
        return self._unary(self.value.T, lambda g: g.T)

    def __getitem__(self, idx) -> "Tensor":
        out = self.value[idx]

        def vjp(g: Array) -> Array:
            z = np.zeros_like(self.value)
            np.add.at(z, idx, g)
            return z

        return self._unary(out, vjp)

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return self._unary(-self.value, lambda g: -g)

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise TypeError("only constant exponents are supported")
        p = float(p)
        return self._unary(
            self.value**p, lambda g: g * p * self.value ** (p - 1.0)
        )

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # -- numpy ufunc interception ----------------------------------------------

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        handler = _UFUNC_TABLE.get(ufunc)
        if handler is None:
            return NotImplemented
        return handler(*inputs)

    # -- backward pass -----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) node into every ancestor."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in node.parents:
                contribution = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = contribution
                else:
                    parent.grad = parent.grad + contribution


def value_of(x) -> Array:
    """The underlying ndarray of a Tensor, or `x` itself as an array."""
    if isinstance(x, Tensor):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _is_tensor(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _binary(x, y, out: Array, dfdx, dfdy) -> Tensor:
    parents = []
    if isinstance(x, Tensor):
        xs = x.value.shape
        parents.append((x, lambda g: _unbroadcast(dfdx(g), xs)))
    if isinstance(y, Tensor):
        ys = y.value.shape
        parents.append((y, lambda g: _unbroadcast(dfdy(g), ys)))
    return Tensor(out, tuple(parents))


# -- arithmetic ----------------------------------------------------------------


def add(x, y):
    if not _is_tensor(x, y):
        return np.add(x, y)
    xv, yv = value_of(x), value_of(y)
    return _binary(x, y, xv + yv, lambda g: g, lambda g: g)


def subtract(x, y):
    if not _is_tensor(x, y):
        return np.subtract(x, y)
    xv, yv = value_of(x), value_of(y)
    return _binary(x, y, xv - yv, lambda g: g, lambda g: -g)


def multiply(x, y):
    if not _is_tensor(x, y):
        return np.multiply(x, y)
    xv, yv = value_of(x), value_of(y)
    return _binary(x, y, xv * yv, lambda g: g * yv, lambda g: g * xv)


def divide(x, y):
    if not _is_tensor(x, y):
        return np.true_divide(x, y)
    xv, yv = value_of(x), value_of(y)
    return _binary(
        x, y, xv / yv, lambda g: g / yv, lambda g: -g * xv / (yv * yv)
    )


def matmul(x, y):
    if not _is_tensor(x, y):
        return np.matmul(x, y)
    xv, yv = value_of(x), value_of(y)
    out = xv @ yv

    def dfdx(g):
        if yv.ndim == 1:
            return np.outer(g, yv) if xv.ndim == 2 else g * yv
        if xv.ndim == 1:
            return g @ yv.T
        return g @ yv.T

    def dfdy(g):
        if xv.ndim == 1:
            return np.outer(xv, g) if yv.ndim == 2 else g * xv
        if yv.ndim == 1:
            return xv.T @ g
        return xv.T @ g

    return _binary(x, y, out, dfdx, dfdy)


def power(x, p):
    if not _is_tensor(x):
        return np.power(x, p)
    return x.__pow__(p)


def negative(x):
    if not _is_tensor(x):
        return np.negative(x)
    return -x


# -- elementwise transcendentals ---------------------------------------------


def _make_unary(np_fn, dfdx_from):
    def op(x):
        if not isinstance(x, Tensor):
            return np_fn(x)
        out = np_fn(x.value)
        return x._unary(out, dfdx_from(x.value, out))

    op.__name__ = np_fn.__name__
    return op


exp = _make_unary(np.exp, lambda xv, out: lambda g: g * out)
log = _make_unary(np.log, lambda xv, out: lambda g: g / xv)
log1p = _make_unary(np.log1p, lambda xv, out: lambda g: g / (1.0 + xv))
expm1 = _make_unary(np.expm1, lambda xv, out: lambda g: g * (out + 1.0))
sqrt = _make_unary(np.sqrt, lambda xv, out: lambda g: g / (2.0 * out))
square = _make_unary(np.square, lambda xv, out: lambda g: g * 2.0 * xv)
sinh = _make_unary(np.sinh, lambda xv, out: lambda g: g * np.cosh(xv))
cosh = _make_unary(np.cosh, lambda xv, out: lambda g: g * np.sinh(xv))
tanh = _make_unary(np.tanh, lambda xv, out: lambda g: g * (1.0 - out * out))
arcsinh = _make_unary(
    np.arcsinh, lambda xv, out: lambda g: g / np.sqrt(xv * xv + 1.0)
)
arccosh = _make_unary(
    np.arccosh, lambda xv, out: lambda g: g / np.sqrt(xv * xv - 1.0)
)
arcsin = _make_unary(
    np.arcsin, lambda xv, out: lambda g: g / np.sqrt(1.0 - xv * xv)
)
arccos = _make_unary(
    np.arccos, lambda xv, out: lambda g: -g / np.sqrt(1.0 - xv * xv)
)


def maximum(x, y):
    """Elementwise max; subgradient 0 at ties (hinge convention)."""
    if not _is_tensor(x, y):
        return np.maximum(x, y)
    xv, yv = value_of(x), value_of(y)
    return _binary(
        x,
        y,
        np.maximum(xv, yv),
        lambda g: g * (xv > yv),
        lambda g: g * (yv > xv),
    )


def minimum(x, y):
    if not _is_tensor(x, y):
        return np.minimum(x, y)
    xv, yv = value_of(x), value_of(y)
    return _binary(
        x,
        y,
        np.minimum(xv, yv),
        lambda g: g * (xv < yv),
        lambda g: g * (yv < xv),
    )


def softplus(x):
    """log(1 + e^x), overflow-safe for large |x|; gradient is the sigmoid."""
    xv = value_of(x)
    out = np.logaddexp(0.0, xv)
    if not isinstance(x, Tensor):
        return out
    sig = np.where(xv >= 0, 1.0 / (1.0 + np.exp(-xv)), np.exp(xv - out))
    return x._unary(out, lambda g: g * sig)


def inverse_softplus(c):
    """Solve softplus(u) = c for u; stable for both tiny and large c."""
    c = np.asarray(c, dtype=np.float64)
    small = np.minimum(c, 30.0)  # avoid expm1 overflow in the unused branch
    return np.where(c > 30.0, c, np.log(np.expm1(np.maximum(small, 1e-300))))


# -- structural helpers -----------------------------------------------------


def where(cond, a, b):
    """Select elementwise by a boolean array; `cond` is never differentiated."""
    cond = np.asarray(cond)
    if not _is_tensor(a, b):
        return np.where(cond, a, b)
    av, bv = value_of(a), value_of(b)
    out = np.where(cond, av, bv)
    return _binary(
        a,
        b,
        out,
        lambda g: np.where(cond, g, 0.0),
        lambda g: np.where(cond, 0.0, g),
    )


def clip(x, lo=None, hi=None):
    """Clamp values; gradient passes only where the clamp is inactive."""
    xv = value_of(x)
    out = np.clip(xv, lo, hi)
    if not isinstance(x, Tensor):
        return out
    mask = np.ones_like(xv, dtype=bool)
    if lo is not None:
        mask &= xv > lo
    if hi is not None:
        mask &= xv < hi
    return x._unary(out, lambda g: g * mask)


def concatenate(parts: Sequence, axis: int = 0):
    if not _is_tensor(*parts):
        return np.concatenate(parts, axis=axis)
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for i, p in enumerate(parts):
        if not isinstance(p, Tensor):
            continue
        lo, hi_ = offsets[i], offsets[i + 1]

        def vjp(g, lo=lo, hi_=hi_):
            slicer = [slice(None)] * g.ndim
            slicer[axis] = slice(lo, hi_)
            return g[tuple(slicer)]

        parents.append((p, vjp))
    return Tensor(out, tuple(parents))


def logsumexp(x, axis: int = -1, keepdims: bool = False):
    """Max-shifted log-sum-exp; rows of -inf are permitted among the entries."""
    xv = value_of(x)
    shift = np.max(xv, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    if not isinstance(x, Tensor):
        out = np.log(np.sum(np.exp(xv - shift), axis=axis, keepdims=True)) + shift
        return out if keepdims else np.squeeze(out, axis=axis)
    shifted = x - shift
    out = log(exp(shifted).sum(axis=axis, keepdims=True)) + shift
    if keepdims:
        return out
    newshape = list(out.shape)
    del newshape[axis if axis >= 0 else out.ndim + axis]
    return out.reshape(tuple(newshape))


_UFUNC_TABLE = {
    np.add: add,
    np.subtract: subtract,
    np.multiply: multiply,
    np.true_divide: divide,
    np.negative: negative,
    np.positive: lambda x: x,
    np.matmul: matmul,
    np.power: power,
    np.exp: exp,
    np.log: log,
    np.log1p: log1p,
    np.expm1: expm1,
    np.sqrt: sqrt,
    np.square: square,
    np.sinh: sinh,
    np.cosh: cosh,
    np.tanh: tanh,
    np.arcsinh: arcsinh,
    np.arccosh: arccosh,
    np.arcsin: arcsin,
    np.arccos: arccos,
    np.maximum: maximum,
    np.minimum: minimum,
}
