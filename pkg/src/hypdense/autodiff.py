"""Minimal reverse-mode differentiation over numpy arrays.

Every op here accepts plain arrays or :class:`Tensor` values. With no Tensor
among the inputs an op is just the numpy computation and returns an ndarray,
so the geometry and loss formulas are written once and serve both the
validated numeric API and the training path.

The operator set is deliberately small: arithmetic with broadcasting,
two-operand einsum, reductions, tanh/exp/log/cosh/sinh/asinh, a clamped arccosh and square root,
``sinh(x)/x``, norms, hinges/clamps, log-sum-exp and a few shape ops.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "is_tensor",
    "data_of",
    "add",
    "einsum",
    "sum",
    "mean",
    "exp",
    "log",
    "tanh",
    "cosh",
    "sinh",
    "sqrt",
    "sinhc",
    "acosh_clamped",
    "asinh",
    "sqrt_clamped",
    "norm",
    "relu",
    "clip",
    "logsumexp",
    "concat",
    "stack",
    "reshape",
]

_SINHC_SERIES_CUTOFF = 1e-4


class Tensor:
    """An ndarray that remembers how it was computed."""

    __slots__ = ("data", "grad", "_parents", "_vjp", "name")
    __array_ufunc__ = None  # make ndarray defer to our reflected operators

    def __init__(self, data, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @classmethod
    def _node(cls, data, parents, vjp) -> "Tensor":
        out = cls(data)
        out._parents = tuple(parents)
        out._vjp = vjp
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed=None) -> None:
        """Accumulate d(self)/d(node) into ``.grad`` of every node in the graph."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float):
        exponent = float(exponent)
        x = self.data
        return Tensor._node(x**exponent, (self,), lambda g: (g * exponent * x ** (exponent - 1),))

    def __matmul__(self, other):
        return _matmul(self, other)

    def __rmatmul__(self, other):
        return _matmul(other, self)

    def __getitem__(self, index):
        shape = self.data.shape

        def vjp(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._node(self.data[index], (self,), vjp)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def data_of(x) -> np.ndarray:
    """The raw array behind ``x`` (Tensor or array-like)."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _any_tensor(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a, b, value, grad_a, grad_b):
    """Build a broadcasting binary node; ``grad_*`` map the upstream grad to a full-shape grad."""
    pa = a if isinstance(a, Tensor) else None
    pb = b if isinstance(b, Tensor) else None
    sa, sb = np.shape(data_of(a)), np.shape(data_of(b))
    parents = [p for p in (pa, pb) if p is not None]

    def vjp(g):
        out = []
        if pa is not None:
            out.append(_unbroadcast(grad_a(g), sa))
        if pb is not None:
            out.append(_unbroadcast(grad_b(g), sb))
        return out

    return Tensor._node(value, parents, vjp)


def add(a, b):
    if not _any_tensor(a, b):
        return np.add(a, b)
    return _binary(a, b, data_of(a) + data_of(b), lambda g: g, lambda g: g)


def _sub(a, b):
    if not _any_tensor(a, b):
        return np.subtract(a, b)
    return _binary(a, b, data_of(a) - data_of(b), lambda g: g, lambda g: -g)


def _mul(a, b):
    if not _any_tensor(a, b):
        return np.multiply(a, b)
    x, y = data_of(a), data_of(b)
    return _binary(a, b, x * y, lambda g: g * y, lambda g: g * x)


def _div(a, b):
    if not _any_tensor(a, b):
        return np.divide(a, b)
    x, y = data_of(a), data_of(b)
    return _binary(a, b, x / y, lambda g: g / y, lambda g: -g * x / (y * y))


def _matmul(a, b):
    if not _any_tensor(a, b):
        return np.matmul(a, b)
    x, y = data_of(a), data_of(b)
    if x.ndim < 2 or y.ndim < 2:
        raise ValueError("matmul on tensors needs ndim >= 2; use einsum")
    return _binary(
        a,
        b,
        x @ y,
        lambda g: g @ np.swapaxes(y, -1, -2),
        lambda g: np.swapaxes(x, -1, -2) @ g,
    )


def einsum(subscripts: str, a, b):
    """Two-operand einsum. Every input index must survive in the output or the other operand."""
    if not _any_tensor(a, b):
        return np.einsum(subscripts, a, b)
    inputs, out_sub = subscripts.replace(" ", "").split("->")
    sa, sb = inputs.split(",")
    for own, other in ((sa, sb), (sb, sa)):
        if len(set(own)) != len(own) or not set(own) <= set(out_sub) | set(other):
            raise ValueError(f"einsum pattern {subscripts!r} is not supported for tensors")
    x, y = data_of(a), data_of(b)
    parents, rules = [], []
    if isinstance(a, Tensor):
        parents.append(a)
        rules.append(lambda g: np.einsum(f"{out_sub},{sb}->{sa}", g, y))
    if isinstance(b, Tensor):
        parents.append(b)
        rules.append(lambda g: np.einsum(f"{out_sub},{sa}->{sb}", g, x))
    return Tensor._node(np.einsum(subscripts, x, y), parents, lambda g: [r(g) for r in rules])


def _unary(x, value, local_grad):
    return Tensor._node(value, (x,), lambda g: (g * local_grad(),))


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    if not isinstance(x, Tensor):
        return np.sum(x, axis=axis, keepdims=keepdims)
    shape = x.data.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._node(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    shape = np.shape(data_of(x))
    if axis is None:
        count = int(np.prod(shape))
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([shape[i] for i in axes]))
    return sum(x, axis=axis, keepdims=keepdims) / count


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    out = np.exp(x.data)
    return _unary(x, out, lambda: out)


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)
    return _unary(x, np.log(x.data), lambda: 1.0 / x.data)


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(x)
    out = np.tanh(x.data)
    return _unary(x, out, lambda: 1.0 - out * out)


def cosh(x):
    if not isinstance(x, Tensor):
        return np.cosh(x)
    return _unary(x, np.cosh(x.data), lambda: np.sinh(x.data))


def sinh(x):
    if not isinstance(x, Tensor):
        return np.sinh(x)
    return _unary(x, np.sinh(x.data), lambda: np.cosh(x.data))


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(x)
    out = np.sqrt(x.data)
    return _unary(x, out, lambda: 0.5 / out)


def _sinhc_value(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < _SINHC_SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(safe) / safe)


def _sinhc_grad(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < _SINHC_SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    exact = (safe * np.cosh(safe) - np.sinh(safe)) / (safe * safe)
    return np.where(small, x / 3.0, exact)


def sinhc(x):
    """sinh(x)/x, equal to 1 at 0 and smooth through it."""
    x_data = data_of(x)
    value = _sinhc_value(x_data)
    if not isinstance(x, Tensor):
        return value
    return _unary(x, value, lambda: _sinhc_grad(x_data))


def acosh_clamped(x):
    """arccosh(max(1, x)) via log(y + sqrt((y-1)(y+1))); gradient 0 where clamped or at 1."""
    x_data = data_of(x)
    y = np.maximum(x_data, 1.0)
    root = np.sqrt((y - 1.0) * (y + 1.0))
    value = np.log(y + root)
    if not isinstance(x, Tensor):
        return value

    def local():
        inside = root > 0
        return np.where(inside, 1.0 / np.where(inside, root, 1.0), 0.0)

    return _unary(x, value, local)


def asinh(x):
    if not isinstance(x, Tensor):
        return np.arcsinh(x)
    return _unary(x, np.arcsinh(x.data), lambda: 1.0 / np.sqrt(1.0 + x.data * x.data))


def sqrt_clamped(x):
    """sqrt(max(x, 0)); the gradient is taken as 0 wherever x <= 0."""
    x_data = data_of(x)
    value = np.sqrt(np.maximum(x_data, 0.0))
    if not isinstance(x, Tensor):
        return value

    def local():
        inside = value > 0
        return np.where(inside, 0.5 / np.where(inside, value, 1.0), 0.0)

    return _unary(x, value, local)


def norm(x, axis=-1, keepdims=False):
    """Euclidean norm along ``axis``; the gradient at the zero vector is taken as 0."""
    x_data = data_of(x)
    value = np.sqrt(np.sum(x_data * x_data, axis=axis, keepdims=keepdims))
    if not isinstance(x, Tensor):
        return value

    def vjp(g):
        n = value if keepdims else np.expand_dims(value, axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n > 0, gg * x_data / safe, 0.0),)

    return Tensor._node(value, (x,), vjp)


def relu(x):
    """max(0, x), the hinge used by every margin loss here."""
    x_data = data_of(x)
    if not isinstance(x, Tensor):
        return np.maximum(x_data, 0.0)
    return _unary(x, np.maximum(x_data, 0.0), lambda: (x_data > 0).astype(np.float64))


def clip(x, lo: float, hi: float):
    x_data = data_of(x)
    if not isinstance(x, Tensor):
        return np.clip(x_data, lo, hi)
    mask = ((x_data > lo) & (x_data < hi)).astype(np.float64)
    return _unary(x, np.clip(x_data, lo, hi), lambda: mask)


def logsumexp(x, axis=-1, keepdims=False):
    x_data = data_of(x)
    peak = np.max(x_data, axis=axis, keepdims=True)
    shifted = np.exp(x_data - peak)
    total = np.sum(shifted, axis=axis, keepdims=True)
    value = peak + np.log(total)
    out = value if keepdims else np.squeeze(value, axis=axis)
    if not isinstance(x, Tensor):
        return out
    weights = shifted / total

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (gg * weights,)

    return Tensor._node(out, (x,), vjp)


def concat(xs: Iterable, axis: int = 0):
    xs = list(xs)
    datas = [data_of(x) for x in xs]
    value = np.concatenate(datas, axis=axis)
    if not _any_tensor(*xs):
        return value
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]
    tensors = [(i, x) for i, x in enumerate(xs) if isinstance(x, Tensor)]

    def vjp(g):
        pieces = np.split(g, bounds, axis=axis)
        return [pieces[i] for i, _ in tensors]

    return Tensor._node(value, [x for _, x in tensors], vjp)


def stack(xs: Iterable, axis: int = 0):
    xs = list(xs)
    return concat([reshape(x, _expanded_shape(np.shape(data_of(x)), axis)) for x in xs], axis=axis)


def _expanded_shape(shape, axis):
    shape = list(shape)
    if axis < 0:
        axis += len(shape) + 1
    shape.insert(axis, 1)
    return tuple(shape)


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(x, shape)
    original = x.data.shape
    return Tensor._node(np.reshape(x.data, shape), (x,), lambda g: (np.reshape(g, original),))
