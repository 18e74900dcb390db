"""Reverse-mode differentiation over numpy arrays, plus a finite-difference verifier.

Every operation on a :class:`Var` records its parents and a local backward
rule; :meth:`Var.backward` sweeps the recorded graph in reverse topological
order. Nodes hold whole arrays, so one node covers an entire evaluation grid.

Plain floats and ndarrays flow through the same code paths untouched, which
lets loss functions be written once and evaluated either with or without
gradient tracking.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import NumericalFailure


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that were broadcast in the forward pass
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """Array-valued node in a reverse-mode graph."""

    # make numpy defer to the reflected operators
    __array_ufunc__ = None
    __slots__ = ("value", "grad", "_parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        # sequence of (parent Var, fn mapping upstream grad -> parent contribution)
        self._parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __len__(self):
        return len(self.value)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return mul(other, reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return power(self, k)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None):
        return vsum(self, axis)

    # backward -------------------------------------------------------------
    def backward(self, seed=None):
        """Accumulate d(self)/d(node) into ``node.grad`` for every ancestor."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, rule in node._parents:
                contrib = rule(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib


def value_of(x):
    return x.value if isinstance(x, Var) else x


def add(a, b):
    va, vb = value_of(a), value_of(b)
    out = va + vb
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    parents = []
    if isinstance(a, Var):
        sa = np.shape(va)
        parents.append((a, lambda g: _unbroadcast(g, sa)))
    if isinstance(b, Var):
        sb = np.shape(vb)
        parents.append((b, lambda g: _unbroadcast(g, sb)))
    return Var(out, parents)


def neg(a):
    if not isinstance(a, Var):
        return -a
    return Var(-a.value, [(a, lambda g: -g)])


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va * vb
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    parents = []
    if isinstance(a, Var):
        sa = np.shape(va)
        parents.append((a, lambda g: _unbroadcast(g * vb, sa)))
    if isinstance(b, Var):
        sb = np.shape(vb)
        parents.append((b, lambda g: _unbroadcast(g * va, sb)))
    return Var(out, parents)


def reciprocal(a):
    if not isinstance(a, Var):
        return 1.0 / a
    out = 1.0 / a.value
    return Var(out, [(a, lambda g: -g * out * out)])


def power(a, k):
    if not isinstance(a, Var):
        return a**k
    if k == 2:
        return Var(a.value * a.value, [(a, lambda g: 2.0 * g * a.value)])
    return Var(a.value**k, [(a, lambda g: k * g * a.value ** (k - 1))])


def matmul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va @ vb
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g @ np.swapaxes(vb, -1, -2) if np.ndim(vb) > 1 else np.outer(g, vb)))
    if isinstance(b, Var):
        parents.append((b, lambda g: np.swapaxes(va, -1, -2) @ g if np.ndim(va) > 1 else np.outer(va, g)))
    return Var(out, parents)


def vsum(a, axis=None):
    if not isinstance(a, Var):
        return np.sum(a, axis=axis)
    shape = a.value.shape

    def rule(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return Var(np.sum(a.value, axis=axis), [(a, rule)])


def getitem(a, idx):
    if not isinstance(a, Var):
        return a[idx]
    shape = a.value.shape

    basic = isinstance(idx, (slice, int)) or (
        isinstance(idx, tuple) and all(isinstance(i, (slice, int, type(None))) for i in idx)
    )

    def rule(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return full

    return Var(a.value[idx], [(a, rule)])


def reshape(a, shape):
    if not isinstance(a, Var):
        return np.reshape(a, shape)
    old = a.value.shape
    return Var(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def transpose(a):
    if not isinstance(a, Var):
        return np.transpose(a)
    return Var(a.value.T, [(a, lambda g: g.T)])


def exp(a):
    if not isinstance(a, Var):
        return np.exp(a)
    out = np.exp(a.value)
    return Var(out, [(a, lambda g: g * out)])


def sin(a):
    if not isinstance(a, Var):
        return np.sin(a)
    return Var(np.sin(a.value), [(a, lambda g: g * np.cos(a.value))])


def cos(a):
    if not isinstance(a, Var):
        return np.cos(a)
    return Var(np.cos(a.value), [(a, lambda g: -g * np.sin(a.value))])


def _sigmoid(z):
    # tanh form is overflow-free
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def sigmoid(a):
    if not isinstance(a, Var):
        return _sigmoid(np.asarray(a, dtype=float))
    s = _sigmoid(a.value)
    return Var(s, [(a, lambda g: g * s * (1.0 - s))])


# ---------------------------------------------------------------------------
# parameter packing


@dataclass(frozen=True)
class Block:
    name: str
    shape: tuple
    offset: int

    @functools.cached_property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class Layout:
    """Maps named, shaped parameter blocks onto slices of one flat vector."""

    blocks: tuple

    @classmethod
    def from_shapes(cls, shapes: Sequence[tuple[str, tuple]]) -> "Layout":
        blocks, offset = [], 0
        for name, shape in shapes:
            shape = tuple(int(s) for s in shape)
            blocks.append(Block(name, shape, offset))
            offset += blocks[-1].size
        return cls(tuple(blocks))

    @functools.cached_property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.blocks]

    def __getitem__(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def block_of(self, index: int) -> str:
        for b in self.blocks:
            if b.offset <= index < b.offset + b.size:
                return b.name
        raise IndexError(index)

    def unpack(self, flat) -> dict:
        """Split a flat vector (ndarray or :class:`Var`) into named blocks."""
        if not isinstance(flat, Var):
            flat = np.asarray(flat)
            return {b.name: flat[b.offset : b.offset + b.size].reshape(b.shape) for b in self.blocks}
        return {b.name: reshape(flat[b.offset : b.offset + b.size], b.shape) for b in self.blocks}

    def pack(self, blocks: Mapping[str, np.ndarray]) -> np.ndarray:
        flat = np.empty(self.size)
        for b in self.blocks:
            arr = np.asarray(blocks[b.name], dtype=float)
            if arr.shape != b.shape:
                raise ValueError(f"block {b.name!r}: expected shape {b.shape}, got {arr.shape}")
            flat[b.offset : b.offset + b.size] = arr.ravel()
        return flat

    def to_dict(self) -> list[dict]:
        return [{"name": b.name, "shape": list(b.shape)} for b in self.blocks]

    @classmethod
    def from_dict(cls, items) -> "Layout":
        return cls.from_shapes([(d["name"], tuple(d["shape"])) for d in items])


@dataclass
class ParamVector:
    """Flat trainable parameter vector together with its block layout."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.layout.size:
            raise ValueError(f"layout covers {self.layout.size} parameters, got {self.values.size}")

    def __len__(self):
        return self.values.size

    def blocks(self) -> dict:
        return self.layout.unpack(self.values)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.array(values, dtype=float), self.layout)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


@dataclass
class GradResult:
    loss: float
    grad: np.ndarray


LossFn = Callable[[dict], object]


def _eval_plain(loss_fn: LossFn, layout: Layout, values: np.ndarray) -> float:
    return float(value_of(loss_fn(layout.unpack(values))))


def grad_of(loss_fn: LossFn, at: ParamVector) -> GradResult:
    """Loss and exact gradient of ``loss_fn`` at ``at``.

    ``loss_fn`` receives the parameter blocks as a dict of name -> array-like
    and must return a scalar.
    """
    leaf = Var(at.values.copy())
    out = loss_fn(at.layout.unpack(leaf))
    if not isinstance(out, Var):
        # loss does not depend on the parameters
        loss = float(out)
        grad = np.zeros(at.values.size)
    else:
        loss = float(out.value)
        with np.errstate(all="ignore"):
            out.backward()
        grad = np.zeros(at.values.size) if leaf.grad is None else leaf.grad
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericalFailure(f"non-finite loss/gradient ({loss!r})", where=_offending_block(at, grad))
    return GradResult(loss, grad)


def _offending_block(at: ParamVector, grad: np.ndarray) -> str | None:
    for b in at.layout.blocks:
        sl = slice(b.offset, b.offset + b.size)
        if not np.all(np.isfinite(at.values[sl])):
            return b.name
    for b in at.layout.blocks:
        sl = slice(b.offset, b.offset + b.size)
        if grad is not None and grad.size == at.values.size and not np.all(np.isfinite(grad[sl])):
            return b.name
    return at.layout.blocks[0].name if at.layout.blocks else None


@dataclass
class GradCheckReport:
    passed: bool
    worst_rel_error: float
    worst_index: int
    worst_block: str
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)


def rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def numeric_grad(loss_fn: LossFn, at: ParamVector, step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``step * max(1, |phi_i|)``."""
    x = at.values
    out = np.empty(x.size)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (_eval_plain(loss_fn, at.layout, xp) - _eval_plain(loss_fn, at.layout, xm)) / (2.0 * h)
    return out


def check_grad(
    loss_fn: LossFn,
    at: ParamVector,
    step: float = 1e-6,
    tol: float = 1e-6,
    gradient: Callable[[LossFn, ParamVector], GradResult] = grad_of,
) -> GradCheckReport:
    """Compare ``gradient`` against central differences component by component.

    ``gradient`` defaults to :func:`grad_of`; passing another callable lets a
    deliberately corrupted gradient be exercised.
    """
    if step <= 0 or tol <= 0:
        raise ValueError("step and tol must be positive")
    analytic = np.asarray(gradient(loss_fn, at).grad, dtype=float)
    numeric = numeric_grad(loss_fn, at, step)
    err = rel_error(analytic, numeric)
    worst = int(np.argmax(err)) if err.size else 0
    worst_err = float(err[worst]) if err.size else 0.0
    return GradCheckReport(
        passed=bool(worst_err <= tol),
        worst_rel_error=worst_err,
        worst_index=worst,
        worst_block=at.layout.block_of(worst) if err.size else "",
        analytic=analytic,
        numeric=numeric,
    )
