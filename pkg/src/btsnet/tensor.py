"""Dense float64 tensors with reverse-mode differentiation.

Each op builds its output with :func:`make_result`, passing a closure that
maps the upstream gradient to one gradient per parent. ``Tensor.backward``
walks the recorded graph in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.size == 0:
            raise ValueError("tensors must have positive extents")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(self, _as_tensor(other))

    def __neg__(self):
        return scale(self, -1.0)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=DTYPE)
        if grad.shape != self.shape:
            raise ValueError(f"seed gradient shape {grad.shape} != {self.shape}")

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap ``data`` as an op output; ``backward(g)`` returns one grad (or None) per parent."""
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data, dtype=DTYPE)
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


# -- indexing helpers --------------------------------------------------------

def flat_index(index: Sequence[int], shape: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index (Horner evaluation over the extents)."""
    if len(index) != len(shape):
        raise ValueError("index rank does not match shape rank")
    flat = 0
    for i, n in zip(index, shape):
        if not 0 <= i < n:
            raise IndexError(f"index {tuple(index)} out of range for shape {tuple(shape)}")
        flat = flat * n + i
    return flat


def unflatten_index(flat: int, shape: Sequence[int]) -> tuple[int, ...]:
    total = int(np.prod(shape))
    if not 0 <= flat < total:
        raise IndexError(f"flat index {flat} out of range for shape {tuple(shape)}")
    out = []
    for n in reversed(shape):
        out.append(flat % n)
        flat //= n
    return tuple(reversed(out))


# -- elementwise ops -----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def add_n(terms: Sequence[Tensor]) -> Tensor:
    """Sum of equally shaped tensors, accumulated left to right."""
    if not terms:
        raise ValueError("add_n needs at least one tensor")
    shape = terms[0].shape
    for t in terms[1:]:
        if t.shape != shape:
            raise ValueError(f"add_n: shape mismatch {shape} vs {t.shape}")
    total = terms[0].data.copy()
    for t in terms[1:]:
        total += t.data
    return make_result(total, tuple(terms), lambda g: (g,) * len(terms))


def _broadcast_shape(shape: tuple[int, ...], target: tuple[int, ...]) -> tuple[int, ...]:
    # leading axes may be omitted; remaining axes must match or be 1
    if len(shape) > len(target):
        raise ValueError(f"cannot broadcast {shape} onto {target}")
    padded = (1,) * (len(target) - len(shape)) + tuple(shape)
    for s, t in zip(padded, target):
        if s != t and s != 1:
            raise ValueError(f"cannot broadcast {shape} onto {target}")
    return padded


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes along which ``shape`` was broadcast."""
    padded = (1,) * (g.ndim - len(shape)) + tuple(shape)
    axes = tuple(i for i, (s, n) in enumerate(zip(padded, g.shape)) if s == 1 and n != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """``a * b`` with ``b`` broadcast onto the shape of ``a``."""
    if a.shape != b.shape:
        _broadcast_shape(b.shape, a.shape)
    bshape = b.shape

    def backward(g):
        ga = g * b.data if a.requires_grad else None
        gb = unbroadcast(g * a.data, bshape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    return make_result(x.data * c, (x,), lambda g: (g * c,))


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def total(x: Tensor) -> Tensor:
    """Sum of every element, as a one-element tensor."""
    return make_result(np.array([x.data.sum()]), (x,), lambda g: (np.full(x.shape, g[0]),))


def mean(x: Tensor) -> Tensor:
    n = x.size
    return make_result(np.array([x.data.mean()]), (x,), lambda g: (np.full(x.shape, g[0] / n),))


def dot(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(x * weights) against a constant array; handy as a test loss."""
    w = np.asarray(weights, dtype=DTYPE)
    if w.shape != x.shape:
        raise ValueError(f"dot: weight shape {w.shape} != {x.shape}")
    return make_result(np.array([np.sum(x.data * w)]), (x,), lambda g: (w * g[0],))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def select(x: Tensor, index: int, axis: int = 1) -> Tensor:
    """Slice ``index`` out of ``axis``, dropping that axis."""
    def backward(g):
        full = np.zeros(x.shape)
        np.moveaxis(full, axis, 0)[index] = g
        return (full,)

    return make_result(np.take(x.data, index, axis=axis), (x,), backward)


def subsample(x: Tensor, steps: Sequence[int], first_axis: int = 2) -> Tensor:
    """Keep every ``steps[i]``-th entry along consecutive axes from ``first_axis``."""
    sl = [slice(None)] * x.ndim
    for i, s in enumerate(steps):
        if s < 1:
            raise ValueError("subsample steps must be >= 1")
        sl[first_axis + i] = slice(None, None, s)
    sl = tuple(sl)

    def backward(g):
        full = np.zeros(x.shape)
        full[sl] = g
        return (full,)

    return make_result(x.data[sl], (x,), backward)


# -- verification --------------------------------------------------------------

def check_gradient(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    indices: Sequence[int] | None = None,
) -> float:
    """Largest relative error between the analytic gradient of ``f`` at ``x``
    and the central finite difference with step ``eps``.

    Per element the error is ``|a - n| / max(|a|, |n|, floor)`` where
    ``floor = 1e-3 * max(max|a|, max|n|)`` (and at least 1e-12), so entries
    far below the gradient's overall scale are judged against that scale
    rather than their own roundoff-dominated magnitude. ``indices`` restricts
    the finite-difference probes to a subset of flat positions.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    base = x.data.copy()

    probe = Tensor(base, requires_grad=True)
    y = f(probe)
    if y.size != 1:
        raise ValueError("f must return a single-element tensor")
    if not np.all(np.isfinite(y.data)):
        raise FloatingPointError("f(x) is not finite")
    y.backward()
    analytic = np.zeros_like(base) if probe.grad is None else probe.grad.reshape(-1)

    flat = base.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    numeric = np.zeros(len(positions))
    chosen = np.empty(len(positions))
    for j, i in enumerate(positions):
        bumped = flat.copy()
        bumped[i] += eps
        hi = f(Tensor(bumped.reshape(base.shape))).item()
        bumped[i] -= 2.0 * eps
        lo = f(Tensor(bumped.reshape(base.shape))).item()
        numeric[j] = (hi - lo) / (2.0 * eps)
        chosen[j] = analytic[i]

    scale_ = max(np.abs(chosen).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    floor = max(1e-3 * scale_, 1e-12)
    denom = np.maximum(np.maximum(np.abs(chosen), np.abs(numeric)), floor)
    return float(np.max(np.abs(chosen - numeric) / denom, initial=0.0))
