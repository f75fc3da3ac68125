"""Reverse-mode automatic differentiation over dense float64 arrays.

The operation set is deliberately small: exactly what a causal-masked
encoder forward pass and its training loop need (matmul, masked softmax,
layer norm, relu, concat/slice/tile plumbing, mean/mse reductions).
Gradient graphs are implicit: every tensor produced by an operation
remembers its parent tensors and a backward closure, and
``Tensor.backward`` replays the closures in reverse topological order.

A graph is single-use: ``backward`` consumes it, and a second backward
through any part of an already-consumed graph raises ``GraphError``.
Graph construction and backward are single-threaded per graph; tensors
that do not require gradients are treated as immutable constants and may
be shared freely.

All values are float64. Any operation whose output contains NaN or Inf
raises ``NumericError`` immediately instead of propagating silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GradCheckReport",
    "GraphError",
    "LAYER_NORM_EPS",
    "MASK_SENTINEL",
    "NumericError",
    "ShapeError",
    "Tensor",
    "concat",
    "grad_check",
    "layer_norm",
    "masked_softmax",
    "mse",
    "tensor",
    "tile",
]

# Additive attention-mask value standing in for -inf. Large enough that
# exp() underflows to exactly 0.0 after row-max subtraction, small enough
# never to overflow when added to finite scores.
MASK_SENTINEL = -1.0e9

# Added to the per-row variance inside layer norm before the square root.
LAYER_NORM_EPS = 1.0e-5


class ShapeError(ValueError):
    """Operands with incompatible shapes or invalid axes."""


class GraphError(RuntimeError):
    """Gradient-graph misuse: non-scalar loss or backward through a consumed graph."""


class NumericError(ArithmeticError):
    """Non-finite values appeared where finite ones are required."""


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced non-finite values")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _consumed_marker() -> None:  # pragma: no cover - never called directly
    raise GraphError("gradient graph already consumed by a previous backward")


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    ``requires_grad`` marks trainable leaves; derived tensors require a
    gradient whenever any parent does. ``grad`` is allocated lazily on
    first accumulation and always matches ``data`` in shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "tensor")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- graph ---------------------------------------------------------

    def backward(self) -> None:
        """Propagate d(self)/d(leaf) into every reachable ``requires_grad`` leaf.

        ``self`` must hold a single element. The traversed graph is
        consumed: a later backward through any of its interior nodes
        raises ``GraphError``.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            fn = node._backward
            if fn is None:
                continue
            if fn is _consumed_marker:
                raise GraphError("gradient graph already consumed by a previous backward")
            fn()
            node._backward = _consumed_marker

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _as_tensor(other)
        try:
            out_data = self.data + other.data
        except ValueError:
            raise ShapeError(
                f"add: shapes {self.data.shape} and {other.data.shape} do not broadcast"
            ) from None
        out = _from_op(out_data, (self, other), "add")
        if out.requires_grad:
            a, b = self, other

            def backward() -> None:
                g = out.grad
                if a.requires_grad:
                    a._accum(_unbroadcast(g, a.data.shape))
                if b.requires_grad:
                    b._accum(_unbroadcast(g, b.data.shape))

            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other) -> "Tensor":
        return self + (-_as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return _as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _as_tensor(other)
        try:
            out_data = self.data * other.data
        except ValueError:
            raise ShapeError(
                f"mul: shapes {self.data.shape} and {other.data.shape} do not broadcast"
            ) from None
        out = _from_op(out_data, (self, other), "mul")
        if out.requires_grad:
            a, b = self, other

            def backward() -> None:
                g = out.grad
                if a.requires_grad:
                    a._accum(_unbroadcast(g * b.data, a.data.shape))
                if b.requires_grad:
                    b._accum(_unbroadcast(g * a.data, b.data.shape))

            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if not isinstance(other, (int, float)):
            raise ShapeError("division is only supported by a python scalar")
        return self * (1.0 / float(other))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # -- shape plumbing ------------------------------------------------

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        shape = tuple(shape)
        try:
            out_data = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(
                f"reshape: cannot view shape {self.data.shape} as {shape}"
            ) from None
        out = _from_op(out_data, (self,), "reshape")
        if out.requires_grad:
            a = self

            def backward() -> None:
                a._accum(out.grad.reshape(a.data.shape))

            out._backward = backward
        return out

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        if sorted(axes) != list(range(self.data.ndim)):
            raise ShapeError(f"transpose: {axes} is not a permutation of {self.data.ndim} axes")
        out = _from_op(np.transpose(self.data, axes), (self,), "transpose")
        if out.requires_grad:
            a = self
            inverse = tuple(np.argsort(axes))

            def backward() -> None:
                a._accum(np.transpose(out.grad, inverse))

            out._backward = backward
        return out

    def __getitem__(self, key) -> "Tensor":
        key = _normalize_slices(key, self.data.ndim)
        out = _from_op(self.data[key], (self,), "slice")
        if out.requires_grad:
            a = self

            def backward() -> None:
                buf = np.zeros_like(a.data)
                buf[key] = out.grad
                a._accum(buf)

            out._backward = backward
        return out

    # -- elementwise / reductions -------------------------------------

    def relu(self) -> "Tensor":
        out = _from_op(np.maximum(self.data, 0.0), (self,), "relu")
        if out.requires_grad:
            a = self
            active = self.data > 0.0

            def backward() -> None:
                a._accum(out.grad * active)

            out._backward = backward
        return out

    def abs(self) -> "Tensor":
        out = _from_op(np.abs(self.data), (self,), "abs")
        if out.requires_grad:
            a = self
            sign = np.sign(self.data)  # subgradient 0 at exactly 0

            def backward() -> None:
                a._accum(out.grad * sign)

            out._backward = backward
        return out

    def sum(self) -> "Tensor":
        out = _from_op(np.asarray(self.data.sum()), (self,), "sum")
        if out.requires_grad:
            a = self

            def backward() -> None:
                a._accum(np.broadcast_to(out.grad, a.data.shape))

            out._backward = backward
        return out

    def mean(self) -> "Tensor":
        out = _from_op(np.asarray(self.data.mean()), (self,), "mean")
        if out.requires_grad:
            a = self
            scale = 1.0 / self.data.size

            def backward() -> None:
                a._accum(np.broadcast_to(out.grad * scale, a.data.shape))

            out._backward = backward
        return out


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Convenience constructor mirroring the class call."""
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data if data.dtype == np.float64 else data.astype(np.float64)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = tuple(p for p in parents if p.requires_grad) if out.requires_grad else ()
    out._backward = None
    return out


def _normalize_slices(key, ndim: int):
    if not isinstance(key, tuple):
        key = (key,)
    if len(key) > ndim:
        raise ShapeError(f"slice: {len(key)} indices for {ndim} axes")
    for k in key:
        if not isinstance(k, slice):
            raise ShapeError("slice: only python slices are supported (no integer indexing)")
        if k.step not in (None, 1):
            raise ShapeError("slice: step must be 1")
    return key


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of the last two axes; leading axes broadcast.

    Both operands must have ndim >= 2 and matching inner dimensions.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(
            f"matmul: operands must have ndim >= 2, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions differ, got {a.data.shape} and {b.data.shape}"
        )
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(
            f"matmul: batch dimensions of {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None
    out = _from_op(out_data, (a, b), "matmul")
    if out.requires_grad:

        def backward() -> None:
            g = out.grad
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accum(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accum(_unbroadcast(gb, b.data.shape))

        out._backward = backward
    return out


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate tensors along `axis`; all other dimensions must match."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: need at least one tensor")
    ndim = parts[0].data.ndim
    if not -ndim <= axis < ndim:
        raise ShapeError(f"concat: axis {axis} out of range for ndim {ndim}")
    axis = axis % ndim
    ref = list(parts[0].data.shape)
    for p in parts[1:]:
        other = list(p.data.shape)
        if len(other) != ndim or any(
            i != axis and other[i] != ref[i] for i in range(ndim)
        ):
            raise ShapeError(
                f"concat: shape {p.data.shape} incompatible with {parts[0].data.shape} on axis {axis}"
            )
    out = _from_op(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), "concat")
    if out.requires_grad:
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)
        kept = list(parts)

        def backward() -> None:
            g = out.grad
            index: list = [slice(None)] * ndim
            for p, lo, hi in zip(kept, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    index[axis] = slice(int(lo), int(hi))
                    p._accum(g[tuple(index)])

        out._backward = backward
    return out


def tile(x: Tensor, count: int) -> Tensor:
    """Repeat `x` `count` times along a new second-to-last axis.

    A vector of shape (..., d) becomes (..., count, d); the backward pass
    sums over the inserted axis.
    """
    x = _as_tensor(x)
    if count < 1:
        raise ShapeError(f"tile: count must be >= 1, got {count}")
    out_data = np.repeat(np.expand_dims(x.data, -2), count, axis=-2)
    out = _from_op(out_data, (x,), "tile")
    if out.requires_grad:

        def backward() -> None:
            x._accum(out.grad.sum(axis=-2))

        out._backward = backward
    return out


def masked_softmax(scores: Tensor, mask) -> Tensor:
    """Row-wise softmax of (scores + mask) over the last axis.

    `mask` is a constant square (L, L) array whose entries are 0 for
    visible positions and ``MASK_SENTINEL`` for blocked ones; it
    broadcasts over any leading axes of `scores`. Blocked positions come
    out as exactly 0 because their shifted exponent underflows.
    """
    scores = _as_tensor(scores)
    mask_arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
    if mask_arr.ndim != 2 or mask_arr.shape[0] != mask_arr.shape[1]:
        raise ShapeError(f"masked_softmax: mask must be square 2-D, got {mask_arr.shape}")
    if scores.data.ndim < 2 or scores.data.shape[-2:] != mask_arr.shape:
        raise ShapeError(
            f"masked_softmax: scores {scores.data.shape} do not end in mask shape {mask_arr.shape}"
        )
    shifted = scores.data + mask_arr
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=-1, keepdims=True)
    out = _from_op(weights, (scores,), "masked_softmax")
    if out.requires_grad:

        def backward() -> None:
            g = out.grad
            inner = (g * weights).sum(axis=-1, keepdims=True)
            scores._accum(weights * (g - inner))

        out._backward = backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine.

    Variance is the population variance with ``LAYER_NORM_EPS`` added
    before the square root; `gain` and `bias` are vectors of the last-axis
    width.
    """
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1] if x.data.ndim else 0
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({d},), got {gain.data.shape} and {bias.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x.data - mu) * inv_std
    out = _from_op(xhat * gain.data + bias.data, (x, gain, bias), "layer_norm")
    if out.requires_grad:

        def backward() -> None:
            g = out.grad
            if gain.requires_grad:
                gain._accum((g * xhat).sum(axis=tuple(range(g.ndim - 1))))
            if bias.requires_grad:
                bias._accum(g.sum(axis=tuple(range(g.ndim - 1))))
            if x.requires_grad:
                ghat = g * gain.data
                term_mean = ghat.mean(axis=-1, keepdims=True)
                term_proj = (ghat * xhat).mean(axis=-1, keepdims=True)
                x._accum(inv_std * (ghat - term_mean - xhat * term_proj))

        out._backward = backward
    return out


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements; shapes must match exactly."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(
            f"mse: shapes differ, got {pred.data.shape} and {target.data.shape}"
        )
    diff = pred.data - target.data
    out = _from_op(np.asarray(np.mean(diff * diff)), (pred, target), "mse")
    if out.requires_grad:
        scale = 2.0 / diff.size

        def backward() -> None:
            g = out.grad * scale * diff
            if pred.requires_grad:
                pred._accum(g)
            if target.requires_grad:
                target._accum(-g)

        out._backward = backward
    return out


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference gradient comparison.

    ``max_rel_error`` uses the mixed convention |a - n| / max(1, |a|, |n|):
    relative for gradients above 1 in magnitude, absolute below.
    """

    passed: bool
    max_rel_error: float
    max_abs_error: float
    checked: int
    worst_index: int
    h: float
    tol: float


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1.0e-5,
    tol: float = 1.0e-4,
    coords: Sequence[int] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued `f` against central differences.

    `f` is called with a fresh requires-grad copy of `x` for the analytic
    pass and with perturbed constant copies for the numeric probes.
    `coords` restricts probing to the given flat indices (all coordinates
    by default). Raises ``NumericError`` if `f` is non-finite anywhere in
    the probe neighborhood.
    """
    base = np.array(x.data, dtype=np.float64)
    leaf = Tensor(base.copy(), requires_grad=True)
    loss = f(leaf)
    if loss.data.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got shape {loss.data.shape}")
    loss.backward()
    analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad

    flat_indices = np.arange(base.size) if coords is None else np.asarray(coords, dtype=int)
    max_rel = 0.0
    max_abs = 0.0
    worst = int(flat_indices[0]) if len(flat_indices) else 0
    flat_analytic = analytic.reshape(-1)
    for idx in flat_indices:
        probe = base.reshape(-1).copy()
        probe[idx] += h
        hi = f(Tensor(probe.reshape(base.shape))).item()
        probe[idx] -= 2.0 * h
        lo = f(Tensor(probe.reshape(base.shape))).item()
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"grad_check: f non-finite near coordinate {idx}")
        numeric = (hi - lo) / (2.0 * h)
        a = flat_analytic[idx]
        abs_err = abs(a - numeric)
        rel_err = abs_err / max(1.0, abs(a), abs(numeric))
        if rel_err > max_rel:
            max_rel = rel_err
            worst = int(idx)
        max_abs = max(max_abs, abs_err)
    return GradCheckReport(
        passed=max_rel < tol,
        max_rel_error=max_rel,
        max_abs_error=max_abs,
        checked=len(flat_indices),
        worst_index=worst,
        h=h,
        tol=tol,
    )
