"""
asm2tv.tensor – dense float64 tensors with reverse-mode automatic differentiation.

Typical usage
-------------
    w    = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
    loss = mean(relu(matmul(x, w)))
    backward(loss)          # w.grad now holds d(loss)/d(w)

Every op checks shapes (no broadcasting beyond bias-add and 0-d scalars) and
rejects non-finite results.  Leaf grads accumulate across backward() calls
until zero_grad().
"""

from __future__ import annotations
import contextlib, contextvars
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class NonDeterministicError(RuntimeError):
    """A function expected to be deterministic returned differing values."""


# gradient recording switch, per thread / task context
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording a graph (outputs never require grad)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


# -------------------------------------------------- #
@dataclass(eq=False)
class ComputeNode:
    """One recorded op: its inputs and the rule mapping output grad → input grads."""
    op:       str
    inputs:   tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Row-major float64 array taking part in a reverse-mode graph."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, *, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data          = arr
        self.requires_grad = bool(requires_grad)
        self.grad          = np.zeros_like(arr) if requires_grad else None
        self.node: ComputeNode | None = None
        self.name          = name

    # -------------------------------------------------- #
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        if self.requires_grad and self.is_leaf:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"<Tensor{tag} shape={self.shape} grad={self.requires_grad}>"

    # operator sugar
    def __add__(self, other):     return add(self, _lift(other, self))
    def __radd__(self, other):    return add(_lift(other, self), self)
    def __sub__(self, other):     return sub(self, _lift(other, self))
    def __rsub__(self, other):    return sub(_lift(other, self), self)
    def __mul__(self, other):
        return scale(self, float(other)) if _is_number(other) else mul(self, other)
    def __rmul__(self, other):
        return scale(self, float(other)) if _is_number(other) else mul(other, self)
    def __neg__(self):            return neg(self)
    def __matmul__(self, other):  return matmul(self, other)
    def __getitem__(self, key):   return index(self, key)


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def _lift(x, like: Tensor) -> Tensor:
    """Numbers become constants shaped like *like*; arrays become constants."""
    if isinstance(x, Tensor):
        return x
    if _is_number(x):
        return Tensor(np.full(like.shape, float(x)))
    return Tensor(x)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(op: str, data, inputs: tuple[Tensor, ...], backward) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.grad = None
    track = _grad_enabled.get() and any(t.requires_grad for t in inputs)
    out.requires_grad = track
    out.node = ComputeNode(op, inputs, backward) if track else None
    return out


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _is_bias(a: Tensor, b: Tensor) -> bool:
    return a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]


# -------------------------------------------------- #
# elementwise / linear ops
# -------------------------------------------------- #
def add(a: Tensor, b: Tensor) -> Tensor:
    """Same-shape sum, or bias-add of a row vector onto every row of a matrix."""
    if _is_bias(a, b):
        return _result("add", a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    _check_same("add", a, b)
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if _is_bias(a, b):
        return _result("subtract", a.data - b.data, (a, b), lambda g: (g, -g.sum(axis=0)))
    _check_same("subtract", a, b)
    return _result("subtract", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; a 0-d operand multiplies every entry of the other."""
    if a.data.ndim == 0 and b.data.ndim > 0:
        return _result("multiply", a.data * b.data, (a, b),
                       lambda g: (np.sum(g * b.data), g * a.data))
    if b.data.ndim == 0 and a.data.ndim > 0:
        return _result("multiply", a.data * b.data, (a, b),
                       lambda g: (g * b.data, np.sum(g * a.data)))
    _check_same("multiply", a, b)
    return _result("multiply", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return _result("negate", -a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _result("matmul", a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor, floor: float | None = None) -> Tensor:
    """Natural log; with *floor*, log(max(a, floor)) and zero grad where floored."""
    if floor is None:
        if (a.data <= 0).any():
            raise NonFiniteError("log of non-positive value")
        return _result("log", np.log(a.data), (a,), lambda g: (g / a.data,))
    live    = a.data > floor
    clamped = np.where(live, a.data, floor)
    return _result("log", np.log(clamped), (a,), lambda g: (np.where(live, g / clamped, 0.0),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def clamp_max(a: Tensor, limit: float) -> Tensor:
    """min(a, limit); the gradient stops where the clamp is active."""
    below = a.data < limit
    return _result("clamp_max", np.where(below, a.data, limit), (a,), lambda g: (g * below,))


# -------------------------------------------------- #
# reductions / normalisations (last axis unless stated)
# -------------------------------------------------- #
def softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e       = np.exp(shifted)
    out     = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)
    return _result("softmax", out, (a,), _bw)


def log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse     = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out     = shifted - lse
    probs   = np.exp(out)

    def _bw(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)
    return _result("log_softmax", out, (a,), _bw)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    shape = a.shape
    if axis is None:
        return _result("sum", a.data.sum(), (a,), lambda g: (np.full(shape, float(g)),))
    out = a.data.sum(axis=axis)
    return _result("sum", out, (a,),
                   lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm over the last axis (subgradient 0 at the origin)."""
    norm = np.sqrt(np.sum(a.data * a.data, axis=-1))

    def _bw(g):
        safe = np.where(norm > 0, norm, 1.0)
        unit = np.where((norm > 0)[..., None], a.data / safe[..., None], 0.0)
        return (np.expand_dims(g, -1) * unit,)
    return _result("l2_norm", norm, (a,), _bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ndim = tensors[0].data.ndim
    ax   = axis % ndim
    for t in tensors[1:]:
        other = [s for i, s in enumerate(t.shape) if i != ax]
        first = [s for i, s in enumerate(tensors[0].shape) if i != ax]
        if t.data.ndim != ndim or other != first:
            raise ShapeError(f"concat: {t.shape} does not conform to {tensors[0].shape}")
    sizes = [t.shape[ax] for t in tensors]
    cuts  = np.cumsum(sizes)[:-1]
    out   = np.concatenate([t.data for t in tensors], axis=ax)
    return _result("concat", out, tensors, lambda g: tuple(np.split(g, cuts, axis=ax)))


def index(a: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; grads scatter-add back into place."""
    out   = a.data[key]
    shape = a.shape

    def _bw(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return (full,)
    return _result("index", np.array(out, dtype=np.float64), (a,), _bw)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: keep with prob 1-p and rescale; identity in eval."""
    if not training or p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = 1.0 - p
    mask = (rng.random(a.shape) < keep) / keep
    return _result("dropout", a.data * mask, (a,), lambda g: (g * mask,))


def stop_gradient(a: Tensor) -> Tensor:
    """Same values, detached: nothing flows back into *a*."""
    out = Tensor.__new__(Tensor)
    out.data, out.name, out.grad, out.node = a.data, None, None, None
    out.requires_grad = False
    return out


# -------------------------------------------------- #
# backward
# -------------------------------------------------- #
def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen:  set[int]     = set()
    stack = [(root, False)]
    while stack:
        t, finished = stack.pop()
        if finished:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in t.node.inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires-grad leaf."""
    if loss.data.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for t in reversed(_topological(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            t.grad = t.grad + g if t.grad is not None else np.array(g, dtype=np.float64)
            continue
        for inp, gi in zip(t.node.inputs, t.node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = gi if key not in grads else grads[key] + gi


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# -------------------------------------------------- #
# gradient checking
# -------------------------------------------------- #
def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-6) -> float:
    """
    Max relative error between backward() and central differences of *f* at *x*.

    *x* must be a requires-grad leaf; *f* must be deterministic (dropout and
    sampling frozen), which is verified by evaluating twice.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not (x.requires_grad and x.is_leaf):
        raise ValueError("finite_diff_check needs a requires-grad leaf tensor")
    base = x.data.copy()
    first, second = float(f(x).data), float(f(x).data)
    if first != second:
        raise NonDeterministicError(f"f(x) evaluated to {first!r} then {second!r}")

    x.zero_grad()
    backward(f(x))
    analytic = x.grad.copy()
    x.zero_grad()

    numeric = np.empty_like(base)
    try:
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx]  += step
            minus[idx] -= step
            x.data = plus
            f_plus = float(f(x).data)
            x.data = minus
            f_minus = float(f(x).data)
            numeric[idx] = (f_plus - f_minus) / (2.0 * step)
    finally:
        x.data = base
    err = _relative_error(analytic, numeric)
    return float(err.max()) if err.size else 0.0


@dataclass
class GradientCheck:
    name:     str
    analytic: np.ndarray
    numeric:  np.ndarray

    @property
    def max_rel_error(self) -> float:
        err = _relative_error(self.analytic, self.numeric)
        return float(err.max()) if err.size else 0.0


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    step: float = 1e-6,
) -> list[GradientCheck]:
    """Per-parameter analytic vs central-difference gradients of a closure."""
    for _, p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = {name: p.grad.copy() for name, p in params}
    for _, p in params:
        p.zero_grad()

    report: list[GradientCheck] = []
    for name, p in params:
        base    = p.data.copy()
        numeric = np.empty_like(base)
        try:
            for idx in np.ndindex(base.shape):
                plus, minus = base.copy(), base.copy()
                plus[idx]  += step
                minus[idx] -= step
                p.data = plus
                f_plus = float(loss_fn().data)
                p.data = minus
                f_minus = float(loss_fn().data)
                numeric[idx] = (f_plus - f_minus) / (2.0 * step)
        finally:
            p.data = base
        report.append(GradientCheck(name, analytic[name], numeric))
    return report
