"""Dense float64 tensors with reverse-mode automatic differentiation.

Ops execute eagerly on numpy arrays. While a GradTape is active (as a
context manager on the current thread), every op whose inputs require
gradients records a backward closure; `backward` then replays the tape in
exact reverse execution order and accumulates gradients additively across
fan-out. All data is 64-bit and row-major, and any non-finite value raised
by an op is an error, never silent.

Tapes are single-threaded; independent tapes on separate threads do not
share state (the active-tape stack is thread-local).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import erf

from .errors import NumericError, ShapeError

Array = np.ndarray

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """A dense row-major float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:  # ascontiguousarray would promote 0-d to 1-d
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor holds non-finite values")
        self.data: Array = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all arithmetic routes through the taped ops below.
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


@dataclass
class _OpRecord:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[Array], tuple[Array | None, ...]]


_TLS = threading.local()


def _tape_stack() -> list["GradTape"]:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = []
        _TLS.stack = stack
    return stack


class GradTape:
    """Ordered record of executed ops for one backward pass."""

    def __init__(self):
        self._records: list[_OpRecord] = []

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        self._records.append(_OpRecord(out, inputs, backward))


def _active_tape() -> GradTape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _emit(out_data: Array, inputs: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad:
        tape = _active_tape()
        if tape is not None:
            tape._record(out, inputs, backward)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward(g: Array):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward(g: Array):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward(g: Array):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit(out, (a, b), backward)


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)

    def backward(g: Array):
        return (g * s,) if a.requires_grad else (None,)

    return _emit(a.data * s, (a,), backward)


def matmul(a, b) -> Tensor:
    """Matrix product. Operands must be >= 2-D; leading axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError as e:
        raise ShapeError(f"matmul: shapes {a.shape} @ {b.shape} do not broadcast") from e

    def backward(g: Array):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _emit(out, (a, b), backward)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = _as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))

    def backward(g: Array):
        return (np.transpose(g, inv),) if a.requires_grad else (None,)

    return _emit(np.transpose(a.data, axes), (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from e

    def backward(g: Array):
        return (g.reshape(a.shape),) if a.requires_grad else (None,)

    return _emit(out, (a,), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis`, starting at `start`."""
    a = _as_tensor(a)
    axis = int(axis)
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ShapeError(
            f"narrow: [{start}, {start + length}) out of range for axis {axis} of {a.shape}"
        )
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g: Array):
        if not a.requires_grad:
            return (None,)
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _emit(a.data[index], (a,), backward)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from e
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g: Array):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(pieces, ts))

    return _emit(out, ts, backward)


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - np-style name
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.data.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: Array):
        if not a.requires_grad:
            return (None,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _emit(out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.data.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def backward(g: Array):
        if not a.requires_grad:
            return (None,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return _emit(out, (a,), backward)


# ---------------------------------------------------------------------------
# Nonlinearities and normalization
# ---------------------------------------------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`; rows sum to 1."""
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Array):
        if not a.requires_grad:
            return (None,)
        dot = np.sum(g * p, axis=axis, keepdims=True)
        return (p * (g - dot),)

    return _emit(p, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    out = z - lse

    def backward(g: Array):
        if not a.requires_grad:
            return (None,)
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return _emit(out, (a,), backward)


def layer_norm(x, gamma, beta) -> Tensor:
    """Zero-mean unit-variance normalization of the last axis, then affine.

    Variance uses the population estimate with LN_EPS inside the square root,
    so constant vectors normalize to zero instead of dividing by zero.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise ShapeError(
            f"layer_norm: gamma/beta must have shape ({dim},), got {gamma.shape}/{beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = centered * istd
    out = xhat * gamma.data + beta.data

    def backward(g: Array):
        gx = ggamma = gbeta = None
        batch_axes = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            ggamma = np.sum(g * xhat, axis=batch_axes)
        if beta.requires_grad:
            gbeta = np.sum(g, axis=batch_axes)
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
            ) * istd
        return gx, ggamma, gbeta

    return _emit(out, (x, gamma, beta), backward)


def gelu(a) -> Tensor:
    """Exact GELU x * Phi(x), using the error function (not the tanh form)."""
    a = _as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = a.data * cdf

    def backward(g: Array):
        if not a.requires_grad:
            return (None,)
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return (g * (cdf + a.data * pdf),)

    return _emit(out, (a,), backward)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor, tape: GradTape) -> dict[Tensor, Array]:
    """Gradients of a scalar loss for every requires_grad tensor on the tape.

    Visits recorded ops in exact reverse execution order; fan-out gradients
    accumulate additively. Returns a mapping keyed by tensor identity.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ShapeError("backward expects a scalar loss tensor")
    grads: dict[Tensor, Array] = {loss: np.ones_like(loss.data)}
    for rec in reversed(tape._records):
        g_out = grads.get(rec.out)
        if g_out is None:
            continue
        for t, g in zip(rec.inputs, rec.backward(g_out)):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} does not match tensor shape {t.data.shape}"
                )
            acc = grads.get(t)
            grads[t] = g if acc is None else acc + g
    return grads


# ---------------------------------------------------------------------------
# Adam optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moments and hyperparameters for one parameter list.

    Weight decay is coupled L2: it is added to the gradient before the
    moment updates, as in the original Adam formulation.
    """

    lr: float = 1e-6
    weight_decay: float = 1e-9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float = 1e-6,
                   weight_decay: float = 1e-9) -> "AdamState":
        return cls(
            lr=lr,
            weight_decay=weight_decay,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: Sequence[Tensor], grads, state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter tensors.

    `grads` is either a mapping keyed by tensor (missing entries mean zero
    gradient) or a sequence aligned with `params`.
    """
    if len(state.m) != len(params) or len(state.v) != len(params):
        raise ShapeError("AdamState does not match the parameter list")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    is_mapping = isinstance(grads, Mapping)
    for i, p in enumerate(params):
        g = grads.get(p) if is_mapping else grads[i]
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if not np.all(np.isfinite(p.data)):
            raise NumericError(f"adam_step produced non-finite values at step {state.t}")
    return state
