"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine is deliberately small: just the primitives the forecasting model
needs, all in 64-bit, all backed by numpy arrays. Operations executed while
a :class:`GradTape` is active append one node each to the tape, so the node
list is already a topological order of the step's graph; replaying it in
reverse implements backpropagation.

Tensors are immutable after construction and may be shared freely between
threads. A tape is single-writer: one tape per training step. The active
tape is tracked per thread, so independent steps can run concurrently as
long as each uses its own tape.

Broadcasting is intentionally absent. ``add`` and ``mul`` require equal
shapes, ``scale`` takes a Python scalar, and ``add_bias`` is the one
explicit row-broadcast primitive (a 1-D bias added across leading axes).
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Immutable dense array with row-major float64 storage.

    Construction copies and freezes the input, so a Tensor can never
    observe later mutation of the source array. All arithmetic lives in
    module-level functions that return new tensors.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Internal fast path for arrays we just allocated ourselves.
        t = cls.__new__(cls)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        arr.setflags(write=False)
        t.data = arr
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class GradTape:
    """Execution-ordered record of primitive operations.

    Used as a context manager::

        with GradTape() as tape:
            tape.watch(w, b)
            loss = ...
        grads = backward(tape, loss)

    Nodes are appended in execution order; since every operand must exist
    before an operation runs, reversing the list visits nodes in reverse
    topological order. Gradient accumulators start at zero and are summed
    on fan-out, never overwritten.
    """

    __slots__ = ("_nodes", "_watched")

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._watched: list[Tensor] = []

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("GradTape exited out of order")
        stack.pop()

    def watch(self, *tensors: Tensor) -> None:
        """Mark leaf tensors whose gradients backward() should report."""
        seen = {id(t) for t in self._watched}
        for t in tensors:
            if id(t) not in seen:
                self._watched.append(t)
                seen.add(id(t))

    def __len__(self) -> int:
        return len(self._nodes)


def _record(out: Tensor, inputs: tuple, backward_fn: Callable) -> None:
    tape = _active_tape()
    if tape is not None:
        tape._nodes.append((out, inputs, backward_fn))


def backward(tape: GradTape, loss: Tensor) -> dict:
    """Replay the tape in reverse and return gradients of the watched leaves.

    Parameters
    ----------
    tape : GradTape
        The tape that recorded the forward computation.
    loss : Tensor
        Scalar (shape ``()``) output to differentiate.

    Returns
    -------
    dict
        Maps each watched Tensor (by identity) to its gradient ndarray.
        Watched tensors that do not influence the loss get zeros.
    """
    if loss.data.shape != ():
        raise DimensionError(
            f"backward requires a scalar loss, got shape {loss.data.shape}"
        )
    grads: dict[int, np.ndarray] = {id(loss): np.array(1.0)}
    for out, inputs, backward_fn in reversed(tape._nodes):
        g = grads.get(id(out))
        if g is None:
            continue
        for inp, gi in zip(inputs, backward_fn(g)):
            if gi is None:
                continue
            slot = grads.get(id(inp))
            grads[id(inp)] = gi if slot is None else slot + gi
    return {
        t: grads.get(id(t), np.zeros(t.shape)) for t in tape._watched
    }


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b``.

    Supported forms: ``(k,)@(k,n)``, ``(m,k)@(k,n)``, ``(B,m,k)@(k,n)``
    and ``(B,m,k)@(B,k,n)``. The leading batch axis, when present, is a
    stack of independent products.
    """
    ad, bd = a.data, b.data
    ok = (
        (ad.ndim == 1 and bd.ndim == 2 and ad.shape[0] == bd.shape[0])
        or (ad.ndim == 2 and bd.ndim == 2 and ad.shape[1] == bd.shape[0])
        or (ad.ndim == 3 and bd.ndim == 2 and ad.shape[2] == bd.shape[0])
        or (
            ad.ndim == 3
            and bd.ndim == 3
            and ad.shape[0] == bd.shape[0]
            and ad.shape[2] == bd.shape[1]
        )
    )
    if not ok:
        raise DimensionError(
            f"matmul: incompatible shapes {ad.shape} and {bd.shape}"
        )
    out = Tensor._wrap(ad @ bd)

    def backward_fn(g: np.ndarray):
        if ad.ndim == 1:
            return g @ bd.T, np.outer(ad, g)
        if bd.ndim == 2 and ad.ndim == 2:
            return g @ bd.T, ad.T @ g
        if bd.ndim == 2:  # (B,m,k)@(k,n)
            ga = g @ bd.T
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        return g @ bd.swapaxes(-1, -2), ad.swapaxes(-1, -2) @ g

    _record(out, (a, b), backward_fn)
    return out


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes (plain transpose for 2-D)."""
    if x.ndim < 2:
        raise DimensionError(f"transpose requires ndim >= 2, got {x.shape}")
    out = Tensor._wrap(x.data.swapaxes(-1, -2).copy())
    _record(out, (x,), lambda g: (g.swapaxes(-1, -2),))
    return out


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two equal-shape tensors."""
    _require_same_shape("add", a, b)
    out = Tensor._wrap(a.data + b.data)
    _record(out, (a, b), lambda g: (g, g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equal-shape tensors."""
    _require_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    out = Tensor._wrap(ad * bd)
    _record(out, (a, b), lambda g: (g * bd, g * ad))
    return out


def scale(x: Tensor, s: float) -> Tensor:
    """Multiply every element by a Python scalar."""
    s = float(s)
    out = Tensor._wrap(x.data * s)
    _record(out, (x,), lambda g: (g * s,))
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1-D bias across all leading axes of ``x``.

    ``x`` has shape ``(..., d)`` and ``b`` shape ``(d,)``; the gradient of
    the bias sums over the leading axes.
    """
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(
            f"add_bias: bias {b.shape} does not match last axis of {x.shape}"
        )
    out = Tensor._wrap(x.data + b.data)
    lead = tuple(range(x.ndim - 1))

    def backward_fn(g: np.ndarray):
        return g, g.sum(axis=lead) if lead else g

    _record(out, (x, b), backward_fn)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor._wrap(y)
    _record(out, (x,), lambda g: (g * (1.0 - y * y),))
    return out


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so neither branch exponentiates a large positive value.
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor._wrap(y)
    _record(out, (x,), lambda g: (g * y * (1.0 - y),))
    return out


def relu(x: Tensor) -> Tensor:
    xd = x.data
    out = Tensor._wrap(np.maximum(xd, 0.0))
    _record(out, (x,), lambda g: (g * (xd > 0.0),))
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by per-slice max subtraction.

    Output rows are nonnegative and sum to 1; adding a constant to a row
    of the input leaves that row's output unchanged.
    """
    xd = x.data
    shifted = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._wrap(y)

    def backward_fn(g: np.ndarray):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    _record(out, (x,), backward_fn)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each last-axis slice to zero mean and unit variance.

    Computes ``(x - mean) / sqrt(var + eps) * gain + bias`` per slice,
    with population variance. ``gain`` and ``bias`` are 1-D of length d.
    """
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match "
            f"last axis of {x.shape}"
        )
    xd = x.data
    mean = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean) * inv
    out = Tensor._wrap(xhat * gain.data + bias.data)
    lead = tuple(range(x.ndim - 1))

    def backward_fn(g: np.ndarray):
        gxhat = g * gain.data
        m1 = gxhat.mean(axis=-1, keepdims=True)
        m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gxhat - m1 - xhat * m2)
        ggain = (g * xhat).sum(axis=lead) if lead else g * xhat
        gbias = g.sum(axis=lead) if lead else g
        return gx, ggain, gbias

    _record(out, (x, gain, bias), backward_fn)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    In inference mode (``training=False``) the input tensor is returned
    unchanged, bit for bit. ``rate`` must lie in [0, 1).
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    factor = keep / (1.0 - rate)
    out = Tensor._wrap(x.data * factor)
    _record(out, (x,), lambda g: (g * factor,))
    return out


def time_slice(x: Tensor, t: int) -> Tensor:
    """Take index ``t`` along the second-to-last axis.

    ``(T, d) -> (d,)`` and ``(B, T, d) -> (B, d)``; the gradient scatters
    back into an otherwise-zero array.
    """
    if x.ndim < 2:
        raise DimensionError(f"time_slice requires ndim >= 2, got {x.shape}")
    length = x.shape[-2]
    if not 0 <= t < length:
        raise DimensionError(f"time_slice index {t} out of range [0, {length})")
    out = Tensor._wrap(np.ascontiguousarray(x.data[..., t, :]))
    shape = x.shape

    def backward_fn(g: np.ndarray):
        gx = np.zeros(shape)
        gx[..., t, :] = g
        return (gx,)

    _record(out, (x,), backward_fn)
    return out


def time_stack(items: Sequence[Tensor]) -> Tensor:
    """Stack tensors along a new second-to-last axis.

    A list of T vectors ``(d,)`` becomes ``(T, d)``; a list of T batches
    ``(B, d)`` becomes ``(B, T, d)``. Inverse of time_slice over a loop.
    """
    if not items:
        raise DimensionError("time_stack requires at least one tensor")
    first = items[0].shape
    for it in items:
        if it.shape != first:
            raise DimensionError(
                f"time_stack: mixed shapes {first} vs {it.shape}"
            )
    out = Tensor._wrap(np.stack([t.data for t in items], axis=-2))

    def backward_fn(g: np.ndarray):
        return tuple(
            np.ascontiguousarray(g[..., i, :]) for i in range(len(items))
        )

    _record(out, tuple(items), backward_fn)
    return out


def concat_last(items: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the last axis."""
    if not items:
        raise DimensionError("concat_last requires at least one tensor")
    lead = items[0].shape[:-1]
    for it in items:
        if it.shape[:-1] != lead:
            raise DimensionError(
                f"concat_last: leading shapes differ, {items[0].shape} vs {it.shape}"
            )
    widths = [t.shape[-1] for t in items]
    out = Tensor._wrap(np.concatenate([t.data for t in items], axis=-1))
    edges = np.cumsum([0] + widths)

    def backward_fn(g: np.ndarray):
        return tuple(
            np.ascontiguousarray(g[..., edges[i] : edges[i + 1]])
            for i in range(len(items))
        )

    _record(out, tuple(items), backward_fn)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum every element into a scalar (shape ``()``) tensor."""
    out = Tensor._wrap(np.asarray(x.data.sum()))
    shape = x.shape
    _record(out, (x,), lambda g: (np.broadcast_to(g, shape).copy() if shape else g,))
    return out


def mean_all(x: Tensor) -> Tensor:
    """Mean of every element as a scalar tensor."""
    return scale(sum_all(x), 1.0 / x.size)
