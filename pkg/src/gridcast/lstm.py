"""Peephole-gated recurrent cell and stacked sequence runner.

The cell follows the gated update literally: input and forget gates read
the previous cell state, the candidate path has no cell feedback, and the
output gate reads the freshly updated cell state. Peephole weights are
full hidden-by-hidden matrices, not diagonal vectors.

States may be single vectors ``(hidden,)`` or batches ``(B, hidden)``;
sequences correspondingly ``(T, in)`` or ``(B, T, in)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class LstmCellParams:
    """Weights of one cell. x-weights are (input_dim, hidden); h- and
    c-weights are (hidden, hidden); biases are (hidden,)."""

    w_xi: Tensor
    w_hi: Tensor
    w_ci: Tensor
    b_i: Tensor
    w_xf: Tensor
    w_hf: Tensor
    w_cf: Tensor
    b_f: Tensor
    w_xc: Tensor
    w_hc: Tensor
    b_c: Tensor
    w_xo: Tensor
    w_ho: Tensor
    w_co: Tensor
    b_o: Tensor

    @property
    def input_dim(self) -> int:
        return self.w_xi.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_xi.shape[1]


@dataclass(frozen=True)
class LstmState:
    """Hidden and cell state; equal shapes, hidden entries in (-1, 1)."""

    h: Tensor
    c: Tensor


@dataclass(frozen=True)
class StackParams:
    """Ordered cells; each layer consumes the previous layer's hiddens."""

    layers: tuple[LstmCellParams, ...]

    def validate_chaining(self, feed_width: int) -> None:
        width = feed_width
        for i, cell in enumerate(self.layers):
            if cell.input_dim != width:
                raise ConfigurationError(
                    f"lstm layer {i} expects input width {cell.input_dim}, "
                    f"previous layer provides {width}"
                )
            width = cell.hidden


def zero_state(hidden: int, batch: int | None = None) -> LstmState:
    shape = (hidden,) if batch is None else (batch, hidden)
    return LstmState(h=Tensor(np.zeros(shape)), c=Tensor(np.zeros(shape)))


def _gate_preact(x, h, c, w_x, w_h, w_c, b):
    z = ad.add(ad.matmul(x, w_x), ad.matmul(h, w_h))
    if w_c is not None:
        z = ad.add(z, ad.matmul(c, w_c))
    return ad.add_bias(z, b)


def cell_step(x_t: Tensor, prev: LstmState, p: LstmCellParams) -> LstmState:
    """One recurrence step.

    Gate order matters: the input and forget gates see the previous cell
    state, the output gate sees the updated one.
    """
    if x_t.shape[-1] != p.input_dim:
        raise DimensionError(
            f"cell_step: input width {x_t.shape} does not match "
            f"parameters ({p.input_dim})"
        )
    if prev.h.shape != prev.c.shape or prev.h.shape[-1] != p.hidden:
        raise DimensionError(
            f"cell_step: state shapes {prev.h.shape}/{prev.c.shape} do not "
            f"match hidden size {p.hidden}"
        )
    i_t = ad.sigmoid(_gate_preact(x_t, prev.h, prev.c, p.w_xi, p.w_hi, p.w_ci, p.b_i))
    f_t = ad.sigmoid(_gate_preact(x_t, prev.h, prev.c, p.w_xf, p.w_hf, p.w_cf, p.b_f))
    cand = ad.tanh(_gate_preact(x_t, prev.h, None, p.w_xc, p.w_hc, None, p.b_c))
    c_t = ad.add(ad.mul(f_t, prev.c), ad.mul(i_t, cand))
    o_t = ad.sigmoid(_gate_preact(x_t, prev.h, c_t, p.w_xo, p.w_ho, p.w_co, p.b_o))
    h_t = ad.mul(o_t, ad.tanh(c_t))
    return LstmState(h=h_t, c=c_t)


def sequence_forward(
    xs: Tensor, init: LstmState, p: LstmCellParams
) -> tuple[Tensor, LstmState]:
    """Fold cell_step over time; returns all hiddens and the final state."""
    if xs.ndim < 2:
        raise DimensionError(f"sequence_forward: expected (T, in), got {xs.shape}")
    T = xs.shape[-2]
    if T == 0:
        raise DimensionError("sequence_forward: empty sequence")
    state = init
    hs = []
    for t in range(T):
        state = cell_step(ad.time_slice(xs, t), state, p)
        hs.append(state.h)
    return ad.time_stack(hs), state


def stack_forward(
    xs: Tensor,
    stack: StackParams,
    dropout_rate: float,
    rng: np.random.Generator,
    training: bool,
) -> Tensor:
    """Run the layer stack; dropout sits between layers, never inside a cell."""
    if not stack.layers:
        raise ConfigurationError("lstm stack requires at least one layer")
    stack.validate_chaining(xs.shape[-1])
    batch = xs.shape[0] if xs.ndim == 3 else None
    out = xs
    for i, cell in enumerate(stack.layers):
        if i > 0:
            out = ad.dropout(out, dropout_rate, rng, training)
        out, _ = sequence_forward(out, zero_state(cell.hidden, batch), cell)
    return out
