"""Attention-encoder building blocks.

Scaled dot-product attention, multi-head projection, position-wise
feed-forward, residual-plus-normalisation, and the sinusoidal position
table. Everything operates on the last two axes, so a single sequence
``(L, d_model)`` and a batch ``(B, L, d_model)`` share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class AttentionHeadParams:
    """Query/key/value projections for one attention head."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor


@dataclass(frozen=True)
class MultiHeadParams:
    """All heads of one attention sublayer plus the output projection."""

    heads: tuple[AttentionHeadParams, ...]
    w_o: Tensor


@dataclass(frozen=True)
class FeedForwardParams:
    """Two-layer position-wise network: d_model -> d_ff -> d_model."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass(frozen=True)
class EncoderLayerParams:
    attention: MultiHeadParams
    ffn: FeedForwardParams
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor


@dataclass(frozen=True)
class PositionalEncodingTable:
    """Precomputed sin/cos position features, one row per position."""

    table: Tensor

    @property
    def max_len(self) -> int:
        return self.table.shape[0]

    @property
    def d_model(self) -> int:
        return self.table.shape[1]


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(
            f"attention: q and k feature dims differ, {q.shape} vs {k.shape}"
        )
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(
            f"attention: k and v row counts differ, {k.shape} vs {v.shape}"
        )
    d_k = q.shape[-1]
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d_k))
    return ad.matmul(ad.softmax_rows(scores), v)


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """The softmax weight matrix alone, for inspection and tests."""
    d_k = q.shape[-1]
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d_k))
    return ad.softmax_rows(scores)


def multi_head_attention(x: Tensor, p: MultiHeadParams) -> Tensor:
    """Self-attention: per-head projections of x, attention, concat, project."""
    outs = []
    for head in p.heads:
        q = ad.matmul(x, head.w_q)
        k = ad.matmul(x, head.w_k)
        v = ad.matmul(x, head.w_v)
        outs.append(scaled_dot_attention(q, k, v))
    return ad.matmul(ad.concat_last(outs), p.w_o)


def position_wise_ffn(x: Tensor, p: FeedForwardParams) -> Tensor:
    """max(0, x W1 + b1) W2 + b2, applied row-wise."""
    hidden = ad.relu(ad.add_bias(ad.matmul(x, p.w1), p.b1))
    return ad.add_bias(ad.matmul(hidden, p.w2), p.b2)


def residual_norm(
    x: Tensor, sub: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5
) -> Tensor:
    """Normalise the sum of a sublayer output and its input."""
    return ad.layer_norm(ad.add(x, sub), gain, bias, eps)


def positional_encoding(max_len: int, d_model: int) -> PositionalEncodingTable:
    """Sinusoid table: even columns sin(pos / 10000^(2i/d)), odd columns cos.

    Requires an even ``d_model`` so sin/cos columns pair up.
    """
    if d_model % 2 != 0:
        raise ConfigurationError(f"d_model must be even, got {d_model}")
    if max_len < 1:
        raise ConfigurationError(f"max_len must be >= 1, got {max_len}")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, two_i / d_model)
    table = np.empty((max_len, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return PositionalEncodingTable(table=Tensor(table))


def encoder_forward(
    x: Tensor,
    layers: Sequence[EncoderLayerParams],
    dropout_rate: float,
    rng: np.random.Generator,
    training: bool,
) -> Tensor:
    """Chain encoder layers: attention and feed-forward sublayers, each
    followed by dropout, a residual connection, and normalisation.
    """
    if not layers:
        raise ConfigurationError("encoder requires at least one layer")
    for layer in layers:
        attn = ad.dropout(multi_head_attention(x, layer.attention), dropout_rate, rng, training)
        a = residual_norm(x, attn, layer.norm1_gain, layer.norm1_bias)
        ffn = ad.dropout(position_wise_ffn(a, layer.ffn), dropout_rate, rng, training)
        x = residual_norm(a, ffn, layer.norm2_gain, layer.norm2_bias)
    return x
