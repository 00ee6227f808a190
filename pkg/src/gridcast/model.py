"""The full forecasting network and its persistence.

Composition: learned input projection, additive position encoding,
attention-encoder stack, recurrent stack, one ReLU fully-connected layer,
linear forecast head reading the last hidden state. Batches flow through
as 3-D tensors; every sublayer treats the batch axis as independent rows.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import autodiff as ad
from . import lstm as rnn
from . import transformer as tfm
from .autodiff import Tensor
from .data import NormalizationParams
from .errors import (
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigurationError,
    DimensionError,
    MalformedCheckpointError,
)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and initialisation settings.

    Defaults follow the published configuration (three encoder layers of
    twelve heads, two recurrent layers of 128 units, a 256-unit ReLU
    layer, dropout 0.5) except d_model, which the source never states;
    96 is the smallest conventional width divisible by twelve heads.
    """

    input_features: int
    window_len: int
    horizon: int = 1
    d_model: int = 96
    n_encoder_layers: int = 3
    n_heads: int = 12
    d_ff: int | None = None
    lstm_layers: int = 2
    lstm_hidden: int = 128
    fc_units: int = 256
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("input_features", "window_len", "horizon", "d_model",
                     "n_encoder_layers", "n_heads", "lstm_layers",
                     "lstm_hidden", "fc_units"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ConfigurationError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.d_ff is not None and self.d_ff < 1:
            raise ConfigurationError(f"d_ff must be >= 1, got {self.d_ff}")

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class ModelParams:
    """Every learnable tensor, in a fixed named order."""

    input_w: Tensor
    input_b: Tensor
    pe: tfm.PositionalEncodingTable
    encoder: tuple[tfm.EncoderLayerParams, ...]
    lstm: rnn.StackParams
    fc_w: Tensor
    fc_b: Tensor
    head_w: Tensor
    head_b: Tensor

    def named(self) -> Iterator[tuple[str, Tensor]]:
        yield "input.w", self.input_w
        yield "input.b", self.input_b
        for i, layer in enumerate(self.encoder):
            for h, head in enumerate(layer.attention.heads):
                yield f"encoder.{i}.attention.{h}.w_q", head.w_q
                yield f"encoder.{i}.attention.{h}.w_k", head.w_k
                yield f"encoder.{i}.attention.{h}.w_v", head.w_v
            yield f"encoder.{i}.attention.w_o", layer.attention.w_o
            yield f"encoder.{i}.ffn.w1", layer.ffn.w1
            yield f"encoder.{i}.ffn.b1", layer.ffn.b1
            yield f"encoder.{i}.ffn.w2", layer.ffn.w2
            yield f"encoder.{i}.ffn.b2", layer.ffn.b2
            yield f"encoder.{i}.norm1.gain", layer.norm1_gain
            yield f"encoder.{i}.norm1.bias", layer.norm1_bias
            yield f"encoder.{i}.norm2.gain", layer.norm2_gain
            yield f"encoder.{i}.norm2.bias", layer.norm2_bias
        for i, cell in enumerate(self.lstm.layers):
            for gate in ("w_xi", "w_hi", "w_ci", "b_i", "w_xf", "w_hf", "w_cf",
                         "b_f", "w_xc", "w_hc", "b_c", "w_xo", "w_ho", "w_co", "b_o"):
                yield f"lstm.{i}.{gate}", getattr(cell, gate)
        yield "fc.w", self.fc_w
        yield "fc.b", self.fc_b
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named()}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Shape of every learnable tensor, keyed by its checkpoint name."""
    d, dk, dff = cfg.d_model, cfg.head_dim, cfg.ffn_width
    shapes: dict[str, tuple[int, ...]] = {
        "input.w": (cfg.input_features, d),
        "input.b": (d,),
    }
    for i in range(cfg.n_encoder_layers):
        for h in range(cfg.n_heads):
            shapes[f"encoder.{i}.attention.{h}.w_q"] = (d, dk)
            shapes[f"encoder.{i}.attention.{h}.w_k"] = (d, dk)
            shapes[f"encoder.{i}.attention.{h}.w_v"] = (d, dk)
        shapes[f"encoder.{i}.attention.w_o"] = (cfg.n_heads * dk, d)
        shapes[f"encoder.{i}.ffn.w1"] = (d, dff)
        shapes[f"encoder.{i}.ffn.b1"] = (dff,)
        shapes[f"encoder.{i}.ffn.w2"] = (dff, d)
        shapes[f"encoder.{i}.ffn.b2"] = (d,)
        shapes[f"encoder.{i}.norm1.gain"] = (d,)
        shapes[f"encoder.{i}.norm1.bias"] = (d,)
        shapes[f"encoder.{i}.norm2.gain"] = (d,)
        shapes[f"encoder.{i}.norm2.bias"] = (d,)
    width = d
    for i in range(cfg.lstm_layers):
        hid = cfg.lstm_hidden
        for gate in ("w_xi", "w_xf", "w_xc", "w_xo"):
            shapes[f"lstm.{i}.{gate}"] = (width, hid)
        for gate in ("w_hi", "w_ci", "w_hf", "w_cf", "w_hc", "w_ho", "w_co"):
            shapes[f"lstm.{i}.{gate}"] = (hid, hid)
        for gate in ("b_i", "b_f", "b_c", "b_o"):
            shapes[f"lstm.{i}.{gate}"] = (hid,)
        width = hid
    shapes["fc.w"] = (cfg.lstm_hidden, cfg.fc_units)
    shapes["fc.b"] = (cfg.fc_units,)
    shapes["head.w"] = (cfg.fc_units, cfg.horizon)
    shapes["head.b"] = (cfg.horizon,)
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def glorot_bound(shape: tuple[int, ...]) -> float:
    fan_in, fan_out = shape[0], shape[-1]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def _init_array(name: str, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if len(shape) == 2:
        bound = glorot_bound(shape)
        return rng.uniform(-bound, bound, size=shape)
    if name.endswith(".b_f"):
        return np.ones(shape)  # forget-gate bias opens the memory path
    if name.endswith(".gain"):
        return np.ones(shape)
    return np.zeros(shape)


def from_arrays(cfg: ModelConfig, arrays: dict[str, np.ndarray]) -> ModelParams:
    """Assemble params from named arrays, validating names and shapes."""
    _check_names_and_shapes(cfg, {k: np.shape(v) for k, v in arrays.items()})
    return from_tensors(cfg, {name: Tensor(a) for name, a in arrays.items()})


def _check_names_and_shapes(cfg: ModelConfig, got_shapes: dict) -> None:
    shapes = param_shapes(cfg)
    missing = set(shapes) - set(got_shapes)
    extra = set(got_shapes) - set(shapes)
    if missing or extra:
        raise CheckpointShapeError(
            f"tensor names do not match config: missing {sorted(missing)}, "
            f"unexpected {sorted(extra)}"
        )
    for name, shape in shapes.items():
        if tuple(got_shapes[name]) != shape:
            raise CheckpointShapeError(
                f"tensor '{name}': expected shape {shape}, found {tuple(got_shapes[name])}"
            )


def from_tensors(cfg: ModelConfig, t: dict[str, Tensor]) -> ModelParams:
    """Assemble params around existing Tensor objects (no copies), so a
    caller can keep references that stay live in the autodiff graph."""
    _check_names_and_shapes(cfg, {k: v.shape for k, v in t.items()})
    encoder = []
    for i in range(cfg.n_encoder_layers):
        heads = tuple(
            tfm.AttentionHeadParams(
                w_q=t[f"encoder.{i}.attention.{h}.w_q"],
                w_k=t[f"encoder.{i}.attention.{h}.w_k"],
                w_v=t[f"encoder.{i}.attention.{h}.w_v"],
            )
            for h in range(cfg.n_heads)
        )
        encoder.append(
            tfm.EncoderLayerParams(
                attention=tfm.MultiHeadParams(heads=heads, w_o=t[f"encoder.{i}.attention.w_o"]),
                ffn=tfm.FeedForwardParams(
                    w1=t[f"encoder.{i}.ffn.w1"], b1=t[f"encoder.{i}.ffn.b1"],
                    w2=t[f"encoder.{i}.ffn.w2"], b2=t[f"encoder.{i}.ffn.b2"],
                ),
                norm1_gain=t[f"encoder.{i}.norm1.gain"],
                norm1_bias=t[f"encoder.{i}.norm1.bias"],
                norm2_gain=t[f"encoder.{i}.norm2.gain"],
                norm2_bias=t[f"encoder.{i}.norm2.bias"],
            )
        )
    cells = tuple(
        rnn.LstmCellParams(**{
            gate: t[f"lstm.{i}.{gate}"]
            for gate in ("w_xi", "w_hi", "w_ci", "b_i", "w_xf", "w_hf", "w_cf",
                         "b_f", "w_xc", "w_hc", "b_c", "w_xo", "w_ho", "w_co", "b_o")
        })
        for i in range(cfg.lstm_layers)
    )
    return ModelParams(
        input_w=t["input.w"],
        input_b=t["input.b"],
        pe=tfm.positional_encoding(cfg.window_len, cfg.d_model),
        encoder=tuple(encoder),
        lstm=rnn.StackParams(layers=cells),
        fc_w=t["fc.w"],
        fc_b=t["fc.b"],
        head_w=t["head.w"],
        head_b=t["head.b"],
    )


def init_params(cfg: ModelConfig) -> ModelParams:
    """Seeded Glorot-uniform weights, zero biases, forget bias one.

    Identical seeds produce bit-identical parameters; the draw order is
    the fixed named order of param_shapes.
    """
    rng = np.random.default_rng(cfg.seed)
    arrays = {
        name: _init_array(name, shape, rng)
        for name, shape in param_shapes(cfg).items()
    }
    return from_arrays(cfg, arrays)


def forward(
    batch_x: Tensor,
    params: ModelParams,
    cfg: ModelConfig,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """Map a batch of windows (B, L, F) to forecasts (B, H)."""
    if batch_x.ndim != 3:
        raise DimensionError(f"forward expects (B, L, F), got {batch_x.shape}")
    B, L, F = batch_x.shape
    if L != cfg.window_len or F != cfg.input_features:
        raise DimensionError(
            f"forward: batch shape {batch_x.shape} does not match config "
            f"(window_len={cfg.window_len}, input_features={cfg.input_features})"
        )
    if training and rng is None:
        raise ConfigurationError("training-mode forward requires an rng")
    if rng is None:
        rng = np.random.default_rng(0)  # never drawn from in inference mode
    rate = cfg.dropout
    x = ad.add_bias(ad.matmul(batch_x, params.input_w), params.input_b)
    pe = np.broadcast_to(params.pe.table.data[:L], (B, L, cfg.d_model))
    x = ad.add(x, Tensor(pe))
    x = ad.dropout(x, rate, rng, training)
    x = tfm.encoder_forward(x, params.encoder, rate, rng, training)
    hs = rnn.stack_forward(x, params.lstm, rate, rng, training)
    last = ad.time_slice(hs, L - 1)
    fc = ad.relu(ad.add_bias(ad.matmul(last, params.fc_w), params.fc_b))
    return ad.add_bias(ad.matmul(fc, params.head_w), params.head_b)


def predict(
    params: ModelParams,
    cfg: ModelConfig,
    inputs: np.ndarray,
    batch_size: int = 256,
) -> np.ndarray:
    """Inference-mode forecasts for an array of windows (N, L, F)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    out = np.empty((inputs.shape[0], cfg.horizon))
    for lo in range(0, inputs.shape[0], batch_size):
        chunk = inputs[lo : lo + batch_size]
        out[lo : lo + len(chunk)] = forward(
            Tensor(chunk), params, cfg, rng=None, training=False
        ).data
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    normalization: NormalizationParams | None


def _norm_to_json(norm: NormalizationParams | None):
    if norm is None:
        return None
    return {
        "columns": list(norm.columns),
        "mean": norm.mean.tolist(),
        "std": norm.std.tolist(),
        "target": norm.target,
    }


def _norm_from_json(obj) -> NormalizationParams | None:
    if obj is None:
        return None
    try:
        return NormalizationParams(
            columns=tuple(obj["columns"]),
            mean=np.array(obj["mean"], dtype=np.float64),
            std=np.array(obj["std"], dtype=np.float64),
            target=obj["target"],
        )
    except (KeyError, TypeError) as exc:
        raise MalformedCheckpointError(f"bad normalization section: {exc}") from None


def checkpoint_document(
    params: ModelParams,
    cfg: ModelConfig,
    norm: NormalizationParams | None,
) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(cfg),
        "normalization": _norm_to_json(norm),
        "tensors": [
            {"name": name, "shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.named()
        ],
    }


def save_checkpoint(
    path,
    params: ModelParams,
    cfg: ModelConfig,
    norm: NormalizationParams | None = None,
) -> None:
    """Write atomically: the target file either keeps its old content or
    holds the complete new document, never a truncated mix."""
    doc = checkpoint_document(params, cfg, norm)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedCheckpointError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise MalformedCheckpointError(f"{path}: missing format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format_version {doc['format_version']} not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    for key in ("config", "tensors"):
        if key not in doc:
            raise MalformedCheckpointError(f"{path}: missing '{key}' section")
    try:
        cfg = ModelConfig(**doc["config"])
    except (TypeError, ConfigurationError) as exc:
        raise MalformedCheckpointError(f"{path}: bad config section: {exc}") from None
    try:
        arrays = {
            entry["name"]: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for entry in doc["tensors"]
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCheckpointError(f"{path}: bad tensors section: {exc}") from None
    params = from_arrays(cfg, arrays)
    norm = _norm_from_json(doc.get("normalization"))
    return Checkpoint(config=cfg, params=params, normalization=norm)
