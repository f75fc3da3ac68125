"""Causal-masked transformer encoder with station-metadata fusion.

A day of weather rows is embedded, shifted one position right behind a
learned start token, fused with a tiled station-metadata embedding, and
run through pre-norm encoder blocks whose attention is causally masked.
Position t of the output therefore depends only on weather rows strictly
before slot t (plus the metadata), which is what makes the 96-step
forecast honest: the readout at position t is the prediction for slot t.

The default readout uses positions 0..T-1 ("shifted"): position 0 is the
start token, so the slot-0 prediction rests on metadata alone. The
"algorithmic" mode reads positions 1..T instead, which lets slot t's
prediction see slot t's own weather row; it is kept for comparison and
is selectable per run, never silently.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from pvforecast import autodiff as ad
from pvforecast.autodiff import Tensor
from pvforecast.container import read_container, write_container
from pvforecast.data import DataError, ZScoreScaler

__all__ = [
    "AblationFlags",
    "BlockParams",
    "Checkpoint",
    "ModelConfig",
    "ModelParams",
    "build_causal_mask",
    "encoder_block",
    "forward",
    "forward_batch",
    "init_params",
    "load_checkpoint",
    "multi_head_attention",
    "parameter_count",
    "save_checkpoint",
    "save_oracle_checkpoint",
]

CHECKPOINT_SCHEMA_VERSION = 1
READOUT_MODES = ("shifted", "algorithmic")
START_TOKEN_STD = 0.02


@dataclass
class AblationFlags:
    """Structural switches used by the ablation protocol."""

    disable_norm: bool = False
    disable_metadata: bool = False
    disable_skip: bool = False
    disable_attention: bool = False


@dataclass
class ModelConfig:
    seq_len: int = 96
    model_dim: int = 64
    heads: int = 4
    head_dim: int = 16
    blocks: int = 2
    ffn_hidden: int = 256
    d_weather: int = 8
    d_metadata: int = 7
    readout_mode: str = "shifted"
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if isinstance(self.ablation, dict):
            self.ablation = AblationFlags(**self.ablation)
        if self.heads * self.head_dim != self.model_dim:
            raise DataError(
                f"model_dim {self.model_dim} must equal heads*head_dim "
                f"({self.heads}*{self.head_dim})"
            )
        for name in ("seq_len", "model_dim", "heads", "head_dim", "blocks", "ffn_hidden",
                     "d_weather", "d_metadata"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.readout_mode not in READOUT_MODES:
            raise DataError(
                f"readout_mode must be one of {READOUT_MODES}, got {self.readout_mode!r}"
            )


@dataclass
class BlockParams:
    q_w: Tensor
    q_b: Tensor
    k_w: Tensor
    k_b: Tensor
    v_w: Tensor
    v_b: Tensor
    o_w: Tensor
    o_b: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn1_w: Tensor
    ffn1_b: Tensor
    ffn2_w: Tensor
    ffn2_b: Tensor


@dataclass
class ModelParams:
    """All trainable tensors plus the configuration they realize."""

    config: ModelConfig
    weather_w: Tensor
    weather_b: Tensor
    meta_w: Tensor
    meta_b: Tensor
    start_token: Tensor
    fusion_w: Tensor
    fusion_b: Tensor
    blocks: list[BlockParams]
    readout_w: Tensor
    readout_b: Tensor

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "weather_embed.weight", self.weather_w
        yield "weather_embed.bias", self.weather_b
        yield "metadata_embed.weight", self.meta_w
        yield "metadata_embed.bias", self.meta_b
        yield "start_token", self.start_token
        yield "fusion.weight", self.fusion_w
        yield "fusion.bias", self.fusion_b
        for i, block in enumerate(self.blocks):
            for suffix, tensor in (
                ("attn_q.weight", block.q_w),
                ("attn_q.bias", block.q_b),
                ("attn_k.weight", block.k_w),
                ("attn_k.bias", block.k_b),
                ("attn_v.weight", block.v_w),
                ("attn_v.bias", block.v_b),
                ("attn_out.weight", block.o_w),
                ("attn_out.bias", block.o_b),
                ("ln1.gain", block.ln1_gain),
                ("ln1.bias", block.ln1_bias),
                ("ln2.gain", block.ln2_gain),
                ("ln2.bias", block.ln2_bias),
                ("ffn1.weight", block.ffn1_w),
                ("ffn1.bias", block.ffn1_b),
                ("ffn2.weight", block.ffn2_w),
                ("ffn2.bias", block.ffn2_b),
            ):
                yield f"block{i}.{suffix}", tensor

        yield "readout.weight", self.readout_w
        yield "readout.bias", self.readout_b


def _tensor_schema(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Name, shape, and init family ("glorot", "zeros", "ones", "start")
    for every trainable tensor, in ``named_tensors`` order."""
    d = config.model_dim
    f = config.ffn_hidden
    schema = [
        ("weather_embed.weight", (config.d_weather, d), "glorot"),
        ("weather_embed.bias", (d,), "zeros"),
        ("metadata_embed.weight", (config.d_metadata, d), "glorot"),
        ("metadata_embed.bias", (d,), "zeros"),
        ("start_token", (d,), "start"),
        ("fusion.weight", (2 * d, d), "glorot"),
        ("fusion.bias", (d,), "zeros"),
    ]
    for i in range(config.blocks):
        schema += [
            (f"block{i}.attn_q.weight", (d, d), "glorot"),
            (f"block{i}.attn_q.bias", (d,), "zeros"),
            (f"block{i}.attn_k.weight", (d, d), "glorot"),
            (f"block{i}.attn_k.bias", (d,), "zeros"),
            (f"block{i}.attn_v.weight", (d, d), "glorot"),
            (f"block{i}.attn_v.bias", (d,), "zeros"),
            (f"block{i}.attn_out.weight", (d, d), "glorot"),
            (f"block{i}.attn_out.bias", (d,), "zeros"),
            (f"block{i}.ln1.gain", (d,), "ones"),
            (f"block{i}.ln1.bias", (d,), "zeros"),
            (f"block{i}.ln2.gain", (d,), "ones"),
            (f"block{i}.ln2.bias", (d,), "zeros"),
            (f"block{i}.ffn1.weight", (d, f), "glorot"),
            (f"block{i}.ffn1.bias", (f,), "zeros"),
            (f"block{i}.ffn2.weight", (f, d), "glorot"),
            (f"block{i}.ffn2.bias", (d,), "zeros"),
        ]
    schema += [
        ("readout.weight", (d, 1), "glorot"),
        ("readout.bias", (1,), "zeros"),
    ]
    return schema


def parameter_count(config: ModelConfig) -> int:
    """Closed-form trainable-parameter count for a configuration."""
    d = config.model_dim
    f = config.ffn_hidden
    embeds = config.d_weather * d + d + config.d_metadata * d + d
    fusion = 2 * d * d + d
    per_block = 4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d)
    readout = d + 1
    return embeds + d + fusion + config.blocks * per_block + readout


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Draw fresh parameters: Glorot-uniform matrices, zero biases,
    unit layer-norm gains, and a small-normal start token."""
    rng = np.random.default_rng([seed, 404])
    values: dict[str, Tensor] = {}
    for name, shape, family in _tensor_schema(config):
        if family == "glorot":
            fan_in, fan_out = shape if len(shape) == 2 else (shape[0], shape[0])
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape)
        elif family == "start":
            data = rng.normal(0.0, START_TOKEN_STD, size=shape)
        elif family == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        values[name] = Tensor(data, requires_grad=True)
    return _params_from_values(config, values)


def _params_from_values(config: ModelConfig, values: dict[str, Tensor]) -> ModelParams:
    blocks = []
    for i in range(config.blocks):
        blocks.append(
            BlockParams(
                q_w=values[f"block{i}.attn_q.weight"],
                q_b=values[f"block{i}.attn_q.bias"],
                k_w=values[f"block{i}.attn_k.weight"],
                k_b=values[f"block{i}.attn_k.bias"],
                v_w=values[f"block{i}.attn_v.weight"],
                v_b=values[f"block{i}.attn_v.bias"],
                o_w=values[f"block{i}.attn_out.weight"],
                o_b=values[f"block{i}.attn_out.bias"],
                ln1_gain=values[f"block{i}.ln1.gain"],
                ln1_bias=values[f"block{i}.ln1.bias"],
                ln2_gain=values[f"block{i}.ln2.gain"],
                ln2_bias=values[f"block{i}.ln2.bias"],
                ffn1_w=values[f"block{i}.ffn1.weight"],
                ffn1_b=values[f"block{i}.ffn1.bias"],
                ffn2_w=values[f"block{i}.ffn2.weight"],
                ffn2_b=values[f"block{i}.ffn2.bias"],
            )
        )
    return ModelParams(
        config=config,
        weather_w=values["weather_embed.weight"],
        weather_b=values["weather_embed.bias"],
        meta_w=values["metadata_embed.weight"],
        meta_b=values["metadata_embed.bias"],
        start_token=values["start_token"],
        fusion_w=values["fusion.weight"],
        fusion_b=values["fusion.bias"],
        blocks=blocks,
        readout_w=values["readout.weight"],
        readout_b=values["readout.bias"],
    )


def detach_params(params: ModelParams) -> ModelParams:
    """Constant view of the parameters for graph-free evaluation passes."""
    values = {name: Tensor(tensor.data) for name, tensor in params.named_tensors()}
    return _params_from_values(params.config, values)


def build_causal_mask(length: int) -> np.ndarray:
    """Additive mask: 0 where key position <= query position, else the
    large-negative sentinel standing in for -inf."""
    if length < 1:
        raise DataError(f"mask length must be >= 1, got {length}")
    mask = np.zeros((length, length))
    mask[np.triu_indices(length, k=1)] = ad.MASK_SENTINEL
    return mask


def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    block: BlockParams,
    mask: np.ndarray,
    heads: int,
    head_dim: int,
) -> Tensor:
    """Masked scaled dot-product attention over `heads` subspaces.

    Inputs are (batch, length, dim) with dim = heads * head_dim; the
    additive mask is applied before the row softmax, so blocked weights
    are exactly zero.
    """
    if query.ndim != 3:
        raise ad.ShapeError(f"attention expects (batch, length, dim), got {query.shape}")
    b, length, dim = query.shape

    def split(x: Tensor) -> Tensor:
        return x.reshape((b, length, heads, head_dim)).transpose((0, 2, 1, 3))

    q = split(ad.matmul(query, block.q_w) + block.q_b)
    k = split(ad.matmul(key, block.k_w) + block.k_b)
    v = split(ad.matmul(value, block.v_w) + block.v_b)
    scores = ad.matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(head_dim))
    weights = ad.masked_softmax(scores, mask)
    context = ad.matmul(weights, v).transpose((0, 2, 1, 3)).reshape((b, length, dim))
    return ad.matmul(context, block.o_w) + block.o_b


def encoder_block(
    x: Tensor, block: BlockParams, mask: np.ndarray, config: ModelConfig
) -> Tensor:
    """Pre-norm block: u = x + MHA(LN(x)); out = u + FFN(LN(u)).

    The ablation flags substitute identity for the norms, zero for the
    attention output, or drop the residual terms.
    """
    flags = config.ablation
    normed = x if flags.disable_norm else ad.layer_norm(x, block.ln1_gain, block.ln1_bias)
    if flags.disable_attention:
        attended = None
    else:
        attended = multi_head_attention(
            normed, normed, normed, block, mask, config.heads, config.head_dim
        )
    if flags.disable_skip:
        u = attended if attended is not None else Tensor(np.zeros_like(x.data))
    else:
        u = x + attended if attended is not None else x
    ffn_in = u if flags.disable_norm else ad.layer_norm(u, block.ln2_gain, block.ln2_bias)
    hidden = (ad.matmul(ffn_in, block.ffn1_w) + block.ffn1_b).relu()
    out = ad.matmul(hidden, block.ffn2_w) + block.ffn2_b
    return out if flags.disable_skip else u + out


def forward_batch(params: ModelParams, X: Tensor, m: Tensor) -> Tensor:
    """Predict per-panel power for a batch of days.

    `X` is (batch, T, d_weather), `m` is (batch, d_metadata); the result
    is (batch, T).
    """
    config = params.config
    t_len = config.seq_len
    X = X if isinstance(X, Tensor) else Tensor(X)
    m = m if isinstance(m, Tensor) else Tensor(m)
    if X.ndim != 3 or X.shape[1] != t_len or X.shape[2] != config.d_weather:
        raise ad.ShapeError(
            f"X must be (batch, {t_len}, {config.d_weather}), got {X.shape}"
        )
    if m.ndim != 2 or m.shape[0] != X.shape[0] or m.shape[1] != config.d_metadata:
        raise ad.ShapeError(
            f"m must be ({X.shape[0]}, {config.d_metadata}), got {m.shape}"
        )
    batch = X.shape[0]
    d = config.model_dim

    embedded = (ad.matmul(X, params.weather_w) + params.weather_b).relu()
    if config.ablation.disable_metadata:
        meta_embed = Tensor(np.zeros((batch, d)))
    else:
        meta_embed = (ad.matmul(m, params.meta_w) + params.meta_b).relu()
    start = ad.tile(params.start_token, batch).reshape((batch, 1, d))
    shifted = ad.concat([start, embedded], axis=1)  # (batch, T+1, d)
    tiled_meta = ad.tile(meta_embed, t_len + 1)  # (batch, T+1, d)
    fused = ad.concat([shifted, tiled_meta], axis=-1)
    hidden = (ad.matmul(fused, params.fusion_w) + params.fusion_b).relu()

    mask = build_causal_mask(t_len + 1)
    for block in params.blocks:
        hidden = encoder_block(hidden, block, mask, config)

    if config.readout_mode == "shifted":
        readout_in = hidden[:, 0:t_len, :]
    else:
        readout_in = hidden[:, 1 : t_len + 1, :]
    predicted = ad.matmul(readout_in, params.readout_w) + params.readout_b
    return predicted.reshape((batch, t_len))


def forward(params: ModelParams, X, m) -> Tensor:
    """Single-day forward pass: X (T, d_weather), m (d_metadata,) -> (T,)."""
    X_arr = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)
    m_arr = m.data if isinstance(m, Tensor) else np.asarray(m, dtype=np.float64)
    if X_arr.ndim != 2:
        raise ad.ShapeError(f"X must be 2-D (T, d_weather), got {X_arr.shape}")
    if m_arr.ndim != 1:
        raise ad.ShapeError(f"m must be 1-D (d_metadata,), got {m_arr.shape}")
    out = forward_batch(params, Tensor(X_arr[None, :, :]), Tensor(m_arr[None, :]))
    return out.reshape((params.config.seq_len,))


# -- checkpoints ------------------------------------------------------


@dataclass
class Checkpoint:
    """Loaded checkpoint: a real model or the y-echo oracle stub."""

    kind: str  # "transformer" or "oracle"
    params: ModelParams | None
    scaler: ZScoreScaler | None


def save_checkpoint(path: str, params: ModelParams, scaler: ZScoreScaler | None = None) -> None:
    """Write parameters (float64) and optional scaler to a container file."""
    manifest = {
        "format": "pv-checkpoint",
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": "transformer",
        "config": asdict(params.config),
        "parameters": [name for name, _ in params.named_tensors()],
    }
    if scaler is not None:
        manifest["scaler"] = {
            "weather_mean": scaler.weather_mean.tolist(),
            "weather_std": scaler.weather_std.tolist(),
            "weather_excluded": scaler.weather_excluded.astype(int).tolist(),
            "metadata_mean": scaler.metadata_mean.tolist(),
            "metadata_std": scaler.metadata_std.tolist(),
            "metadata_excluded": scaler.metadata_excluded.astype(int).tolist(),
        }
    arrays = {name: tensor.data.astype("<f8") for name, tensor in params.named_tensors()}
    write_container(path, manifest, arrays)


def save_oracle_checkpoint(path: str) -> None:
    """Write the evaluation stub that echoes targets back as predictions.

    Useful for exercising the evaluation plumbing: a perfect forecaster
    must score (mse 0, pe 0, kld ~0, ccc 1).
    """
    manifest = {
        "format": "pv-checkpoint",
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": "oracle",
    }
    write_container(path, manifest, {})


def load_checkpoint(path: str) -> Checkpoint:
    """Read a checkpoint; every shape is validated against its config."""
    manifest, arrays = read_container(path)
    if manifest.get("format") != "pv-checkpoint":
        raise DataError(f"{path}: not a checkpoint file")
    version = manifest.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise DataError(
            f"{path}: checkpoint version {version} unsupported "
            f"(expected {CHECKPOINT_SCHEMA_VERSION})"
        )
    kind = manifest.get("kind", "transformer")
    if kind == "oracle":
        return Checkpoint(kind="oracle", params=None, scaler=None)
    if kind != "transformer":
        raise DataError(f"{path}: unknown checkpoint kind {kind!r}")
    try:
        config = ModelConfig(**manifest["config"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed checkpoint config: {exc}") from None
    values: dict[str, Tensor] = {}
    for name, shape, _ in _tensor_schema(config):
        if name not in arrays:
            raise DataError(f"{path}: checkpoint missing parameter {name!r}")
        arr = arrays[name]
        if arr.shape != shape:
            raise DataError(
                f"{path}: parameter {name!r} has shape {arr.shape}, expected {shape}"
            )
        values[name] = Tensor(arr.astype(np.float64), requires_grad=True)
    extra = sorted(set(arrays) - {name for name, _, _ in _tensor_schema(config)})
    if extra:
        raise DataError(f"{path}: unexpected parameter arrays: {', '.join(extra)}")
    params = _params_from_values(config, values)
    scaler = None
    if "scaler" in manifest:
        block = manifest["scaler"]
        try:
            scaler = ZScoreScaler(
                weather_mean=np.asarray(block["weather_mean"], dtype=np.float64),
                weather_std=np.asarray(block["weather_std"], dtype=np.float64),
                weather_excluded=np.asarray(block["weather_excluded"], dtype=bool),
                metadata_mean=np.asarray(block["metadata_mean"], dtype=np.float64),
                metadata_std=np.asarray(block["metadata_std"], dtype=np.float64),
                metadata_excluded=np.asarray(block["metadata_excluded"], dtype=bool),
            )
        except KeyError as exc:
            raise DataError(f"{path}: scaler block missing {exc.args[0]!r}") from None
    return Checkpoint(kind="transformer", params=params, scaler=scaler)
