"""Multichannel transformer classifier over log-spectrum segments.

The embedding stage cuts each channel's (257, 32) segment into full-height
patches of 257 x patch_time (time stride 1 by default, so patches overlap),
normalizes each flattened patch, projects it to the embedding dimension,
and normalizes again (dual patch-norm). Channels merge one of three ways:

  concat      - per-channel tokens stacked along the sequence (cross-channel
                attention; channel count fixed between train and test)
  sum         - per-channel embeddings summed elementwise (channel count fixed)
  shared_avg  - one weight-shared embedding, channel mean (channel-count
                agnostic, fewest parameters)

A learnable CLS token is prepended, learned positional embeddings are
added, and a stack of pre-LN transformer layers runs multi-head softmax
attention scaled by 1/sqrt(head_dim). The classifier reads only the final
CLS representation through Linear -> GELU -> Linear and returns raw logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import reduce

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as tn
from .errors import ConfigError, NumericError, ShapeError
from .features import FRAMES_PER_SEGMENT, FREQ_BINS, SegmentTensor
from .tensor import Tensor

NUM_CLASSES = 3
INIT_STD = 0.02


class MergeType(str, Enum):
    CONCAT = "concat"
    SUM = "sum"
    SHARED_AVG = "shared_avg"

    @classmethod
    def parse(cls, value) -> "MergeType":
        if isinstance(value, MergeType):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            raise ConfigError(
                f"unknown merge type {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 8
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: int = 4
    patch_freq: int = FREQ_BINS
    patch_time: int = 8
    time_stride: int = 1
    classifier_hidden: int = 387
    num_classes: int = NUM_CLASSES
    merge_type: MergeType = MergeType.CONCAT

    def __post_init__(self):
        object.__setattr__(self, "merge_type", MergeType.parse(self.merge_type))
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} must be divisible by heads {self.heads}"
            )
        if not 1 <= self.patch_time <= FRAMES_PER_SEGMENT:
            raise ConfigError(
                f"patch_time must be in [1, {FRAMES_PER_SEGMENT}], got {self.patch_time}"
            )
        if self.time_stride < 1:
            raise ConfigError(f"time_stride must be >= 1, got {self.time_stride}")
        for name in ("depth", "heads", "mlp_ratio", "patch_freq",
                     "classifier_hidden", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def patch_dim(self) -> int:
        return self.patch_freq * self.patch_time

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "embed_dim": self.embed_dim,
            "depth": self.depth,
            "heads": self.heads,
            "mlp_ratio": self.mlp_ratio,
            "patch_freq": self.patch_freq,
            "patch_time": self.patch_time,
            "time_stride": self.time_stride,
            "classifier_hidden": self.classifier_hidden,
            "num_classes": self.num_classes,
            "merge_type": self.merge_type.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def patch_count(cfg: ModelConfig) -> int:
    """Patches per channel: the full-height kernel slides along time only."""
    return (FRAMES_PER_SEGMENT - cfg.patch_time) // cfg.time_stride + 1


def token_count(cfg: ModelConfig) -> int:
    """Merged token count, excluding the CLS token."""
    per_channel = patch_count(cfg)
    if cfg.merge_type is MergeType.CONCAT:
        return cfg.channels * per_channel
    return per_channel


def count_parameters(cfg: ModelConfig) -> int:
    """Exact number of learnable scalars for a configuration."""
    d, p = cfg.embed_dim, cfg.patch_dim
    mlp = cfg.mlp_ratio * d
    embedding = 2 * p + p * d + d + 2 * d  # pre-norm, projection + bias, post-norm
    n_embeddings = 1 if cfg.merge_type is MergeType.SHARED_AVG else cfg.channels
    layer = (
        2 * d                 # pre-attention norm
        + d * 3 * d + 3 * d   # qkv projection
        + d * d + d           # attention output projection
        + 2 * d               # pre-MLP norm
        + d * mlp + mlp       # MLP in
        + mlp * d + d         # MLP out
    )
    head = d * cfg.classifier_hidden + cfg.classifier_hidden \
        + cfg.classifier_hidden * cfg.num_classes + cfg.num_classes
    return (
        n_embeddings * embedding
        + d                              # CLS token
        + (token_count(cfg) + 1) * d     # positional embedding
        + cfg.depth * layer
        + 2 * d                          # final norm
        + head
    )


def _trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) resampled until every value lies within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def _param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class PatchEmbedding:
    """Dual patch-norm embedding: LN -> linear projection -> LN."""

    def __init__(self, patch_dim: int, embed_dim: int, rng: np.random.Generator):
        self.pre_gamma = _param(np.ones(patch_dim))
        self.pre_beta = _param(np.zeros(patch_dim))
        self.w = _param(_trunc_normal(rng, (patch_dim, embed_dim)))
        self.b = _param(np.zeros(embed_dim))
        self.post_gamma = _param(np.ones(embed_dim))
        self.post_beta = _param(np.zeros(embed_dim))

    def project(self, patches: Tensor) -> Tensor:
        h = tn.layer_norm(patches, self.pre_gamma, self.pre_beta)
        h = tn.matmul(h, self.w) + self.b
        return tn.layer_norm(h, self.post_gamma, self.post_beta)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.pre_norm.gamma", self.pre_gamma),
            (f"{prefix}.pre_norm.beta", self.pre_beta),
            (f"{prefix}.proj.w", self.w),
            (f"{prefix}.proj.b", self.b),
            (f"{prefix}.post_norm.gamma", self.post_gamma),
            (f"{prefix}.post_norm.beta", self.post_beta),
        ]


class TransformerLayer:
    """Pre-LN block: x + MHA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, embed_dim: int, mlp_ratio: int, rng: np.random.Generator):
        d = embed_dim
        mlp = mlp_ratio * d
        self.ln1_gamma = _param(np.ones(d))
        self.ln1_beta = _param(np.zeros(d))
        self.w_qkv = _param(_trunc_normal(rng, (d, 3 * d)))
        self.b_qkv = _param(np.zeros(3 * d))
        self.w_out = _param(_trunc_normal(rng, (d, d)))
        self.b_out = _param(np.zeros(d))
        self.ln2_gamma = _param(np.ones(d))
        self.ln2_beta = _param(np.zeros(d))
        self.w_mlp1 = _param(_trunc_normal(rng, (d, mlp)))
        self.b_mlp1 = _param(np.zeros(mlp))
        self.w_mlp2 = _param(_trunc_normal(rng, (mlp, d)))
        self.b_mlp2 = _param(np.zeros(d))

    def forward(self, x: Tensor, heads: int, attn_sink: list | None = None) -> Tensor:
        d = x.shape[-1]
        head_dim = d // heads
        att_scale = 1.0 / math.sqrt(head_dim)

        h = tn.layer_norm(x, self.ln1_gamma, self.ln1_beta)
        qkv = tn.matmul(h, self.w_qkv) + self.b_qkv
        q = tn.narrow(qkv, 2, 0, d)
        k = tn.narrow(qkv, 2, d, d)
        v = tn.narrow(qkv, 2, 2 * d, d)
        context = []
        for i in range(heads):
            qh = tn.narrow(q, 2, i * head_dim, head_dim)
            kh = tn.narrow(k, 2, i * head_dim, head_dim)
            vh = tn.narrow(v, 2, i * head_dim, head_dim)
            scores = tn.scale(tn.matmul(qh, tn.transpose(kh, (0, 2, 1))), att_scale)
            attn = tn.softmax(scores, axis=-1)
            if attn_sink is not None:
                attn_sink.append(attn.data)
            context.append(tn.matmul(attn, vh))
        merged = tn.concat(context, axis=2)
        x = x + (tn.matmul(merged, self.w_out) + self.b_out)

        h = tn.layer_norm(x, self.ln2_gamma, self.ln2_beta)
        h = tn.gelu(tn.matmul(h, self.w_mlp1) + self.b_mlp1)
        h = tn.matmul(h, self.w_mlp2) + self.b_mlp2
        return x + h

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.ln1.gamma", self.ln1_gamma),
            (f"{prefix}.ln1.beta", self.ln1_beta),
            (f"{prefix}.qkv.w", self.w_qkv),
            (f"{prefix}.qkv.b", self.b_qkv),
            (f"{prefix}.attn_out.w", self.w_out),
            (f"{prefix}.attn_out.b", self.b_out),
            (f"{prefix}.ln2.gamma", self.ln2_gamma),
            (f"{prefix}.ln2.beta", self.ln2_beta),
            (f"{prefix}.mlp1.w", self.w_mlp1),
            (f"{prefix}.mlp1.b", self.b_mlp1),
            (f"{prefix}.mlp2.w", self.w_mlp2),
            (f"{prefix}.mlp2.b", self.b_mlp2),
        ]


class CsdModel:
    """Weights plus forward pass for one ModelConfig."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        n_embeddings = 1 if cfg.merge_type is MergeType.SHARED_AVG else cfg.channels
        self.embeddings = [
            PatchEmbedding(cfg.patch_dim, cfg.embed_dim, rng) for _ in range(n_embeddings)
        ]
        self.cls_token = _param(_trunc_normal(rng, (cfg.embed_dim,)))
        self.pos_embedding = _param(
            _trunc_normal(rng, (token_count(cfg) + 1, cfg.embed_dim))
        )
        self.layers = [
            TransformerLayer(cfg.embed_dim, cfg.mlp_ratio, rng) for _ in range(cfg.depth)
        ]
        self.final_gamma = _param(np.ones(cfg.embed_dim))
        self.final_beta = _param(np.zeros(cfg.embed_dim))
        self.head_w1 = _param(_trunc_normal(rng, (cfg.embed_dim, cfg.classifier_hidden)))
        self.head_b1 = _param(np.zeros(cfg.classifier_hidden))
        self.head_w2 = _param(_trunc_normal(rng, (cfg.classifier_hidden, cfg.num_classes)))
        self.head_b2 = _param(np.zeros(cfg.num_classes))

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for i, emb in enumerate(self.embeddings):
            out.extend(emb.named(f"embed.{i}"))
        out.append(("cls_token", self.cls_token))
        out.append(("pos_embedding", self.pos_embedding))
        for i, layer in enumerate(self.layers):
            out.extend(layer.named(f"layers.{i}"))
        out.extend([
            ("final_norm.gamma", self.final_gamma),
            ("final_norm.beta", self.final_beta),
            ("head.fc1.w", self.head_w1),
            ("head.fc1.b", self.head_b1),
            ("head.fc2.w", self.head_w2),
            ("head.fc2.b", self.head_b2),
        ])
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    # -- forward ------------------------------------------------------------

    def _check_channels(self, n: int) -> None:
        cfg = self.cfg
        if cfg.merge_type is MergeType.SHARED_AVG:
            if n < 1:
                raise ConfigError("input must have at least one channel")
        elif n != cfg.channels:
            raise ConfigError(
                f"merge type '{cfg.merge_type.value}' binds the channel count at build "
                f"time: model expects {cfg.channels} channels, input has {n}"
            )

    def _extract_patches(self, x: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if x.shape[2] != cfg.patch_freq or x.shape[3] != FRAMES_PER_SEGMENT:
            raise ShapeError(
                f"segment grid must be ({cfg.patch_freq}, {FRAMES_PER_SEGMENT}) per "
                f"channel, got {x.shape[2:]}"
            )
        windows = sliding_window_view(x, cfg.patch_time, axis=3)[:, :, :, ::cfg.time_stride, :]
        patches = windows.transpose(0, 1, 3, 2, 4)
        b, n, p = patches.shape[:3]
        return np.ascontiguousarray(patches.reshape(b, n, p, cfg.patch_dim))

    def embed_batch(self, x: np.ndarray) -> Tensor:
        """Merged (batch, tokens, D) token tensor for (batch, N, 257, 32) input."""
        cfg = self.cfg
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"expected (batch, channels, freq, time) input, got {x.shape}")
        self._check_channels(x.shape[1])
        patches = self._extract_patches(x)
        per_channel = [
            self.embeddings[0 if cfg.merge_type is MergeType.SHARED_AVG else c]
            .project(Tensor(patches[:, c]))
            for c in range(x.shape[1])
        ]
        if cfg.merge_type is MergeType.CONCAT:
            return tn.concat(per_channel, axis=1)
        merged = reduce(tn.add, per_channel)
        if cfg.merge_type is MergeType.SHARED_AVG:
            merged = tn.scale(merged, 1.0 / x.shape[1])
        return merged

    def embed(self, segment: SegmentTensor | np.ndarray) -> Tensor:
        """Token matrix (tokens, D) for a single segment."""
        data = segment.data if isinstance(segment, SegmentTensor) else np.asarray(segment)
        tokens = self.embed_batch(data[None])
        return tn.reshape(tokens, tokens.shape[1:])

    def forward_batch(self, x: np.ndarray, attn_sink: list | None = None) -> Tensor:
        """Raw logits (batch, num_classes); softmax is the caller's business."""
        cfg = self.cfg
        tokens = self.embed_batch(x)
        batch = tokens.shape[0]
        cls = tn.add(Tensor(np.zeros((batch, 1, cfg.embed_dim))), self.cls_token)
        h = tn.concat([cls, tokens], axis=1)
        h = h + self.pos_embedding
        for i, layer in enumerate(self.layers):
            try:
                h = layer.forward(h, cfg.heads, attn_sink)
            except NumericError as e:
                raise NumericError(f"non-finite activation in transformer layer {i}") from e
        h = tn.layer_norm(h, self.final_gamma, self.final_beta)
        cls_out = tn.reshape(tn.narrow(h, 1, 0, 1), (batch, cfg.embed_dim))
        hidden = tn.gelu(tn.matmul(cls_out, self.head_w1) + self.head_b1)
        return tn.matmul(hidden, self.head_w2) + self.head_b2

    def forward(self, segment: SegmentTensor | np.ndarray,
                attn_sink: list | None = None) -> Tensor:
        """Raw logits (num_classes,) for a single segment."""
        data = segment.data if isinstance(segment, SegmentTensor) else np.asarray(segment)
        logits = self.forward_batch(data[None], attn_sink)
        return tn.reshape(logits, (self.cfg.num_classes,))


def build_model(cfg: ModelConfig, seed: int = 0) -> CsdModel:
    return CsdModel(cfg, seed=seed)
