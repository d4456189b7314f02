"""Grouped-query causal attention with rotary embeddings and sink biases.

Layers alternate between a banded window (only the most recent
`bandwidth` keys are visible) and fully dense causal attention. Every
query head carries a learned scalar that enters the softmax denominator,
so a head can decline to attend to anything. Rotary frequencies can be
stretched per-dimension (YaRN-style) to extend the usable context of
dense layers.

Attention state lives in a KvCache owned by one generation session;
everything else here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import matmul, softmax_with_sink


class ConfigError(ValueError):
    """Attention configuration violates a structural constraint."""


class OrderingError(ValueError):
    """KV cache positions must be strictly increasing."""


BANDED = "banded"
DENSE = "dense"


@dataclass(frozen=True)
class YarnParams:
    """Frequency-interpolation parameters for long-context extension.

    Pair indices below `ramp_low` keep their original frequency, indices
    above `ramp_high` are divided by `scale_factor`, and the band in
    between blends linearly. `attn_temperature` multiplies attention
    scores on layers where the scaling is active.
    """

    scale_factor: float = 1.0
    original_context: int = 4096
    attn_temperature: float = 1.0
    ramp_low: float = 0.0
    ramp_high: float = 1.0

    def __post_init__(self):
        if self.scale_factor < 1.0:
            raise ConfigError(f"scale_factor must be >= 1, got {self.scale_factor}")
        if self.attn_temperature <= 0.0:
            raise ConfigError("attn_temperature must be positive")
        if not self.ramp_low < self.ramp_high:
            raise ConfigError("ramp_low must be strictly below ramp_high")

    @property
    def extended_context(self) -> int:
        return int(round(self.scale_factor * self.original_context))

    @classmethod
    def standard(
        cls,
        scale_factor: float,
        original_context: int = 4096,
        head_dim: int = 64,
        rope_theta: float = 150000.0,
        beta_fast: float = 32.0,
        beta_slow: float = 1.0,
    ) -> "YarnParams":
        """Ramp bounds from the usual rotation-count recipe, temperature 1 + 0.1*ln(s)."""

        def correction_dim(n_rotations: float) -> float:
            return (
                head_dim
                * math.log(original_context / (n_rotations * 2 * math.pi))
                / (2 * math.log(rope_theta))
            )

        low = math.floor(correction_dim(beta_fast))
        high = math.ceil(correction_dim(beta_slow))
        low = max(low, 0)
        high = min(high, head_dim // 2 - 1)
        if not low < high:
            low, high = 0.0, max(1.0, float(head_dim // 2 - 1))
        return cls(
            scale_factor=scale_factor,
            original_context=original_context,
            attn_temperature=1.0 + 0.1 * math.log(scale_factor) if scale_factor > 1 else 1.0,
            ramp_low=float(low),
            ramp_high=float(high),
        )


def alternating_pattern(n_layers: int, first: str = BANDED) -> tuple:
    """Strictly alternating banded/dense flags, layer 0 banded by default."""
    other = DENSE if first == BANDED else BANDED
    return tuple(first if i % 2 == 0 else other for i in range(n_layers))


@dataclass(frozen=True)
class AttentionConfig:
    n_query_heads: int = 64
    head_dim: int = 64
    n_kv_heads: int = 8
    bandwidth: int = 128
    layer_pattern: tuple = field(default_factory=lambda: alternating_pattern(36))
    rope_theta: float = 150000.0
    yarn: YarnParams = field(default_factory=YarnParams)
    max_context: int = 131072
    yarn_dense_only: bool = True  # banded layers keep unscaled frequencies

    def __post_init__(self):
        if self.head_dim % 2:
            raise ConfigError(f"head_dim must be even for rotary pairs, got {self.head_dim}")
        if self.n_query_heads % self.n_kv_heads:
            raise ConfigError(
                f"n_query_heads {self.n_query_heads} not divisible by n_kv_heads {self.n_kv_heads}"
            )
        if self.bandwidth < 1 or self.max_context < 1:
            raise ConfigError("bandwidth and max_context must be at least 1")
        if self.rope_theta <= 0:
            raise ConfigError("rope_theta must be positive")
        bad = [p for p in self.layer_pattern if p not in (BANDED, DENSE)]
        if bad:
            raise ConfigError(f"unknown layer pattern entries: {bad}")

    @property
    def group_size(self) -> int:
        return self.n_query_heads // self.n_kv_heads

    @property
    def inner_dim(self) -> int:
        return self.n_query_heads * self.head_dim

    def layer_is_banded(self, layer_index: int) -> bool:
        return self.layer_pattern[layer_index] == BANDED

    def layer_uses_yarn(self, layer_index: int) -> bool:
        return not (self.yarn_dense_only and self.layer_is_banded(layer_index))


def rope_frequencies(cfg: AttentionConfig) -> np.ndarray:
    """Per-pair base angular frequencies theta_i = rope_theta ** (-2i / head_dim)."""
    i = np.arange(cfg.head_dim // 2, dtype=np.float64)
    return cfg.rope_theta ** (-2.0 * i / cfg.head_dim)


def yarn_scale_frequencies(theta: np.ndarray, yp: YarnParams) -> np.ndarray:
    """Blend each frequency with its scaled-down copy along the ramp."""
    theta = np.asarray(theta, dtype=np.float64)
    if yp.scale_factor == 1.0:
        return theta.copy()
    idx = np.arange(theta.shape[0], dtype=np.float64)
    t = np.clip((idx - yp.ramp_low) / (yp.ramp_high - yp.ramp_low), 0.0, 1.0)
    return theta * (1.0 - t) + (theta / yp.scale_factor) * t


def _rotate_pairs(vec: np.ndarray, angles: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    cos, sin = np.cos(angles), np.sin(angles)
    out = np.empty_like(v)
    out[0::2] = v[0::2] * cos - v[1::2] * sin
    out[1::2] = v[0::2] * sin + v[1::2] * cos
    return out


def rope_apply(vec, position: float, cfg: AttentionConfig, use_yarn: bool = True) -> np.ndarray:
    """Rotate consecutive pairs of `vec` by position * theta_i (norm-preserving)."""
    v = np.asarray(vec, dtype=np.float32)
    if v.shape != (cfg.head_dim,):
        raise ConfigError(f"rope_apply expects a head vector of length {cfg.head_dim}, got {v.shape}")
    theta = rope_frequencies(cfg)
    if use_yarn:
        theta = yarn_scale_frequencies(theta, cfg.yarn)
    return _rotate_pairs(v, position * theta).astype(np.float32)


def mask_allows(i: int, j: int, layer_is_banded: bool, bandwidth: int) -> bool:
    """Causal visibility: key j is readable from query i, within the band if banded."""
    if i < 0 or j < 0:
        raise ValueError(f"positions must be non-negative, got i={i}, j={j}")
    if j > i:
        return False
    return not layer_is_banded or (i - j) < bandwidth


class _LayerCache:
    __slots__ = ("positions", "keys", "values")

    def __init__(self):
        self.positions = []
        self.keys = []  # each [n_kv_heads, head_dim], rotary already applied
        self.values = []


class KvCache:
    """Per-session rolling key/value store, one slot per layer.

    Banded layers evict entries as soon as they fall out of the window,
    so their slot never holds more than `bandwidth` entries; dense layers
    retain everything up to `max_context`.
    """

    def __init__(self, cfg: AttentionConfig, n_layers: int | None = None):
        self.cfg = cfg
        self.n_layers = len(cfg.layer_pattern) if n_layers is None else n_layers
        self._layers = [_LayerCache() for _ in range(self.n_layers)]

    def next_position(self, layer_index: int) -> int:
        pos = self._layers[layer_index].positions
        return pos[-1] + 1 if pos else 0

    def length(self, layer_index: int) -> int:
        return len(self._layers[layer_index].positions)

    def append(self, layer_index: int, position: int, k: np.ndarray, v: np.ndarray) -> None:
        layer = self._layers[layer_index]
        if layer.positions and position <= layer.positions[-1]:
            raise OrderingError(
                f"layer {layer_index}: position {position} does not advance past {layer.positions[-1]}"
            )
        if position >= self.cfg.max_context:
            raise OrderingError(f"position {position} exceeds max_context {self.cfg.max_context}")
        layer.positions.append(position)
        layer.keys.append(np.asarray(k, dtype=np.float32))
        layer.values.append(np.asarray(v, dtype=np.float32))
        if self.cfg.layer_is_banded(layer_index):
            cutoff = position - self.cfg.bandwidth
            while layer.positions and layer.positions[0] <= cutoff:
                layer.positions.pop(0)
                layer.keys.pop(0)
                layer.values.pop(0)

    def entries(self, layer_index: int):
        layer = self._layers[layer_index]
        return layer.positions, layer.keys, layer.values


@dataclass
class AttentionParams:
    """Per-layer projection weights plus one sink scalar per query head."""

    wq: np.ndarray  # [d_model, n_query_heads * head_dim]
    wk: np.ndarray  # [d_model, n_kv_heads * head_dim]
    wv: np.ndarray  # [d_model, n_kv_heads * head_dim]
    wo: np.ndarray  # [n_query_heads * head_dim, d_model]
    sink: np.ndarray  # [n_query_heads]

    def validate(self, cfg: AttentionConfig) -> None:
        nq, nkv, hd = cfg.n_query_heads, cfg.n_kv_heads, cfg.head_dim
        d_model = self.wq.shape[0]
        expect = {
            "wq": (d_model, nq * hd),
            "wk": (d_model, nkv * hd),
            "wv": (d_model, nkv * hd),
            "wo": (nq * hd, d_model),
            "sink": (nq,),
        }
        for name, shape in expect.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise ConfigError(f"attention weight {name}: expected shape {shape}, got {got}")


def gqa_attention(
    x: np.ndarray,
    layer_index: int,
    params: AttentionParams,
    cache: KvCache,
    cfg: AttentionConfig,
) -> np.ndarray:
    """Run one attention layer over `x` [seq, d_model], appending to the cache.

    Each row of `x` is assigned the next cache position. Query head h
    scores the cached keys of its group's KV head at 1/sqrt(head_dim),
    weights them through the sink softmax, and the concatenated head
    outputs go through the output projection. The caller adds the result
    to the residual stream. Processing rows one call at a time against
    the same cache yields bit-identical output to a single call.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    params.validate(cfg)
    nq, nkv, hd = cfg.n_query_heads, cfg.n_kv_heads, cfg.head_dim
    banded = cfg.layer_is_banded(layer_index)
    use_yarn = cfg.layer_uses_yarn(layer_index)
    theta = rope_frequencies(cfg)
    if use_yarn:
        theta = yarn_scale_frequencies(theta, cfg.yarn)
    temp = cfg.yarn.attn_temperature if use_yarn else 1.0
    scale = temp / math.sqrt(hd)

    q_rows = matmul(x, params.wq)
    k_rows = matmul(x, params.wk)
    v_rows = matmul(x, params.wv)

    out = np.empty((x.shape[0], params.wo.shape[1]), dtype=np.float32)
    for t in range(x.shape[0]):
        pos = cache.next_position(layer_index)
        angles = pos * theta
        k_heads = np.stack([_rotate_pairs(h, angles) for h in k_rows[t].reshape(nkv, hd)])
        cache.append(layer_index, pos, k_heads.astype(np.float32), v_rows[t].reshape(nkv, hd))

        positions, keys, values = cache.entries(layer_index)
        kmat = np.stack(keys).astype(np.float64)  # [L, nkv, hd]
        vmat = np.stack(values).astype(np.float64)
        allowed = np.array([mask_allows(pos, j, banded, cfg.bandwidth) for j in positions])

        q_heads = np.stack([_rotate_pairs(h, angles) for h in q_rows[t].reshape(nq, hd)])
        ctx = np.empty((nq, hd), dtype=np.float64)
        for h in range(nq):
            kv = h // cfg.group_size
            scores = (kmat[:, kv, :] @ q_heads[h]) * scale
            w = softmax_with_sink(scores.astype(np.float32), float(params.sink[h]), mask=allowed)
            ctx[h] = w.astype(np.float64) @ vmat[:, kv, :]
        out[t] = matmul(ctx.astype(np.float32).reshape(1, nq * hd), params.wo)[0]
    return out
