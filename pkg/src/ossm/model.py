"""Model assembly: embeddings, alternating attention/MoE blocks, presets.

Configuration presets mirror the two publicly released full-scale MoE
checkpoints this stack is shaped after ("gpt-oss-120b" / "gpt-oss-20b"),
plus a "toy" preset small enough to run forward passes in tests. The
closed-form parameter accounting reproduces the published size figures
for both full-scale presets; the toy preset is checked against the
actually instantiated tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import (
    AttentionConfig,
    AttentionParams,
    KvCache,
    YarnParams,
    alternating_pattern,
    gqa_attention,
)
from .moe import ExpertParams, MoeConfig, moe_block
from .mxfp4 import QuantizedTensor, dequantize_tensor, quantize_tensor
from .tensor import matmul, rms_norm

GIB = 2**30


class PresetLookupError(LookupError):
    """No preset registered under the requested name."""


class InputError(ValueError):
    """Token input outside the model's vocabulary."""


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    vocab_size: int
    attention: AttentionConfig
    moe: MoeConfig
    tie_embeddings: bool = False
    norm_eps: float = 1e-5

    def __post_init__(self):
        if min(self.n_layers, self.d_model, self.vocab_size) < 1:
            raise ValueError("n_layers, d_model and vocab_size must be positive")
        if len(self.attention.layer_pattern) != self.n_layers:
            raise ValueError(
                f"layer_pattern has {len(self.attention.layer_pattern)} entries "
                f"for {self.n_layers} layers"
            )
        if self.moe.d_model != self.d_model:
            raise ValueError("moe.d_model must match the residual stream width")


def _full_scale_config(n_layers: int, n_experts: int) -> ModelConfig:
    return ModelConfig(
        n_layers=n_layers,
        d_model=2880,
        vocab_size=201088,
        attention=AttentionConfig(
            n_query_heads=64,
            head_dim=64,
            n_kv_heads=8,
            bandwidth=128,
            layer_pattern=alternating_pattern(n_layers),
            rope_theta=150000.0,
            yarn=YarnParams.standard(32.0, original_context=4096, head_dim=64, rope_theta=150000.0),
            max_context=131072,
        ),
        moe=MoeConfig(n_experts=n_experts, top_k=4, d_model=2880, d_ff=2880),
    )


def preset_config(name: str) -> ModelConfig:
    if name == "gpt-oss-120b":
        return _full_scale_config(36, 128)
    if name == "gpt-oss-20b":
        return _full_scale_config(24, 32)
    if name == "toy":
        return ModelConfig(
            n_layers=2,
            d_model=64,
            vocab_size=512,
            attention=AttentionConfig(
                n_query_heads=4,
                head_dim=16,
                n_kv_heads=2,
                bandwidth=128,
                layer_pattern=alternating_pattern(2),
                rope_theta=10000.0,
                yarn=YarnParams(),
                max_context=4096,
            ),
            moe=MoeConfig(n_experts=8, top_k=2, d_model=64, d_ff=64),
        )
    raise PresetLookupError(f"unknown preset {name!r}; expected gpt-oss-120b, gpt-oss-20b, or toy")


PRESET_NAMES = ("gpt-oss-120b", "gpt-oss-20b", "toy")

# Reference figures the full-scale presets are designed to reproduce
# (parameter counts in billions, checkpoint size in GiB).
PRESET_REFERENCE_FIGURES = {
    "gpt-oss-120b": {
        "mlp_params": 114.71e9,
        "attention_params": 0.96e9,
        "embed_unembed_params": 1.16e9,
        "active_params": 5.13e9,
        "total_params": 116.83e9,
        "checkpoint_gib": 60.8,
    },
    "gpt-oss-20b": {
        "mlp_params": 19.12e9,
        "attention_params": 0.64e9,
        "embed_unembed_params": 1.16e9,
        "active_params": 3.61e9,
        "total_params": 20.91e9,
        "checkpoint_gib": 12.8,
    },
}


@dataclass(frozen=True)
class ParamReport:
    mlp_params: int
    attention_params: int
    embed_unembed_params: int
    active_params: int
    total_params: int

    def __post_init__(self):
        if self.total_params != self.mlp_params + self.attention_params + self.embed_unembed_params:
            raise ValueError("total must equal mlp + attention + embed_unembed")


def _expert_params_per_layer(cfg: ModelConfig, experts: int) -> int:
    per_expert = 3 * cfg.d_model * cfg.moe.d_ff
    if cfg.moe.expert_bias:
        per_expert += 2 * cfg.moe.d_ff + cfg.d_model
    return experts * per_expert


def _router_params_per_layer(cfg: ModelConfig) -> int:
    return cfg.d_model * cfg.moe.n_experts + (cfg.moe.n_experts if cfg.moe.router_bias else 0)


def count_parameters(cfg: ModelConfig) -> ParamReport:
    """Closed-form accounting over every tensor the model instantiates.

    Norm gains and sink scalars are booked under attention; the router
    under MLP. Active parameters count the unembedding but not the
    embedding, all of attention, the full router, and top_k of the
    experts per layer.
    """
    a = cfg.attention
    attn_per_layer = (
        cfg.d_model * a.inner_dim  # wq
        + 2 * cfg.d_model * a.n_kv_heads * a.head_dim  # wk, wv
        + a.inner_dim * cfg.d_model  # wo
        + a.n_query_heads  # sink scalars
        + 2 * cfg.d_model  # the two pre-block norm gains
    )
    attention_params = cfg.n_layers * attn_per_layer + cfg.d_model  # + final norm
    mlp_params = cfg.n_layers * (
        _expert_params_per_layer(cfg, cfg.moe.n_experts) + _router_params_per_layer(cfg)
    )
    embed_unembed = (1 if cfg.tie_embeddings else 2) * cfg.vocab_size * cfg.d_model
    active = (
        attention_params
        + cfg.vocab_size * cfg.d_model  # unembedding
        + cfg.n_layers
        * (_expert_params_per_layer(cfg, cfg.moe.top_k) + _router_params_per_layer(cfg))
    )
    return ParamReport(
        mlp_params=mlp_params,
        attention_params=attention_params,
        embed_unembed_params=embed_unembed,
        active_params=active,
        total_params=mlp_params + attention_params + embed_unembed,
    )


def expert_weight_params(cfg: ModelConfig) -> int:
    """Parameters held in expert matrices, the only tensors stored in MXFP4."""
    return cfg.n_layers * cfg.moe.n_experts * 3 * cfg.d_model * cfg.moe.d_ff


def estimate_checkpoint_size(cfg: ModelConfig) -> int:
    """Bytes under the quantized layout: experts at 4.25 bits, the rest at 16."""
    experts = expert_weight_params(cfg)
    other = count_parameters(cfg).total_params - experts
    return int(round(experts * 4.25 / 8 + other * 2))


@dataclass
class LayerWeights:
    attn_norm_gain: np.ndarray
    attn: AttentionParams
    moe_norm_gain: np.ndarray
    router: np.ndarray
    experts: list
    router_bias: np.ndarray | None = None


class TransformerModel:
    """Immutable-after-construction weights plus the pure forward pass."""

    def __init__(self, cfg: ModelConfig, embedding, layers, final_norm_gain, unembedding):
        self.cfg = cfg
        self.embedding = embedding
        self.layers = layers
        self.final_norm_gain = final_norm_gain
        self._unembedding = unembedding
        for layer in layers:
            layer.attn.validate(cfg.attention)

    @property
    def unembedding(self) -> np.ndarray:
        if self.cfg.tie_embeddings:
            return self.embedding.T
        return self._unembedding

    @property
    def vocab_size(self) -> int:
        return self.cfg.vocab_size

    def new_cache(self) -> KvCache:
        return KvCache(self.cfg.attention)

    def forward(self, token_ids, cache: KvCache | None = None) -> np.ndarray:
        """Logits [seq, vocab] for `token_ids`, continuing `cache` if given.

        Tokens run through the stack one position at a time, so a single
        call over a sequence and repeated single-token calls against the
        same cache produce identical logits.
        """
        if cache is None:
            cache = self.new_cache()
        ids = list(token_ids)
        logits = np.empty((len(ids), self.cfg.vocab_size), dtype=np.float32)
        for row, tok in enumerate(ids):
            if not 0 <= int(tok) < self.cfg.vocab_size:
                raise InputError(f"token id {tok} outside vocabulary of {self.cfg.vocab_size}")
            x = self.embedding[int(tok)].astype(np.float32)
            for li, layer in enumerate(self.layers):
                normed = rms_norm(x, layer.attn_norm_gain, self.cfg.norm_eps)
                x = x + gqa_attention(normed, li, layer.attn, cache, self.cfg.attention)[0]
                normed = rms_norm(x, layer.moe_norm_gain, self.cfg.norm_eps)
                x = x + moe_block(normed, layer.experts, layer.router, self.cfg.moe, layer.router_bias)
            x = rms_norm(x, self.final_norm_gain, self.cfg.norm_eps)
            logits[row] = matmul(x.reshape(1, -1), self.unembedding)[0]
        return logits

    # Decoding-engine protocol: prefill a prompt, then step token by token.
    def prefill(self, token_ids, cache: KvCache) -> np.ndarray:
        if not len(token_ids):
            raise InputError("prefill requires at least one token")
        return self.forward(token_ids, cache)[-1]

    def step(self, token_id: int, cache: KvCache) -> np.ndarray:
        return self.forward([token_id], cache)[0]

    def named_tensors(self):
        """Deterministic (name, tensor) walk over every parameter."""
        yield "embedding", self.embedding
        for li, layer in enumerate(self.layers):
            yield f"layers.{li}.attn_norm.gain", layer.attn_norm_gain
            yield f"layers.{li}.attn.wq", layer.attn.wq
            yield f"layers.{li}.attn.wk", layer.attn.wk
            yield f"layers.{li}.attn.wv", layer.attn.wv
            yield f"layers.{li}.attn.wo", layer.attn.wo
            yield f"layers.{li}.attn.sink", layer.attn.sink
            yield f"layers.{li}.moe_norm.gain", layer.moe_norm_gain
            yield f"layers.{li}.moe.router", layer.router
            if layer.router_bias is not None:
                yield f"layers.{li}.moe.router.bias", layer.router_bias
            for ei, expert in enumerate(layer.experts):
                yield f"layers.{li}.moe.expert.{ei}.gate", expert.gate
                yield f"layers.{li}.moe.expert.{ei}.lin", expert.lin
                yield f"layers.{li}.moe.expert.{ei}.down", expert.down
                for bname in ("gate_bias", "lin_bias", "down_bias"):
                    b = getattr(expert, bname)
                    if b is not None:
                        yield f"layers.{li}.moe.expert.{ei}.{bname}", b
        yield "final_norm.gain", self.final_norm_gain
        if not self.cfg.tie_embeddings:
            yield "unembedding", self._unembedding


def tensor_element_count(t) -> int:
    if isinstance(t, QuantizedTensor):
        return t.element_count
    return int(np.asarray(t).size)


def init_random(cfg: ModelConfig, seed: int) -> TransformerModel:
    """Fresh model with PCG64(seed)-drawn weights; same seed, same bits."""
    rng = np.random.default_rng(seed)
    a, m = cfg.attention, cfg.moe

    def draw(shape, fan_in):
        return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)

    embedding = (rng.standard_normal((cfg.vocab_size, cfg.d_model)) * 0.02).astype(np.float32)
    layers = []
    for _ in range(cfg.n_layers):
        attn = AttentionParams(
            wq=draw((cfg.d_model, a.inner_dim), cfg.d_model),
            wk=draw((cfg.d_model, a.n_kv_heads * a.head_dim), cfg.d_model),
            wv=draw((cfg.d_model, a.n_kv_heads * a.head_dim), cfg.d_model),
            wo=draw((a.inner_dim, cfg.d_model), a.inner_dim),
            sink=(rng.standard_normal(a.n_query_heads) * 0.5).astype(np.float32),
        )
        router = draw((cfg.d_model, m.n_experts), cfg.d_model)
        router_bias = np.zeros(m.n_experts, dtype=np.float32) if m.router_bias else None
        experts = [
            ExpertParams(
                gate=draw((cfg.d_model, m.d_ff), cfg.d_model),
                lin=draw((cfg.d_model, m.d_ff), cfg.d_model),
                down=draw((m.d_ff, cfg.d_model), m.d_ff),
                gate_bias=np.zeros(m.d_ff, dtype=np.float32) if m.expert_bias else None,
                lin_bias=np.zeros(m.d_ff, dtype=np.float32) if m.expert_bias else None,
                down_bias=np.zeros(cfg.d_model, dtype=np.float32) if m.expert_bias else None,
            )
            for _ in range(m.n_experts)
        ]
        layers.append(
            LayerWeights(
                attn_norm_gain=np.ones(cfg.d_model, dtype=np.float32),
                attn=attn,
                moe_norm_gain=np.ones(cfg.d_model, dtype=np.float32),
                router=router,
                experts=experts,
                router_bias=router_bias,
            )
        )
    final_gain = np.ones(cfg.d_model, dtype=np.float32)
    unembedding = None
    if not cfg.tie_embeddings:
        unembedding = draw((cfg.d_model, cfg.vocab_size), cfg.d_model)
    return TransformerModel(cfg, embedding, layers, final_gain, unembedding)


def quantize_experts(model: TransformerModel) -> TransformerModel:
    """Copy of the model with every dense expert matrix re-encoded as MXFP4."""
    layers = []
    for layer in model.layers:
        experts = [
            replace(
                e,
                gate=e.gate if isinstance(e.gate, QuantizedTensor) else quantize_tensor(e.gate),
                lin=e.lin if isinstance(e.lin, QuantizedTensor) else quantize_tensor(e.lin),
                down=e.down if isinstance(e.down, QuantizedTensor) else quantize_tensor(e.down),
                _dense={},
            )
            for e in layer.experts
        ]
        layers.append(replace(layer, experts=experts))
    return TransformerModel(
        model.cfg, model.embedding, layers, model.final_norm_gain, model._unembedding
    )


def dequantize_experts(model: TransformerModel) -> TransformerModel:
    """Copy of the model with every MXFP4 expert matrix decoded to dense float32."""
    layers = []
    for layer in model.layers:
        experts = [
            replace(
                e,
                gate=dequantize_tensor(e.gate) if isinstance(e.gate, QuantizedTensor) else e.gate,
                lin=dequantize_tensor(e.lin) if isinstance(e.lin, QuantizedTensor) else e.lin,
                down=dequantize_tensor(e.down) if isinstance(e.down, QuantizedTensor) else e.down,
                _dense={},
            )
            for e in layer.experts
        ]
        layers.append(replace(layer, experts=experts))
    return TransformerModel(
        model.cfg, model.embedding, layers, model.final_norm_gain, model._unembedding
    )


def config_to_dict(cfg: ModelConfig) -> dict:
    a, m = cfg.attention, cfg.moe
    return {
        "n_layers": cfg.n_layers,
        "d_model": cfg.d_model,
        "vocab_size": cfg.vocab_size,
        "tie_embeddings": cfg.tie_embeddings,
        "norm_eps": cfg.norm_eps,
        "attention": {
            "n_query_heads": a.n_query_heads,
            "head_dim": a.head_dim,
            "n_kv_heads": a.n_kv_heads,
            "bandwidth": a.bandwidth,
            "layer_pattern": list(a.layer_pattern),
            "rope_theta": a.rope_theta,
            "max_context": a.max_context,
            "yarn_dense_only": a.yarn_dense_only,
            "yarn": {
                "scale_factor": a.yarn.scale_factor,
                "original_context": a.yarn.original_context,
                "attn_temperature": a.yarn.attn_temperature,
                "ramp_low": a.yarn.ramp_low,
                "ramp_high": a.yarn.ramp_high,
            },
        },
        "moe": {
            "n_experts": m.n_experts,
            "top_k": m.top_k,
            "d_model": m.d_model,
            "d_ff": m.d_ff,
            "clamp_bound": m.clamp_bound,
            "router_bias": m.router_bias,
            "expert_bias": m.expert_bias,
        },
    }


def config_from_dict(data: dict) -> ModelConfig:
    a = data["attention"]
    m = data["moe"]
    return ModelConfig(
        n_layers=data["n_layers"],
        d_model=data["d_model"],
        vocab_size=data["vocab_size"],
        tie_embeddings=data["tie_embeddings"],
        norm_eps=data["norm_eps"],
        attention=AttentionConfig(
            n_query_heads=a["n_query_heads"],
            head_dim=a["head_dim"],
            n_kv_heads=a["n_kv_heads"],
            bandwidth=a["bandwidth"],
            layer_pattern=tuple(a["layer_pattern"]),
            rope_theta=a["rope_theta"],
            max_context=a["max_context"],
            yarn_dense_only=a["yarn_dense_only"],
            yarn=YarnParams(**a["yarn"]),
        ),
        moe=MoeConfig(**m),
    )
