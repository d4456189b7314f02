"""Mixture-of-experts block: linear router, top-k selection, gated expert MLPs.

The router is a plain projection from the residual stream to one score
per expert. The top-k experts (ties broken toward the lower index) are
weighted by a softmax over their scores only, and each contributes a
clamped-SwiGLU MLP evaluation. Expert matrices may be stored in MXFP4
form; they are decoded on use and the decoded copy is memoized per
parameter object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mxfp4 import QuantizedTensor, dequantize_tensor
from .tensor import matmul, swiglu_gated


class MoeConfigError(ValueError):
    """MoE configuration or weight shapes are inconsistent."""


@dataclass(frozen=True)
class MoeConfig:
    n_experts: int = 128
    top_k: int = 4
    d_model: int = 2880
    d_ff: int = 2880
    clamp_bound: float = 7.0
    router_bias: bool = False
    expert_bias: bool = False

    def __post_init__(self):
        if not 1 <= self.top_k <= self.n_experts:
            raise MoeConfigError(f"top_k {self.top_k} must lie in [1, n_experts={self.n_experts}]")
        if min(self.d_model, self.d_ff) < 1:
            raise MoeConfigError("d_model and d_ff must be positive")
        if self.clamp_bound <= 0:
            raise MoeConfigError("clamp_bound must be positive")


@dataclass(frozen=True)
class RouterOutput:
    """Selected expert ids (descending score, ties to lower index) and their weights."""

    indices: tuple
    weights: np.ndarray

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise MoeConfigError("selected expert indices must be distinct")


def route_topk(router_logits, top_k: int) -> RouterOutput:
    """Arg-top-k of the logits with softmax weights restricted to the selection."""
    logits = np.asarray(router_logits, dtype=np.float32).reshape(-1)
    if top_k > logits.shape[0]:
        raise MoeConfigError(f"top_k {top_k} exceeds expert count {logits.shape[0]}")
    # Stable sort on negated logits: equal scores keep ascending index order.
    order = np.argsort(-logits, kind="stable")[:top_k]
    selected = logits[order].astype(np.float64)
    e = np.exp(selected - selected.max())
    weights = (e / e.sum()).astype(np.float32)
    return RouterOutput(indices=tuple(int(i) for i in order), weights=weights)


@dataclass
class ExpertParams:
    """One expert's three matrices, each dense float32 or MXFP4-encoded."""

    gate: object  # [d_model, d_ff]
    lin: object  # [d_model, d_ff]
    down: object  # [d_ff, d_model]
    gate_bias: np.ndarray | None = None
    lin_bias: np.ndarray | None = None
    down_bias: np.ndarray | None = None
    _dense: dict = field(default_factory=dict, repr=False, compare=False)

    def dense(self, name: str) -> np.ndarray:
        w = getattr(self, name)
        if isinstance(w, QuantizedTensor):
            if name not in self._dense:
                self._dense[name] = dequantize_tensor(w)
            return self._dense[name]
        return w

    def invalidate_cache(self) -> None:
        self._dense.clear()


def expert_mlp(x: np.ndarray, expert: ExpertParams, clamp_bound: float) -> np.ndarray:
    """W_down applied to the clamped-SwiGLU combination of the two branches."""
    row = np.asarray(x, dtype=np.float32).reshape(1, -1)
    gate_in = matmul(row, expert.dense("gate"))[0]
    lin_in = matmul(row, expert.dense("lin"))[0]
    if expert.gate_bias is not None:
        gate_in = gate_in + expert.gate_bias
    if expert.lin_bias is not None:
        lin_in = lin_in + expert.lin_bias
    hidden = swiglu_gated(gate_in, lin_in, clamp_bound)
    out = matmul(hidden.reshape(1, -1), expert.dense("down"))[0]
    if expert.down_bias is not None:
        out = out + expert.down_bias
    return out


def moe_block(
    x: np.ndarray,
    experts: list,
    router_weight: np.ndarray,
    cfg: MoeConfig,
    router_bias: np.ndarray | None = None,
) -> np.ndarray:
    """Route `x` [d_model] to its top-k experts and mix their MLP outputs.

    The caller normalizes `x` beforehand and adds the returned vector to
    the residual stream. Contributions are summed in ascending expert
    index so the float result does not depend on score order.
    """
    x = np.asarray(x, dtype=np.float32).reshape(-1)
    if router_weight.shape != (x.shape[0], cfg.n_experts):
        raise MoeConfigError(
            f"router weight shape {tuple(router_weight.shape)} does not map "
            f"d_model={x.shape[0]} to n_experts={cfg.n_experts}"
        )
    if len(experts) != cfg.n_experts:
        raise MoeConfigError(f"expected {cfg.n_experts} experts, got {len(experts)}")
    logits = matmul(x.reshape(1, -1), router_weight)[0]
    if router_bias is not None:
        logits = logits + router_bias
    routed = route_topk(logits, cfg.top_k)

    weight_of = dict(zip(routed.indices, routed.weights))
    out = np.zeros(x.shape[0], dtype=np.float64)
    for e in sorted(routed.indices):
        out += float(weight_of[e]) * expert_mlp(x, experts[e], cfg.clamp_bound).astype(np.float64)
    return out.astype(np.float32)
