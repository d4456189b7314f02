"""Dense numeric kernels shared by every layer of the stack.

Values are numpy float32 arrays throughout ("tensors"). Reductions that
feed a rounding step (matmul, mean-of-squares, softmax denominators) are
accumulated in float64 and cast back to float32, so results are
reproducible run-to-run and stable against platform SIMD differences.
All public operations are pure and return freshly allocated arrays.
"""

from __future__ import annotations

import numpy as np

Tensor = np.ndarray


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def as_tensor(values, shape=None) -> Tensor:
    """Coerce array-like input to a float32 tensor, optionally reshaped."""
    t = np.asarray(values, dtype=np.float32)
    if shape is not None:
        t = t.reshape(shape)
    return t


def assert_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t)):
        raise FloatingPointError(f"{what} contains non-finite values")
    return t


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m×k] and b [k×n].

    Products of float32 operands are exact in float64, so accumulating in
    float64 and rounding once keeps the result independent of the
    underlying BLAS summation order in practice. Each output row depends
    only on the corresponding row of `a`, which is what makes incremental
    decoding bit-identical to full-sequence evaluation downstream.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree for shapes {tuple(a.shape)} and {tuple(b.shape)}"
        )
    out = (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)
    return assert_finite(out, "matmul result")


def matvec(a: Tensor, x: Tensor) -> Tensor:
    """a [m×k] times vector x [k] -> [m], same accumulation rules as matmul."""
    return matmul(a, as_tensor(x).reshape(-1, 1)).reshape(-1)


def rms_norm(x: Tensor, gain: Tensor, eps: float = 1e-5) -> Tensor:
    """Root-mean-square normalization along the last axis.

    y_i = gain_i * x_i / sqrt(mean(x**2) + eps), applied per last-axis
    vector. `eps` keeps the zero vector mapped to zero.
    """
    x = as_tensor(x)
    gain = as_tensor(gain)
    if eps <= 0:
        raise ValueError(f"rms_norm: eps must be positive, got {eps}")
    if gain.ndim != 1 or x.shape[-1] != gain.shape[0]:
        raise DimensionError(
            f"rms_norm: last axis {x.shape[-1]} does not match gain length {gain.shape[0]}"
        )
    x64 = x.astype(np.float64)
    ms = np.mean(x64 * x64, axis=-1, keepdims=True)
    out = (x64 / np.sqrt(ms + eps) * gain.astype(np.float64)).astype(np.float32)
    return assert_finite(out, "rms_norm result")


def softmax_with_sink(scores: Tensor, sink_bias: float, mask=None) -> Tensor:
    """Softmax whose denominator carries one extra exp(sink_bias) term.

    w_i = exp(scores_i - m) / (exp(sink_bias - m) + sum_j exp(scores_j - m))
    over unmasked positions j, with m = max(sink_bias, max unmasked score)
    for overflow safety. Masked positions get weight 0. The weights sum to
    at most 1; the deficit is the share absorbed by the sink, so a head
    can direct its probability mass at nothing. sink_bias = -inf recovers
    the standard softmax, sink_bias = +inf drives every weight to 0.

    `mask` is a boolean array (True = position participates); None means
    all positions participate.
    """
    scores = as_tensor(scores)
    if scores.ndim != 1:
        raise DimensionError(f"softmax_with_sink: expected 1-D scores, got shape {tuple(scores.shape)}")
    if mask is None:
        mask = np.ones(scores.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != scores.shape:
            raise DimensionError(
                f"softmax_with_sink: mask shape {tuple(mask.shape)} does not match scores {tuple(scores.shape)}"
            )
    if math_isneginf(sink_bias) and not mask.any():
        raise ValueError("softmax_with_sink: all positions masked and sink_bias is -inf")
    out = np.zeros(scores.shape, dtype=np.float64)
    if math_isposinf(sink_bias):
        return out.astype(np.float32)

    s = scores[mask].astype(np.float64)
    m = float(sink_bias) if s.size == 0 else max(float(sink_bias), float(s.max()))
    # m is finite here: sink_bias=-inf implies at least one unmasked score.
    e = np.exp(s - m)
    denom = np.exp(sink_bias - m) + e.sum()
    out[mask] = e / denom
    return assert_finite(out.astype(np.float32), "softmax_with_sink result")


def silu(z: Tensor) -> Tensor:
    """z * sigmoid(z), computed in float64 for mid-range accuracy."""
    z64 = as_tensor(z).astype(np.float64)
    return (z64 / (1.0 + np.exp(-z64))).astype(np.float32)


def swiglu_gated(gate_in: Tensor, lin_in: Tensor, clamp_bound: float = 7.0) -> Tensor:
    """Clamped SwiGLU with a unit shift on the linear branch.

    y = silu(clamp(gate_in)) * (clamp(lin_in) + 1), both branches clamped
    symmetrically to [-clamp_bound, +clamp_bound]. The +1 keeps a residual
    path through the linear branch; together with the clamp this bounds
    |y| by silu(clamp_bound) * (clamp_bound + 1).
    """
    gate_in = as_tensor(gate_in)
    lin_in = as_tensor(lin_in)
    if clamp_bound <= 0:
        raise ValueError(f"swiglu_gated: clamp_bound must be positive, got {clamp_bound}")
    if gate_in.shape != lin_in.shape:
        raise DimensionError(
            f"swiglu_gated: branch shapes differ: {tuple(gate_in.shape)} vs {tuple(lin_in.shape)}"
        )
    g = np.clip(gate_in, -clamp_bound, clamp_bound)
    x = np.clip(lin_in, -clamp_bound, clamp_bound)
    out = (silu(g).astype(np.float64) * (x.astype(np.float64) + 1.0)).astype(np.float32)
    return assert_finite(out, "swiglu_gated result")


def math_isneginf(v: float) -> bool:
    return np.isinf(v) and v < 0


def math_isposinf(v: float) -> bool:
    return np.isinf(v) and v > 0
