"""Tests for the dense kernel layer."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ossm.tensor import (
    DimensionError,
    as_tensor,
    matmul,
    rms_norm,
    silu,
    softmax_with_sink,
    swiglu_gated,
)


def matmul_oracle(a, b):
    """Naive triple loop, the independent reference for matmul."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        m = as_tensor([[1.5, -2.0, 3.0], [0.0, 4.0, -1.0], [2.0, 2.0, 2.0]])
        assert np.array_equal(matmul(np.eye(3, dtype=np.float32), m), m)

    def test_hand_computed_product(self):
        out = matmul([[1, 2], [3, 4]], [[0], [1]])
        assert np.array_equal(out, as_tensor([[2], [4]]))

    def test_zero_times_anything(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal((3, 5)).astype(np.float32)
        out = matmul(np.zeros((2, 3), dtype=np.float32), b)
        assert np.array_equal(out, np.zeros((2, 5), dtype=np.float32))

    def test_matches_triple_loop_oracle_on_integers(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            m, k, n = rng.integers(1, 9, size=3)
            a = rng.integers(-9, 10, size=(m, k)).astype(np.float32)
            b = rng.integers(-9, 10, size=(k, n)).astype(np.float32)
            assert np.array_equal(matmul(a, b), matmul_oracle(a, b).astype(np.float32))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))


class TestRmsNorm:
    def test_ones_vector_is_fixed_point(self):
        d = 6
        out = rms_norm(np.ones(d), np.ones(d), eps=1e-12)
        assert np.allclose(out, np.ones(d), atol=1e-6)

    def test_zero_vector_stays_zero(self):
        out = rms_norm(np.zeros(8), np.ones(8), eps=1e-5)
        assert np.array_equal(out, np.zeros(8, dtype=np.float32))

    def test_hand_computed_three_four(self):
        # mean(x^2) = (9 + 16) / 2 = 12.5
        out = rms_norm([3.0, 4.0], [1.0, 1.0], eps=1e-12)
        expected = np.array([3.0, 4.0]) / math.sqrt(12.5)
        assert np.allclose(out, expected, atol=1e-6)

    def test_applies_per_row_on_2d_input(self):
        x = np.array([[3.0, 4.0], [1.0, 1.0]], dtype=np.float32)
        out = rms_norm(x, [2.0, 2.0], eps=1e-12)
        assert np.allclose(out[0], 2.0 * np.array([3.0, 4.0]) / math.sqrt(12.5), atol=1e-6)
        assert np.allclose(out[1], [2.0, 2.0], atol=1e-6)

    def test_gain_length_mismatch(self):
        with pytest.raises(DimensionError):
            rms_norm(np.ones(4), np.ones(5))

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(ValueError):
            rms_norm(np.ones(4), np.ones(4), eps=0.0)

    @given(
        st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=16).filter(
            lambda xs: sum(x * x for x in xs) / len(xs) > 1e-2
        )
    )
    def test_unit_rms_property(self, xs):
        out = rms_norm(xs, np.ones(len(xs)), eps=1e-12).astype(np.float64)
        assert math.sqrt(np.mean(out * out)) == pytest.approx(1.0, abs=1e-4)


class TestSoftmaxWithSink:
    def test_neg_inf_sink_is_plain_softmax(self):
        out = softmax_with_sink([0.0, 0.0], -math.inf)
        assert np.allclose(out, [0.5, 0.5], atol=1e-6)

    def test_zero_sink_absorbs_equal_share(self):
        out = softmax_with_sink([0.0, 0.0], 0.0)
        assert np.allclose(out, [1 / 3, 1 / 3], atol=1e-6)

    def test_hand_computed_ln2_case(self):
        # exponentials 2, 1 plus sink 1: weights 2/4, 1/4
        out = softmax_with_sink([math.log(2.0), 0.0], 0.0)
        assert np.allclose(out, [0.5, 0.25], atol=1e-6)

    def test_masked_positions_get_zero(self):
        out = softmax_with_sink([5.0, 1.0, 3.0], -math.inf, mask=[True, False, True])
        assert out[1] == 0.0
        assert out.sum() == pytest.approx(1.0, abs=1e-6)

    def test_pos_inf_sink_zeroes_everything(self):
        out = softmax_with_sink([10.0, -3.0], math.inf)
        assert np.array_equal(out, np.zeros(2, dtype=np.float32))

    def test_all_masked_with_neg_inf_sink_rejected(self):
        with pytest.raises(ValueError):
            softmax_with_sink([1.0, 2.0], -math.inf, mask=[False, False])

    def test_all_masked_with_finite_sink_is_all_zero(self):
        out = softmax_with_sink([1.0, 2.0], 0.5, mask=[False, False])
        assert np.array_equal(out, np.zeros(2, dtype=np.float32))

    def test_large_scores_do_not_overflow(self):
        out = softmax_with_sink([1000.0, 999.0], 998.0)
        assert np.all(np.isfinite(out))
        assert out.sum() <= 1.0 + 1e-6

    @given(
        st.lists(st.floats(min_value=-30, max_value=30), min_size=1, max_size=12),
        st.one_of(st.just(-math.inf), st.floats(min_value=-30, max_value=30)),
    )
    def test_weights_nonneg_and_sum_bounded(self, scores, sink):
        out = softmax_with_sink(scores, sink)
        assert np.all(out >= 0.0)
        total = float(out.sum())
        assert total <= 1.0 + 1e-6
        if sink == -math.inf:
            assert total == pytest.approx(1.0, abs=1e-6)

    @given(
        st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=12),
        st.floats(min_value=-5, max_value=5),
    )
    def test_finite_sink_leaves_a_deficit(self, scores, sink):
        # Sink within a few nats of the scores: its share is large enough
        # to survive float32 rounding, so the sum is strictly below 1.
        total = float(softmax_with_sink(scores, sink).sum())
        assert total < 1.0

    @given(
        st.lists(st.floats(min_value=-20, max_value=20), min_size=1, max_size=8),
        st.floats(min_value=-20, max_value=20),
        st.floats(min_value=-15, max_value=15),
    )
    def test_shift_invariance_with_sink(self, scores, sink, c):
        base = softmax_with_sink(scores, sink)
        shifted = softmax_with_sink([s + c for s in scores], sink + c)
        assert np.allclose(base, shifted, atol=1e-6)


class TestSwigluGated:
    def test_zero_gate_kills_output(self):
        out = swiglu_gated(np.zeros(4), np.array([5.0, -5.0, 0.3, 100.0]), clamp_bound=7.0)
        assert np.array_equal(out, np.zeros(4, dtype=np.float32))

    def test_saturated_gate_with_zero_linear(self):
        bound = 7.0
        out = swiglu_gated([1e6], [0.0], clamp_bound=bound)
        assert out[0] == pytest.approx(float(silu([bound])[0]), abs=1e-6)

    def test_minus_one_linear_cancels(self):
        out = swiglu_gated([1.0], [-1.0], clamp_bound=7.0)
        assert out[0] == pytest.approx(0.0, abs=1e-7)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            swiglu_gated(np.zeros(3), np.zeros(4))

    def test_nonpositive_bound_rejected(self):
        with pytest.raises(ValueError):
            swiglu_gated(np.zeros(3), np.zeros(3), clamp_bound=0.0)

    @given(
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=16),
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=16),
        st.floats(min_value=0.5, max_value=20.0),
    )
    @settings(max_examples=200)
    def test_output_bound_property(self, gs, xs, bound):
        n = min(len(gs), len(xs))
        out = swiglu_gated(gs[:n], xs[:n], clamp_bound=bound)
        limit = float(silu([bound])[0]) * (bound + 1.0)
        assert np.all(np.abs(out) <= limit + 1e-5)
