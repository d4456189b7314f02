"""Tests for model assembly, parameter accounting, and checkpoint I/O."""

import numpy as np
import pytest

from ossm.checkpoint import (
    ChecksumError,
    MalformedHeaderError,
    TruncatedPayloadError,
    load_checkpoint,
    save_checkpoint,
)
from ossm.model import (
    GIB,
    PRESET_REFERENCE_FIGURES,
    InputError,
    PresetLookupError,
    TransformerModel,
    count_parameters,
    dequantize_experts,
    estimate_checkpoint_size,
    expert_weight_params,
    init_random,
    preset_config,
    quantize_experts,
    tensor_element_count,
)
from ossm.mxfp4 import QuantizedTensor


def oracle_count_from_shapes(cfg):
    """Independent count: enumerate every tensor's shape and sum products."""
    a, m = cfg.attention, cfg.moe
    shapes = [("embedding", (cfg.vocab_size, cfg.d_model))]
    for li in range(cfg.n_layers):
        shapes += [
            (f"{li}.attn_norm", (cfg.d_model,)),
            (f"{li}.wq", (cfg.d_model, a.n_query_heads * a.head_dim)),
            (f"{li}.wk", (cfg.d_model, a.n_kv_heads * a.head_dim)),
            (f"{li}.wv", (cfg.d_model, a.n_kv_heads * a.head_dim)),
            (f"{li}.wo", (a.n_query_heads * a.head_dim, cfg.d_model)),
            (f"{li}.sink", (a.n_query_heads,)),
            (f"{li}.moe_norm", (cfg.d_model,)),
            (f"{li}.router", (cfg.d_model, m.n_experts)),
        ]
        for ei in range(m.n_experts):
            shapes += [
                (f"{li}.{ei}.gate", (cfg.d_model, m.d_ff)),
                (f"{li}.{ei}.lin", (cfg.d_model, m.d_ff)),
                (f"{li}.{ei}.down", (m.d_ff, cfg.d_model)),
            ]
    shapes.append(("final_norm", (cfg.d_model,)))
    if not cfg.tie_embeddings:
        shapes.append(("unembedding", (cfg.d_model, cfg.vocab_size)))
    return sum(int(np.prod(s)) for _, s in shapes)


class TestPresets:
    def test_120b_structure(self):
        cfg = preset_config("gpt-oss-120b")
        assert cfg.n_layers == 36
        assert cfg.moe.n_experts == 128
        assert cfg.d_model == 2880
        assert cfg.vocab_size == 201088
        assert cfg.attention.n_query_heads == 64
        assert cfg.attention.head_dim == 64
        assert cfg.attention.n_kv_heads == 8
        assert cfg.attention.bandwidth == 128
        assert cfg.attention.max_context == 131072

    def test_20b_structure(self):
        cfg = preset_config("gpt-oss-20b")
        assert cfg.n_layers == 24
        assert cfg.moe.n_experts == 32

    def test_toy_structure_and_speed(self):
        cfg = preset_config("toy")
        assert cfg.n_layers == 2
        assert cfg.d_model == 64
        assert cfg.moe.n_experts == 8
        assert cfg.moe.top_k == 2
        assert cfg.attention.n_query_heads == 4
        assert cfg.attention.n_kv_heads == 2
        assert cfg.vocab_size == 512
        model = init_random(cfg, seed=0)
        logits = model.forward([1, 2, 3])
        assert logits.shape == (3, 512)
        assert np.all(np.isfinite(logits))

    def test_unknown_preset_rejected(self):
        with pytest.raises(PresetLookupError):
            preset_config("gpt-oss-7b")

    def test_pattern_alternates_starting_banded(self):
        cfg = preset_config("gpt-oss-120b")
        assert cfg.attention.layer_pattern[:4] == ("banded", "dense", "banded", "dense")


class TestParameterAccounting:
    def test_closed_form_matches_shape_enumeration(self):
        for name in ("toy", "gpt-oss-20b", "gpt-oss-120b"):
            cfg = preset_config(name)
            assert count_parameters(cfg).total_params == oracle_count_from_shapes(cfg), name

    def test_toy_matches_instantiated_tensors_exactly(self):
        cfg = preset_config("toy")
        model = init_random(cfg, seed=1)
        brute = sum(tensor_element_count(t) for _, t in model.named_tensors())
        assert count_parameters(cfg).total_params == brute

    @pytest.mark.parametrize("name", ["gpt-oss-120b", "gpt-oss-20b"])
    def test_reference_rows_within_half_percent(self, name):
        report = count_parameters(preset_config(name))
        for key, target in PRESET_REFERENCE_FIGURES[name].items():
            if key == "checkpoint_gib":
                continue
            got = getattr(report, key)
            assert abs(got - target) / target < 0.005, f"{name} {key}: {got} vs {target}"

    def test_active_leq_total_and_counts_unembedding(self):
        cfg = preset_config("gpt-oss-120b")
        r = count_parameters(cfg)
        assert r.active_params < r.total_params
        # Active minus shared parts equals unembedding plus routed experts.
        routed = cfg.n_layers * (
            cfg.moe.top_k * 3 * cfg.d_model * cfg.moe.d_ff + cfg.d_model * cfg.moe.n_experts
        )
        assert r.active_params == r.attention_params + cfg.vocab_size * cfg.d_model + routed


class TestCheckpointSizeEstimate:
    @pytest.mark.parametrize("name", ["gpt-oss-120b", "gpt-oss-20b"])
    def test_quantized_layout_within_one_percent(self, name):
        cfg = preset_config(name)
        target = PRESET_REFERENCE_FIGURES[name]["checkpoint_gib"]
        got = estimate_checkpoint_size(cfg) / GIB
        assert abs(got - target) / target < 0.01, f"{name}: {got:.3f} GiB vs {target}"

    def test_all_16bit_counterfactual(self):
        cfg = preset_config("gpt-oss-120b")
        total = count_parameters(cfg).total_params
        assert total * 2 / GIB == pytest.approx(217.5, abs=0.5)

    def test_expert_share_dominates(self):
        cfg = preset_config("gpt-oss-120b")
        assert expert_weight_params(cfg) / count_parameters(cfg).total_params > 0.9


class TestForward:
    def test_zero_unembedding_gives_zero_logits(self):
        cfg = preset_config("toy")
        model = init_random(cfg, seed=2)
        model._unembedding = np.zeros_like(model._unembedding)
        logits = model.forward([5, 6])
        assert np.array_equal(logits, np.zeros_like(logits))

    def test_vocab_permutation_relabels_logits(self):
        cfg = preset_config("toy")
        model = init_random(cfg, seed=3)
        rng = np.random.default_rng(0)
        perm = rng.permutation(cfg.vocab_size)
        permuted = TransformerModel(
            cfg,
            model.embedding[perm],
            model.layers,
            model.final_norm_gain,
            model._unembedding[:, perm],
        )
        tok = 17
        base = model.forward([int(perm[tok])])[0]
        moved = permuted.forward([tok])[0]
        assert np.array_equal(moved, base[perm])

    def test_incremental_decoding_is_bit_identical(self):
        cfg = preset_config("toy")
        model = init_random(cfg, seed=4)
        ids = [3, 1, 4, 1, 5, 9, 2, 6]
        full = model.forward(ids)
        cache = model.new_cache()
        rows = np.stack([model.forward([t], cache)[0] for t in ids])
        assert np.array_equal(full, rows)

    def test_same_seed_same_logits(self):
        cfg = preset_config("toy")
        a = init_random(cfg, seed=7).forward([1, 2, 3])
        b = init_random(cfg, seed=7).forward([1, 2, 3])
        assert np.array_equal(a, b)
        c = init_random(cfg, seed=8).forward([1, 2, 3])
        assert not np.array_equal(a, c)

    def test_out_of_range_token_rejected(self):
        model = init_random(preset_config("toy"), seed=5)
        with pytest.raises(InputError):
            model.forward([512])
        with pytest.raises(InputError):
            model.forward([-1])

    def test_quantized_forward_error_is_small(self):
        cfg = preset_config("toy")
        model = init_random(cfg, seed=6)
        qmodel = quantize_experts(model)
        ids = [11, 45, 3, 200]
        base = model.forward(ids).astype(np.float64)
        quant = qmodel.forward(ids).astype(np.float64)
        rel_rms = np.sqrt(np.mean((quant - base) ** 2)) / np.sqrt(np.mean(base**2))
        print(f"quantized-vs-dense logit relative RMS: {rel_rms:.4f}")
        assert rel_rms < 1.0  # sanity only; the value above is the record


class TestCheckpointIO:
    def test_round_trip_bit_exact(self, tmp_path):
        model = init_random(preset_config("toy"), seed=10)
        path = tmp_path / "toy.ossm"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        for (na, ta), (nb, tb) in zip(model.named_tensors(), loaded.named_tensors()):
            assert na == nb
            assert np.array_equal(np.asarray(ta), np.asarray(tb)), na
        assert np.array_equal(model.forward([1, 2]), loaded.forward([1, 2]))

    def test_save_load_save_is_byte_identical(self, tmp_path):
        model = init_random(preset_config("toy"), seed=11)
        p1, p2 = tmp_path / "a.ossm", tmp_path / "b.ossm"
        save_checkpoint(model, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_quantized_checkpoint_round_trips_by_code_bytes(self, tmp_path):
        qmodel = quantize_experts(init_random(preset_config("toy"), seed=12))
        path = tmp_path / "q.ossm"
        save_checkpoint(qmodel, path)
        loaded = load_checkpoint(path)
        orig = dict(qmodel.named_tensors())
        for name, tensor in loaded.named_tensors():
            if isinstance(tensor, QuantizedTensor):
                assert tensor == orig[name], name
        assert np.array_equal(qmodel.forward([9]), loaded.forward([9]))

    def test_dequantize_restores_dense_encoding(self, tmp_path):
        qmodel = quantize_experts(init_random(preset_config("toy"), seed=13))
        dmodel = dequantize_experts(qmodel)
        assert not any(isinstance(t, QuantizedTensor) for _, t in dmodel.named_tensors())
        assert np.array_equal(qmodel.forward([4, 2]), dmodel.forward([4, 2]))

    def test_truncated_payload_names_tensor(self, tmp_path):
        model = init_random(preset_config("toy"), seed=14)
        path = tmp_path / "t.ossm"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-200])
        with pytest.raises(TruncatedPayloadError, match="unembedding"):
            load_checkpoint(path)

    def test_corrupted_payload_fails_checksum(self, tmp_path):
        model = init_random(preset_config("toy"), seed=15)
        path = tmp_path / "c.ossm"
        save_checkpoint(model, path)
        blob = bytearray(path.read_bytes())
        blob[-5] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ossm"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(path)

    def test_garbage_header_rejected(self, tmp_path):
        path = tmp_path / "bad2.ossm"
        import struct as _s

        path.write_bytes(b"OSSM" + _s.pack("<I", 1) + _s.pack("<Q", 8) + b"notjson!")
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(path)
