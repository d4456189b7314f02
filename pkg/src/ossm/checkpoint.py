"""Checkpoint container: magic "OSSM", versioned JSON header, raw tensor payload.

Byte layout, all integers little-endian:

    bytes 0..3    magic "OSSM"
    bytes 4..7    u32 format version (currently 1)
    bytes 8..15   u64 header length H
    bytes 16..16+H  header: UTF-8 JSON with the model config and a tensor
                    directory (name, shape, encoding, offset, length, crc32)
    remainder     payload; directory offsets are relative to its start

Tensor sections are either "f32" (raw little-endian float32, row-major)
or "mxfp4" (u32 pad count then 17-byte blocks, see the codec module).
Save -> load round-trips bit-exactly: float tensors by bit pattern,
quantized tensors by code bytes.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .attention import AttentionParams
from .model import (
    LayerWeights,
    ModelConfig,
    TransformerModel,
    config_from_dict,
    config_to_dict,
)
from .moe import ExpertParams
from .mxfp4 import QuantizedTensor, deserialize_quantized, serialize_quantized

MAGIC = b"OSSM"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint I/O failures."""


class MalformedHeaderError(CheckpointError):
    """Magic, version, or header structure is invalid."""


class TruncatedPayloadError(CheckpointError):
    """A tensor section extends past the end of the file."""


class ChecksumError(CheckpointError):
    """A tensor section's crc32 does not match its directory entry."""


def _encode_tensor(t) -> tuple:
    if isinstance(t, QuantizedTensor):
        return "mxfp4", list(t.shape), serialize_quantized(t)
    arr = np.ascontiguousarray(np.asarray(t, dtype="<f4"))
    return "f32", list(arr.shape), arr.tobytes()


def _decode_tensor(encoding: str, shape, raw: bytes, name: str):
    if encoding == "mxfp4":
        return deserialize_quantized(raw, tuple(shape))
    if encoding == "f32":
        expected = int(np.prod(shape)) * 4 if shape else 4
        if len(raw) != expected:
            raise TruncatedPayloadError(f"tensor {name!r}: expected {expected} bytes, got {len(raw)}")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    raise MalformedHeaderError(f"tensor {name!r}: unknown encoding {encoding!r}")


def save_checkpoint(model: TransformerModel, path) -> None:
    directory = []
    payload = bytearray()
    for name, tensor in model.named_tensors():
        encoding, shape, raw = _encode_tensor(tensor)
        directory.append(
            {
                "name": name,
                "shape": shape,
                "encoding": encoding,
                "offset": len(payload),
                "length": len(raw),
                "crc32": zlib.crc32(raw),
            }
        )
        payload += raw
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "config": config_to_dict(model.cfg),
            "tensors": directory,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload)


def _read_header(blob: bytes) -> tuple:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise MalformedHeaderError("not a checkpoint: bad magic bytes")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(f"unsupported format version {version}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    if 16 + header_len > len(blob):
        raise MalformedHeaderError("header extends past end of file")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from exc
    for key in ("config", "tensors"):
        if key not in header:
            raise MalformedHeaderError(f"header missing {key!r}")
    return header, blob[16 + header_len :]


def load_checkpoint(path) -> TransformerModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _read_header(blob)
    try:
        cfg = config_from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"invalid model config in header: {exc}") from exc

    tensors = {}
    for entry in header["tensors"]:
        name = entry.get("name", "<unnamed>")
        off, length = entry["offset"], entry["length"]
        if off + length > len(payload):
            raise TruncatedPayloadError(
                f"tensor {name!r}: section [{off}, {off + length}) exceeds payload of {len(payload)} bytes"
            )
        raw = payload[off : off + length]
        if zlib.crc32(raw) != entry["crc32"]:
            raise ChecksumError(f"tensor {name!r}: crc32 mismatch")
        if name in tensors:
            raise MalformedHeaderError(f"tensor {name!r} appears twice in the directory")
        tensors[name] = _decode_tensor(entry["encoding"], entry["shape"], raw, name)

    return _assemble(cfg, tensors)


def _take(tensors: dict, name: str):
    try:
        return tensors.pop(name)
    except KeyError:
        raise MalformedHeaderError(f"checkpoint is missing required tensor {name!r}") from None


def _assemble(cfg: ModelConfig, tensors: dict) -> TransformerModel:
    embedding = _take(tensors, "embedding")
    layers = []
    for li in range(cfg.n_layers):
        attn = AttentionParams(
            wq=_take(tensors, f"layers.{li}.attn.wq"),
            wk=_take(tensors, f"layers.{li}.attn.wk"),
            wv=_take(tensors, f"layers.{li}.attn.wv"),
            wo=_take(tensors, f"layers.{li}.attn.wo"),
            sink=_take(tensors, f"layers.{li}.attn.sink"),
        )
        router_bias = (
            _take(tensors, f"layers.{li}.moe.router.bias") if cfg.moe.router_bias else None
        )
        experts = []
        for ei in range(cfg.moe.n_experts):
            prefix = f"layers.{li}.moe.expert.{ei}"
            experts.append(
                ExpertParams(
                    gate=_take(tensors, f"{prefix}.gate"),
                    lin=_take(tensors, f"{prefix}.lin"),
                    down=_take(tensors, f"{prefix}.down"),
                    gate_bias=_take(tensors, f"{prefix}.gate_bias") if cfg.moe.expert_bias else None,
                    lin_bias=_take(tensors, f"{prefix}.lin_bias") if cfg.moe.expert_bias else None,
                    down_bias=_take(tensors, f"{prefix}.down_bias") if cfg.moe.expert_bias else None,
                )
            )
        layers.append(
            LayerWeights(
                attn_norm_gain=_take(tensors, f"layers.{li}.attn_norm.gain"),
                attn=attn,
                moe_norm_gain=_take(tensors, f"layers.{li}.moe_norm.gain"),
                router=_take(tensors, f"layers.{li}.moe.router"),
                experts=experts,
                router_bias=router_bias,
            )
        )
    final_gain = _take(tensors, "final_norm.gain")
    unembedding = None if cfg.tie_embeddings else _take(tensors, "unembedding")
    if tensors:
        raise MalformedHeaderError(f"checkpoint holds unexpected tensors: {sorted(tensors)}")
    return TransformerModel(cfg, embedding, layers, final_gain, unembedding)
