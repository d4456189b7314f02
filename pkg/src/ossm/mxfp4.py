"""MXFP4 block codec: 32 FP4 (E2M1) elements sharing one power-of-two scale.

A block stores 32 four-bit codes (1 sign bit, 2 exponent bits, 1 mantissa
bit) plus a signed 8-bit scale exponent: 136 bits for 32 elements, i.e.
4.25 bits per parameter. Decoded magnitudes are drawn from the E2M1
lattice {0, 0.5, 1, 1.5, 2, 3, 4, 6} times 2**scale_exp.

Encoding picks the smallest scale whose top code covers max|value|,
rounds every element to the nearest representable point (ties to the
even code), then re-derives the minimal scale from the *rounded* values.
That last canonicalization step makes quantize(dequantize(block)) return
byte-identical blocks rather than merely value-identical ones.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 32
BLOCK_BYTES = 17  # 16 bytes of packed codes + 1 scale byte
BITS_PER_BLOCK = BLOCK_BYTES * 8

E2M1_MAGNITUDES = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0])
# Midpoints between adjacent magnitudes; all exactly representable.
_MIDPOINTS = (E2M1_MAGNITUDES[:-1] + E2M1_MAGNITUDES[1:]) / 2.0

SCALE_EXP_MIN = -128
SCALE_EXP_MAX = 127


class EncodingError(ValueError):
    """Input cannot be encoded as an MXFP4 block."""


@dataclass(frozen=True)
class MxBlock:
    """32 four-bit element codes plus one shared power-of-two exponent."""

    codes: bytes  # 32 entries, one code per byte, each in [0, 16)
    scale_exp: int

    def __post_init__(self):
        if len(self.codes) != BLOCK_SIZE:
            raise EncodingError(f"block must hold {BLOCK_SIZE} codes, got {len(self.codes)}")
        if any(c > 0xF for c in self.codes):
            raise EncodingError("element codes must fit in 4 bits")
        if not SCALE_EXP_MIN <= self.scale_exp <= SCALE_EXP_MAX:
            raise EncodingError(f"scale_exp {self.scale_exp} outside signed 8-bit range")

    def to_bytes(self) -> bytes:
        """17-byte layout: codes packed two per byte (low nibble first), then the scale."""
        packed = bytearray(BLOCK_BYTES)
        for i in range(0, BLOCK_SIZE, 2):
            packed[i // 2] = self.codes[i] | (self.codes[i + 1] << 4)
        packed[16:17] = struct.pack("<b", self.scale_exp)
        return bytes(packed)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "MxBlock":
        if len(raw) != BLOCK_BYTES:
            raise EncodingError(f"block record must be {BLOCK_BYTES} bytes, got {len(raw)}")
        codes = bytearray(BLOCK_SIZE)
        for i in range(16):
            codes[2 * i] = raw[i] & 0xF
            codes[2 * i + 1] = raw[i] >> 4
        (scale_exp,) = struct.unpack("<b", raw[16:17])
        return cls(codes=bytes(codes), scale_exp=scale_exp)


def _min_covering_exp(max_abs: float) -> int:
    """Smallest integer E with 6 * 2**E >= max_abs, clamped to the scale range."""
    if max_abs == 0.0:
        return 0
    e = int(np.ceil(np.log2(max_abs / 6.0)))
    while 6.0 * 2.0**e < max_abs:
        e += 1
    while e > SCALE_EXP_MIN and 6.0 * 2.0 ** (e - 1) >= max_abs:
        e -= 1
    return int(np.clip(e, SCALE_EXP_MIN, SCALE_EXP_MAX))


def _round_to_lattice(scaled_mags: np.ndarray) -> np.ndarray:
    """Nearest E2M1 magnitude index per element, ties resolved to the even code."""
    up = np.searchsorted(_MIDPOINTS, scaled_mags, side="right")
    idx = up.copy()
    lower = np.maximum(up - 1, 0)
    tie = scaled_mags == _MIDPOINTS[lower]
    # Tie between lattice j and j+1 (j = up-1): exactly one has an even code.
    j = up[tie] - 1
    idx[tie] = j + (j % 2)
    return idx


def quantize_block(values) -> MxBlock:
    """Encode exactly 32 finite reals as one MXFP4 block."""
    vals = np.asarray(values, dtype=np.float32)
    if vals.shape != (BLOCK_SIZE,):
        raise EncodingError(f"quantize_block expects {BLOCK_SIZE} values, got shape {tuple(vals.shape)}")
    if not np.all(np.isfinite(vals)):
        raise EncodingError("quantize_block: input contains non-finite values")
    v64 = vals.astype(np.float64)
    exp = _min_covering_exp(float(np.max(np.abs(v64))))

    # Dividing by a power of two is exact, so tie detection is exact too.
    mags = np.abs(v64) / 2.0**exp
    idx = _round_to_lattice(np.minimum(mags, E2M1_MAGNITUDES[-1]))

    # Canonicalize: the rounded values may fit a strictly smaller scale.
    rounded_max = float(E2M1_MAGNITUDES[idx].max() * 2.0**exp)
    if rounded_max == 0.0:
        exp = 0  # canonical all-zero block
    else:
        canon = _min_covering_exp(rounded_max)
        if canon < exp:
            # Shifted magnitudes stay on the lattice: v*2**k <= 6 for every
            # retained v, and doubling maps {0,.5,1,1.5,2,3} into the lattice.
            shifted = E2M1_MAGNITUDES[idx] * 2.0 ** (exp - canon)
            idx = np.searchsorted(E2M1_MAGNITUDES, shifted)
            exp = canon

    sign_bit = (np.signbit(v64) & (idx > 0)).astype(np.uint8) << 3
    codes = (idx.astype(np.uint8) | sign_bit).tobytes()
    return MxBlock(codes=codes, scale_exp=exp)


def dequantize_block(block: MxBlock) -> np.ndarray:
    """Decode a block to 32 float32 values: sign * magnitude * 2**scale_exp."""
    raw = np.frombuffer(block.codes, dtype=np.uint8)
    mags = E2M1_MAGNITUDES[raw & 0x7]
    signs = np.where(raw & 0x8, -1.0, 1.0)
    return np.ldexp(signs * mags, block.scale_exp).astype(np.float32)


@dataclass(frozen=True)
class QuantizedTensor:
    """A tensor flattened row-major into MXFP4 blocks, zero-padded at the tail."""

    shape: tuple
    blocks: tuple
    pad_count: int

    @property
    def element_count(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def __post_init__(self):
        expected = (self.element_count + BLOCK_SIZE - 1) // BLOCK_SIZE
        if len(self.blocks) != expected:
            raise EncodingError(
                f"expected {expected} blocks for shape {self.shape}, got {len(self.blocks)}"
            )
        if self.pad_count != len(self.blocks) * BLOCK_SIZE - self.element_count:
            raise EncodingError("pad_count inconsistent with shape and block count")


def quantize_tensor(arr) -> QuantizedTensor:
    """Quantize a dense array; the flat tail is padded with zeros to a full block."""
    arr = np.asarray(arr, dtype=np.float32)
    flat = arr.reshape(-1)
    pad = (-flat.size) % BLOCK_SIZE
    if pad:
        flat = np.concatenate([flat, np.zeros(pad, dtype=np.float32)])
    blocks = tuple(
        quantize_block(flat[i : i + BLOCK_SIZE]) for i in range(0, flat.size, BLOCK_SIZE)
    )
    return QuantizedTensor(shape=tuple(arr.shape), blocks=blocks, pad_count=pad)


def dequantize_tensor(q: QuantizedTensor) -> np.ndarray:
    if not q.blocks:
        return np.zeros(q.shape, dtype=np.float32)
    flat = np.concatenate([dequantize_block(b) for b in q.blocks])
    n = q.element_count
    return flat[:n].reshape(q.shape)


def storage_bits(q: QuantizedTensor) -> float:
    """Stored bits divided by element count; exactly 4.25 when unpadded."""
    return len(q.blocks) * BITS_PER_BLOCK / q.element_count


def serialize_quantized(q: QuantizedTensor) -> bytes:
    """Wire form: u32 little-endian pad_count, then the 17-byte blocks in order."""
    out = bytearray(struct.pack("<I", q.pad_count))
    for b in q.blocks:
        out += b.to_bytes()
    return bytes(out)


def deserialize_quantized(raw: bytes, shape) -> QuantizedTensor:
    if len(raw) < 4:
        raise EncodingError("quantized section shorter than its pad_count header")
    (pad_count,) = struct.unpack("<I", raw[:4])
    body = raw[4:]
    if len(body) % BLOCK_BYTES:
        raise EncodingError(f"quantized payload length {len(body)} is not a multiple of {BLOCK_BYTES}")
    blocks = tuple(
        MxBlock.from_bytes(body[i : i + BLOCK_BYTES]) for i in range(0, len(body), BLOCK_BYTES)
    )
    return QuantizedTensor(shape=tuple(shape), blocks=blocks, pad_count=pad_count)
