"""Block floating point encoding.

A block of ``block_size`` values shares one power-of-two exponent ``e`` chosen
so that every magnitude in the block is strictly below ``2**e``. Each element
keeps a sign and ``m = mantissa_bits - 1`` magnitude bits, and decodes as::

    value = mantissa * 2**(e - m),   |mantissa| <= 2**m - 1

i.e. the unnormalized ``2**e * 0.mantissa`` convention. Blocks that contain
only zeros carry the sentinel exponent :data:`ZERO_EXPONENT`.

Everything here is a pure function of its inputs and vectorized over blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ZERO_EXPONENT",
    "ROUNDING_MODES",
    "QuantConfig",
    "Blocking",
    "BfpBlock",
    "BfpTensor",
    "as_tensor",
    "shared_exponent",
    "quantize_block",
    "dequantize_block",
    "quantize_tensor",
    "dequantize_tensor",
    "fake_quantize",
]

#: Shared exponent of an all-zero block (also the on-disk sentinel).
ZERO_EXPONENT = -32768

ROUNDING_MODES = ("nearest_even", "nearest_away")


@dataclass(frozen=True)
class QuantConfig:
    """HBFP quantization parameters.

    ``mantissa_bits`` counts the sign bit, so HBFP4 stores 3 magnitude bits.
    """

    mantissa_bits: int
    block_size: int
    exponent_bits: int = 8
    rounding: str = "nearest_even"

    def __post_init__(self):
        if not 2 <= self.mantissa_bits <= 8:
            raise ValueError(f"mantissa_bits must be in [2, 8], got {self.mantissa_bits}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be positive, got {self.block_size}")
        if not 2 <= self.exponent_bits <= 15:
            raise ValueError(f"exponent_bits must be in [2, 15], got {self.exponent_bits}")
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {self.rounding!r}")

    @property
    def magnitude_bits(self) -> int:
        return self.mantissa_bits - 1

    @property
    def max_mantissa(self) -> int:
        return (1 << self.magnitude_bits) - 1

    @property
    def exponent_range(self) -> tuple[int, int]:
        half = 1 << (self.exponent_bits - 1)
        return -(half - 1), half

    @property
    def name(self) -> str:
        return f"hbfp{self.mantissa_bits}"

    def to_dict(self) -> dict:
        return {
            "mantissa_bits": self.mantissa_bits,
            "block_size": self.block_size,
            "exponent_bits": self.exponent_bits,
            "rounding": self.rounding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantConfig":
        return cls(**d)


@dataclass(frozen=True)
class Blocking:
    """How a tensor is cut into blocks.

    ``kind="1d"`` groups runs of ``block_size`` consecutive elements along
    ``axis`` (the reduction axis of a GEMM operand). ``kind="2d"`` cuts the
    last two dimensions into square tiles of side ``sqrt(block_size)``.
    """

    kind: str = "1d"
    axis: int = -1

    def __post_init__(self):
        if self.kind not in ("1d", "2d"):
            raise ValueError(f"blocking kind must be '1d' or '2d', got {self.kind!r}")


@dataclass(frozen=True, eq=False)
class BfpBlock:
    shared_exponent: int
    mantissas: np.ndarray
    mantissa_bits: int

    @property
    def magnitude_bits(self) -> int:
        return self.mantissa_bits - 1

    @property
    def is_zero(self) -> bool:
        return self.shared_exponent == ZERO_EXPONENT

    def __eq__(self, other):
        if not isinstance(other, BfpBlock):
            return NotImplemented
        return (
            self.shared_exponent == other.shared_exponent
            and self.mantissa_bits == other.mantissa_bits
            and np.array_equal(self.mantissas, other.mantissas)
        )


@dataclass(frozen=True, eq=False)
class BfpTensor:
    """A tensor stored as a stack of BFP blocks.

    ``exponents`` has one entry per block and ``mantissas`` has shape
    ``(n_blocks, block_size)``. Block order is row-major over the blocked
    layout (see :func:`quantize_tensor`).
    """

    logical_shape: tuple[int, ...]
    config: QuantConfig
    blocking: Blocking
    exponents: np.ndarray
    mantissas: np.ndarray
    padding_count: int

    @property
    def n_blocks(self) -> int:
        return len(self.exponents)

    @property
    def blocks(self) -> list[BfpBlock]:
        return list(self)

    def __iter__(self) -> Iterator[BfpBlock]:
        for e, mant in zip(self.exponents, self.mantissas):
            yield BfpBlock(int(e), mant, self.config.mantissa_bits)

    def __eq__(self, other):
        if not isinstance(other, BfpTensor):
            return NotImplemented
        return (
            self.logical_shape == other.logical_shape
            and self.config == other.config
            and self.blocking == other.blocking
            and self.padding_count == other.padding_count
            and np.array_equal(self.exponents, other.exponents)
            and np.array_equal(self.mantissas, other.mantissas)
        )


def as_tensor(x) -> np.ndarray:
    """Convert to a float32 array, rejecting NaN and Inf."""
    x = np.asarray(x, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value")
    return x


def _block_exponents(blocks: np.ndarray, cfg: QuantConfig) -> np.ndarray:
    # frexp: max = f * 2**k with f in [0.5, 1), so floor(log2 max) + 1 == k.
    amax = np.max(np.abs(blocks), axis=-1)
    _, k = np.frexp(amax)
    lo, hi = cfg.exponent_range
    e = np.clip(k.astype(np.int64), lo, hi)
    return np.where(amax == 0, ZERO_EXPONENT, e)


def _round(x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "nearest_even":
        return np.rint(x)
    # |x| + 0.5 can round in FP32, so ties-away works in float64.
    x = x.astype(np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _quantize_blocks(blocks: np.ndarray, cfg: QuantConfig) -> tuple[np.ndarray, np.ndarray]:
    """Quantize an array of shape (..., block_size) block-wise."""
    blocks = np.asarray(blocks, dtype=np.float32)
    if not np.all(np.isfinite(blocks)):
        raise ValueError("non-finite value")
    m = cfg.magnitude_bits
    e = _block_exponents(blocks, cfg)
    shift = np.where(e == ZERO_EXPONENT, 0, m - e)[..., None]
    # Scaling by 2**shift is exact in FP32: results stay below 2**m, and any
    # result that lands in the subnormal range is far below 0.5 and rounds
    # to zero either way.
    scaled = np.ldexp(blocks, shift.astype(np.int32))
    lim = cfg.max_mantissa
    mant = np.clip(_round(scaled, cfg.rounding), -lim, lim)
    return e, mant.astype(np.int8)


def _dequantize_blocks(e: np.ndarray, mant: np.ndarray, mantissa_bits: int) -> np.ndarray:
    m = mantissa_bits - 1
    zero = e == ZERO_EXPONENT
    shift = np.where(zero, 0, np.asarray(e) - m)[..., None]
    # mantissa <= 7 bits and 2**(e-m) >= 2**-134, so this is exact in FP32.
    out = np.ldexp(mant.astype(np.float32), shift.astype(np.int32))
    out[np.broadcast_to(zero[..., None], out.shape)] = 0.0
    return out.astype(np.float32, copy=False)


def shared_exponent(values: Sequence[float], exponent_bits: int = 8) -> int:
    """Smallest ``e`` with ``max|v| < 2**e``, or :data:`ZERO_EXPONENT`.

    >>> shared_exponent([1.0, 0.5, -0.25])
    1
    >>> shared_exponent([0.3])
    -1
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty block")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite value")
    cfg = QuantConfig(mantissa_bits=8, block_size=v.size, exponent_bits=exponent_bits)
    return int(_block_exponents(v.ravel(), cfg))


def quantize_block(values: Sequence[float], cfg: QuantConfig) -> BfpBlock:
    v = np.asarray(values, dtype=np.float32).ravel()
    if v.size != cfg.block_size:
        raise ValueError(f"expected {cfg.block_size} values, got {v.size}")
    e, mant = _quantize_blocks(v, cfg)
    return BfpBlock(int(e), mant, cfg.mantissa_bits)


def dequantize_block(block: BfpBlock) -> np.ndarray:
    return _dequantize_blocks(np.asarray(block.shared_exponent), block.mantissas, block.mantissa_bits)


def _tile_side(block_size: int) -> int:
    side = math.isqrt(block_size)
    if side * side != block_size:
        raise ValueError(f"2D tiling needs a square block_size, got {block_size}")
    return side


def _to_blocks(x: np.ndarray, cfg: QuantConfig, blocking: Blocking) -> tuple[np.ndarray, int]:
    """Reshape ``x`` into (n_blocks, block_size), zero padding the tails."""
    B = cfg.block_size
    if blocking.kind == "1d":
        if x.ndim == 0:
            x = x.reshape(1)
        moved = np.moveaxis(x, blocking.axis, -1)
        k = moved.shape[-1]
        kp = -(-k // B) * B
        padded = np.zeros(moved.shape[:-1] + (kp,), dtype=np.float32)
        padded[..., :k] = moved
        return padded.reshape(-1, B), padded.size - x.size

    if x.ndim < 2:
        raise ValueError("2D tiling needs a tensor with at least two dimensions")
    s = _tile_side(B)
    *lead, r, c = x.shape
    rp, cp = -(-r // s) * s, -(-c // s) * s
    padded = np.zeros(tuple(lead) + (rp, cp), dtype=np.float32)
    padded[..., :r, :c] = x
    tiles = padded.reshape(tuple(lead) + (rp // s, s, cp // s, s))
    tiles = np.moveaxis(tiles, -3, -2)  # (..., tile_row, tile_col, s, s)
    return tiles.reshape(-1, B), padded.size - x.size


def _from_blocks(values: np.ndarray, shape: tuple[int, ...], cfg: QuantConfig,
                 blocking: Blocking) -> np.ndarray:
    B = cfg.block_size
    if blocking.kind == "1d":
        if len(shape) == 0:
            return values.ravel()[:1].reshape(())
        axis = blocking.axis % len(shape)
        moved_shape = shape[:axis] + shape[axis + 1:] + (shape[axis],)
        k = shape[axis]
        kp = -(-k // B) * B
        out = values.reshape(moved_shape[:-1] + (kp,))[..., :k]
        return np.ascontiguousarray(np.moveaxis(out, -1, axis))

    s = _tile_side(B)
    *lead, r, c = shape
    rp, cp = -(-r // s) * s, -(-c // s) * s
    tiles = values.reshape(tuple(lead) + (rp // s, cp // s, s, s))
    tiles = np.moveaxis(tiles, -2, -3)
    return np.ascontiguousarray(tiles.reshape(tuple(lead) + (rp, cp))[..., :r, :c])


def quantize_tensor(x, cfg: QuantConfig, blocking: Blocking = Blocking()) -> BfpTensor:
    """Quantize a tensor block by block.

    1D blocking walks the reduction axis in runs of ``cfg.block_size``; other
    axes are flattened row-major in front of it. 2D blocking cuts the last two
    axes into row-major square tiles. Tail blocks are zero padded; padding
    never raises a block's exponent and always decodes to zero.
    """
    x = as_tensor(x)
    blocks, pad = _to_blocks(x, cfg, blocking)
    e, mant = _quantize_blocks(blocks, cfg)
    if blocking.kind == "2d":
        blocking = Blocking("2d")
    elif x.ndim:
        blocking = Blocking("1d", blocking.axis % x.ndim)
    return BfpTensor(tuple(x.shape), cfg, blocking, e, mant, pad)


def dequantize_tensor(q: BfpTensor) -> np.ndarray:
    values = _dequantize_blocks(q.exponents, q.mantissas, q.config.mantissa_bits)
    return _from_blocks(values, q.logical_shape, q.config, q.blocking)


def fake_quantize(x, cfg: QuantConfig, blocking: Blocking = Blocking()) -> np.ndarray:
    """Quantize then dequantize; the result lies on the BFP grid.

    Idempotent: a second application returns the same bits.
    """
    x = as_tensor(x)
    blocks, _ = _to_blocks(x, cfg, blocking)
    e, mant = _quantize_blocks(blocks, cfg)
    values = _dequantize_blocks(e, mant, cfg.mantissa_bits)
    return _from_blocks(values, tuple(x.shape), cfg, blocking)
