"""Integer-mantissa dot products and BFP matrix multiplication.

A BFP dot product multiplies mantissas as exact integers, adds the two shared
exponents, and scales the integer result once::

    value = sum(a_i * b_i) * 2**(e_a + e_b - 2m)

Matrix products accumulate the per-block values in FP32, left to right over
the reduction axis, so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ZERO_EXPONENT,
    Blocking,
    BfpBlock,
    QuantConfig,
    _quantize_blocks,
    _to_blocks,
    as_tensor,
    fake_quantize,
)

__all__ = [
    "DotResult",
    "ACCUMULATOR_BITS",
    "accumulator_bound",
    "dot_blocks",
    "emulated_dot_blocks",
    "bfp_dot",
    "emulated_dot_6on4",
    "bfp_matmul",
    "reference_matmul",
    "op_count",
]

ACCUMULATOR_BITS = 64


@dataclass(frozen=True)
class DotResult:
    value: np.float32
    integer_dot: int
    exponent_sum: int


def accumulator_bound(block_size: int, mantissa_bits: int) -> int:
    """Largest possible ``|integer_dot|`` for the given block shape."""
    mmax = (1 << (mantissa_bits - 1)) - 1
    return block_size * mmax * mmax


def _scale(idot: np.ndarray, ea: np.ndarray, eb: np.ndarray, m: int) -> np.ndarray:
    zero = (ea == ZERO_EXPONENT) | (eb == ZERO_EXPONENT)
    shift = np.where(zero, 0, ea + eb - 2 * m).astype(np.int32)
    # |idot| < 2**24 for every supported block, so the cast is exact.
    vals = np.ldexp(idot.astype(np.float32), shift)
    return np.where(zero, np.float32(0.0), vals).astype(np.float32)


def dot_blocks(ea, ma, eb, mb, mantissa_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized BFP dot over the last axis of ``ma``/``mb``.

    Returns ``(values, integer_dots)``.
    """
    ma = np.asarray(ma, dtype=np.int64)
    mb = np.asarray(mb, dtype=np.int64)
    idot = np.sum(ma * mb, axis=-1)
    return _scale(idot, np.asarray(ea), np.asarray(eb), mantissa_bits - 1), idot


def emulated_dot_blocks(ea, ma, eb, mb) -> tuple[np.ndarray, np.ndarray]:
    """HBFP6 dot product computed as four passes of 4-bit magnitude products.

    Each magnitude splits as ``A = 16 * A_H + A_L``; the four partial dot
    products ``A_H.B_H``, ``A_H.B_L``, ``A_L.B_H`` and ``A_L.B_L`` only ever
    multiply operands below 16, and signs are applied to each partial product.
    """
    ma = np.asarray(ma, dtype=np.int64)
    mb = np.asarray(mb, dtype=np.int64)
    sign = np.sign(ma) * np.sign(mb)
    a, b = np.abs(ma), np.abs(mb)
    if a.max(initial=0) > 31 or b.max(initial=0) > 31:
        raise ValueError("emulation needs 5-bit magnitudes")
    ah, al = a >> 4, a & 15
    bh, bl = b >> 4, b & 15
    p_hh = np.sum(sign * (ah * bh), axis=-1)
    p_hl = np.sum(sign * (ah * bl), axis=-1)
    p_lh = np.sum(sign * (al * bh), axis=-1)
    p_ll = np.sum(sign * (al * bl), axis=-1)
    idot = (p_hh << 8) + (p_hl << 4) + (p_lh << 4) + p_ll
    return _scale(idot, np.asarray(ea), np.asarray(eb), 5), idot


def _check_pair(a: BfpBlock, b: BfpBlock) -> None:
    if len(a.mantissas) != len(b.mantissas):
        raise ValueError("block size mismatch")
    if a.mantissa_bits != b.mantissa_bits:
        raise ValueError("mantissa width mismatch")


def bfp_dot(a: BfpBlock, b: BfpBlock) -> DotResult:
    _check_pair(a, b)
    value, idot = dot_blocks(a.shared_exponent, a.mantissas,
                             b.shared_exponent, b.mantissas, a.mantissa_bits)
    return _result(a, b, value, idot)


def emulated_dot_6on4(a: BfpBlock, b: BfpBlock) -> DotResult:
    """Same result as :func:`bfp_dot`, built from 4-bit partial products."""
    _check_pair(a, b)
    if a.mantissa_bits != 6:
        raise ValueError("emulation is defined for HBFP6 (5 magnitude bits) only")
    value, idot = emulated_dot_blocks(a.shared_exponent, a.mantissas,
                                      b.shared_exponent, b.mantissas)
    return _result(a, b, value, idot)


def _result(a: BfpBlock, b: BfpBlock, value, idot) -> DotResult:
    if a.is_zero or b.is_zero:
        esum = ZERO_EXPONENT
    else:
        esum = a.shared_exponent + b.shared_exponent
    return DotResult(np.float32(value), int(idot), esum)


def bfp_matmul(A, B, cfg: QuantConfig) -> np.ndarray:
    """``A @ B`` with both operands blocked along the reduction axis.

    Integer block dot products are exact (computed in float64, where every
    partial sum is an integer below 2**53); each block's scaled FP32 value is
    then added into the FP32 output in block order.
    """
    A = as_tensor(A)
    B = as_tensor(B)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("bfp_matmul expects 2-D operands")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    M, K = A.shape
    N = B.shape[1]
    bs = cfg.block_size
    if K == 0:
        return np.zeros((M, N), dtype=np.float32)
    nb = -(-K // bs)

    ea, ma = _quantize_blocks(_to_blocks(A, cfg, Blocking("1d", 1))[0], cfg)
    eb, mb = _quantize_blocks(_to_blocks(B, cfg, Blocking("1d", 0))[0], cfg)
    ea, ma = ea.reshape(M, nb), ma.reshape(M, nb, bs).astype(np.float64)
    eb, mb = eb.reshape(N, nb), mb.reshape(N, nb, bs).astype(np.float64)

    # (nb, M, bs) @ (nb, bs, N) -> (nb, M, N)
    idot = np.matmul(ma.transpose(1, 0, 2), mb.transpose(1, 2, 0))
    vals = _scale(idot, ea.T[:, :, None], eb.T[:, None, :], cfg.magnitude_bits)
    out = np.zeros((M, N), dtype=np.float32)
    for k in range(nb):
        out += vals[k]
    return out


def reference_matmul(A, B, cfg: QuantConfig) -> np.ndarray:
    """Independent route: FP32 matmul of fake-quantized operands.

    Per output element, each block's partial dot product is formed in FP32
    from the dequantized values and the partials are added left to right.
    """
    A = as_tensor(A)
    B = as_tensor(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    qa = fake_quantize(A, cfg, Blocking("1d", 1))
    qb = fake_quantize(B, cfg, Blocking("1d", 0))
    K, bs = A.shape[1], cfg.block_size
    out = np.zeros((A.shape[0], B.shape[1]), dtype=np.float32)
    for start in range(0, K, bs):
        part = np.matmul(qa[:, start:start + bs], qb[start:start + bs, :], dtype=np.float32)
        out += part
    return out


def op_count(a_shape, b_shape) -> int:
    """Multiply-accumulate count of an ``(M, K) @ (K, N)`` product."""
    (M, K), (K2, N) = a_shape, b_shape
    if K != K2:
        raise ValueError(f"dimension mismatch: {a_shape} @ {b_shape}")
    return M * K * N
