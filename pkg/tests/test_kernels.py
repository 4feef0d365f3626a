import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hbfp.core import ZERO_EXPONENT, BfpBlock, QuantConfig, fake_quantize, quantize_block
from hbfp.kernels import (
    accumulator_bound, bfp_dot, bfp_matmul, dot_blocks, emulated_dot_6on4,
    emulated_dot_blocks, op_count, reference_matmul,
)


def blk(e, mants, bits=6):
    return BfpBlock(e, np.array(mants, np.int8), bits)


def test_bfp_dot_example():
    cfg = QuantConfig(4, 4)
    a = quantize_block([1.0, 0.5, -0.25, 0.0], cfg)
    b = quantize_block([0.5, 0.25, 0.0, 0.0], cfg)
    r = bfp_dot(a, b)
    # mantissas [4,2,-1,0].[4,2,0,0] = 20, e_a + e_b = 1 + 0, m = 3
    assert r.integer_dot == 20
    assert r.exponent_sum == 1
    assert r.value == np.float32(0.625) == np.float32(1.0 * 0.5 + 0.5 * 0.25)


def test_bfp_dot_zero_block():
    a = blk(ZERO_EXPONENT, [0, 0, 0])
    b = blk(3, [31, -5, 1])
    r = bfp_dot(a, b)
    assert r.value == 0 and r.integer_dot == 0 and r.exponent_sum == ZERO_EXPONENT


def test_mismatched_blocks_rejected():
    with pytest.raises(ValueError, match="block size"):
        bfp_dot(blk(0, [1, 2]), blk(0, [1, 2, 3]))
    with pytest.raises(ValueError, match="width"):
        bfp_dot(blk(0, [1, 2], 6), blk(0, [1, 2], 4))
    with pytest.raises(ValueError, match="HBFP6"):
        emulated_dot_6on4(blk(0, [1, 2], 4), blk(0, [1, 2], 4))


def test_emulation_exhaustive_scalar_pairs():
    # Every magnitude pair with every sign combination, as 1-element blocks.
    mags = np.arange(32)
    a, b = np.meshgrid(mags, mags, indexing="ij")
    for sa, sb in itertools.product((1, -1), repeat=2):
        ma = (sa * a).reshape(-1, 1)
        mb = (sb * b).reshape(-1, 1)
        e = np.full(len(ma), 2)
        v1, i1 = dot_blocks(e, ma, e, mb, 6)
        v2, i2 = emulated_dot_blocks(e, ma, e, mb)
        np.testing.assert_array_equal(i1, i2)
        assert v1.tobytes() == v2.tobytes()
        np.testing.assert_array_equal(i1, (sa * a * sb * b).ravel())


@settings(max_examples=300)
@given(
    st.integers(1, 64).flatmap(lambda n: st.tuples(
        arrays(np.int8, n, elements=st.integers(-31, 31)),
        arrays(np.int8, n, elements=st.integers(-31, 31)))),
    st.integers(-60, 60), st.integers(-60, 60),
)
def test_emulation_matches_direct_dot(mants, ea, eb):
    a, b = blk(ea, mants[0]), blk(eb, mants[1])
    r1, r2 = bfp_dot(a, b), emulated_dot_6on4(a, b)
    assert r1.integer_dot == r2.integer_dot
    assert r1.exponent_sum == r2.exponent_sum
    assert np.float32(r1.value).tobytes() == np.float32(r2.value).tobytes()


def test_emulation_rejects_wide_magnitudes():
    with pytest.raises(ValueError):
        emulated_dot_blocks(0, [32], 0, [1])


@given(st.integers(1, 64), st.sampled_from([4, 5, 6, 8]))
def test_integer_dot_within_accumulator_bound(bs, bits):
    lim = (1 << (bits - 1)) - 1
    a = blk(0, [lim] * bs, bits)
    b = blk(0, [-lim] * bs, bits)
    r = bfp_dot(a, b)
    assert abs(r.integer_dot) == accumulator_bound(bs, bits)
    assert accumulator_bound(bs, bits) < 2 ** 63


def test_accumulator_bound_fits_fp32_integers_for_supported_blocks():
    assert accumulator_bound(1024, 8) < 2 ** 24
    assert accumulator_bound(576, 8) < 2 ** 24


@pytest.mark.parametrize("seed", range(10))
def test_matmul_matches_reference(seed):
    rng = np.random.default_rng(seed)
    M, K, N = rng.integers(1, 40, 3)
    cfg = QuantConfig(int(rng.choice([4, 5, 6, 8])), int(rng.choice([1, 4, 16, 64])))
    A = (rng.standard_normal((M, K)) * 10.0 ** rng.uniform(-3, 3)).astype(np.float32)
    B = (rng.standard_normal((K, N)) * 10.0 ** rng.uniform(-3, 3)).astype(np.float32)
    assert bfp_matmul(A, B, cfg).tobytes() == reference_matmul(A, B, cfg).tobytes()


def test_matmul_blocks_along_reduction_axis():
    # A row holding one large value must not coarsen the other rows.
    A = np.array([[1000.0, 0.0], [0.001, 0.0]], np.float32)
    B = np.eye(2, dtype=np.float32)
    out = bfp_matmul(A, B, QuantConfig(4, 2))
    np.testing.assert_array_equal(out[:, 0], fake_quantize(A[:, :1], QuantConfig(4, 1)).ravel())


def test_matmul_is_close_to_fp32_for_wide_mantissas():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((16, 128)).astype(np.float32)
    B = rng.standard_normal((128, 8)).astype(np.float32)
    exact = A.astype(np.float64) @ B
    err8 = np.abs(bfp_matmul(A, B, QuantConfig(8, 64)) - exact).max()
    err4 = np.abs(bfp_matmul(A, B, QuantConfig(4, 64)) - exact).max()
    assert err8 < err4 < 10


def test_matmul_shape_errors_and_empty_reduction():
    with pytest.raises(ValueError):
        bfp_matmul(np.ones((2, 3)), np.ones((4, 2)), QuantConfig(4, 4))
    with pytest.raises(ValueError):
        bfp_matmul(np.ones(3), np.ones(3), QuantConfig(4, 4))
    out = bfp_matmul(np.ones((2, 0)), np.ones((0, 3)), QuantConfig(4, 4))
    assert out.shape == (2, 3) and not out.any()


def test_matmul_is_deterministic():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((33, 200)).astype(np.float32)
    B = rng.standard_normal((200, 17)).astype(np.float32)
    cfg = QuantConfig(6, 64)
    assert bfp_matmul(A, B, cfg).tobytes() == bfp_matmul(A.copy(), B.copy(), cfg).tobytes()


def test_op_count():
    assert op_count((2, 3), (3, 5)) == 30
    with pytest.raises(ValueError):
        op_count((2, 3), (4, 5))
