"""
Integer dot products and the 6-on-4 emulation
=============================================

A BFP matmul multiplies mantissas as integers, adds shared exponents, and
scales each block's result once. A 6-bit dot product can be rebuilt exactly
from four passes of 4-bit products.
"""

import numpy as np

from hbfp.core import QuantConfig, quantize_block
from hbfp.kernels import bfp_dot, bfp_matmul, emulated_dot_6on4, reference_matmul

# %%
cfg = QuantConfig(4, 4)
a = quantize_block([1.0, 0.5, -0.25, 0.0], cfg)
b = quantize_block([0.5, 0.25, 0.0, 0.0], cfg)
r = bfp_dot(a, b)
print(f"integer dot {r.integer_dot}, exponent sum {r.exponent_sum}, value {r.value}")

# %%
# The kernel agrees bit for bit with FP32 matmul over fake-quantized inputs.
rng = np.random.default_rng(1)
A = rng.standard_normal((32, 300)).astype(np.float32)
B = rng.standard_normal((300, 16)).astype(np.float32)
for bits in (4, 6, 8):
    c = QuantConfig(bits, 64)
    same = bfp_matmul(A, B, c).tobytes() == reference_matmul(A, B, c).tobytes()
    err = np.abs(bfp_matmul(A, B, c) - A.astype(np.float64) @ B).max()
    print(f"hbfp{bits}: bit-exact vs oracle {same}, max |error| vs exact {err:.4f}")

# %%
# HBFP6 on 4-bit hardware: split each 5-bit magnitude as 16*hi + lo.
x = quantize_block(rng.standard_normal(64), QuantConfig(6, 64))
y = quantize_block(rng.standard_normal(64), QuantConfig(6, 64))
direct, emulated = bfp_dot(x, y), emulated_dot_6on4(x, y)
print("direct  ", direct.integer_dot, direct.value)
print("emulated", emulated.integer_dot, emulated.value)
