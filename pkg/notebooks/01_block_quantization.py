"""
Block floating point, one block at a time
=========================================

A block shares one exponent, set by its largest magnitude; every element
keeps a small signed integer mantissa. Small elements that sit next to a
large one lose most of their precision.
"""

import numpy as np

from hbfp.analysis import quantization_distance
from hbfp.core import Blocking, QuantConfig, fake_quantize, quantize_block, quantize_tensor

# %%
# A four-element block with 4-bit mantissas (sign + 3 magnitude bits).
cfg = QuantConfig(mantissa_bits=4, block_size=4)
block = quantize_block([1.0, 0.5, -0.25, 0.0], cfg)
print("shared exponent:", block.shared_exponent)
print("mantissas:      ", block.mantissas.tolist())

# %%
# The step is 2**(e - m). Here e = -1 and m = 3, so 0.3 lands on 5/16.
print("0.3 ->", fake_quantize([0.3, 0, 0, 0], cfg)[0])

# %%
# Rounding up past the top code saturates instead of overflowing.
print("0.999999 ->", fake_quantize([0.999999, 0, 0, 0], cfg)[0])

# %%
# One outlier coarsens its whole block: compare block sizes.
rng = np.random.default_rng(0)
x = rng.standard_normal(4096).astype(np.float32)
x[::512] *= 50
for bs in (16, 64, 256):
    err = np.abs(fake_quantize(x, QuantConfig(4, bs)) - x)
    print(f"block {bs:4d}: mean |error| {err.mean():.4f}")

# %%
# The distribution-level view: Wasserstein distance to the original.
print("\nmantissa bits  W1 distance")
for bits in (2, 3, 4, 5, 6, 8):
    print(f"{bits:13d}  {quantization_distance(x, QuantConfig(bits, 64)):.6f}")

# %%
# 2D tiling for weight matrices: 8x8 tiles with block_size 64.
w = rng.standard_normal((16, 24)).astype(np.float32)
q = quantize_tensor(w, QuantConfig(6, 64), Blocking("2d"))
print("\n16x24 matrix ->", q.n_blocks, "tiles, padding", q.padding_count)
