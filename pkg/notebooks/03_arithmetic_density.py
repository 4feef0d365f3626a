"""
How much arithmetic fits in the silicon
=======================================

A gate-count model of an 8x8 systolic array. Narrow fixed-point mantissas
shrink the multipliers quadratically, and the shared exponent's converters
are amortized over the block.
"""

from hbfp.density import (
    SystolicConfig, arithmetic_density, asymptotic_density, bits_per_element,
    density_table, format_table_csv, get_format, round_one_decimal,
)

# %%
print("format  bits/elem  density vs fp32")
fp32 = arithmetic_density(get_format("fp32"), SystolicConfig(W=64))
for name in ("hbfp8", "hbfp6", "hbfp4", "mx9", "mx6", "mx4", "mxfp8", "mxfp6", "mxfp4", "bf16", "fp8"):
    f = get_format(name)
    d = arithmetic_density(f, SystolicConfig(W=64))
    print(f"{name:6s}  {round_one_decimal(bits_per_element(f))!s:>9}  {d / fp32:14.1f}x")

# %%
# Wider blocks amortize the exponent logic; 64 is already close to the limit.
hb4 = get_format("hbfp4")
print("\nHBFP4 at W=64 reaches", round(arithmetic_density(hb4) / asymptotic_density(hb4), 3),
      "of its W -> infinity density")

# %%
print()
print(format_table_csv(density_table(["hbfp4", "hbfp6", "hbfp8"], [16, 64, 256, 576])))
