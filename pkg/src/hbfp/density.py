"""Gate-count model of an N x N systolic array and per-element storage cost.

Each PE computes a W-wide dot product per cycle, so the array performs
``N**2 * W`` multiply-accumulates per cycle. With a common clock for every
format, arithmetic density is proxied by ``N**2 * W / gates``.

Block formats (HBFP, MX) pay for integer multipliers, an adder tree, an
exponent adder and a block-to-float converter per PE, plus float-to-block
converters on the array edges. Element-wise float formats (FP32, BF16, FP8,
MXFP) pay per element for a float multiplier, exponent logic, an alignment
shifter and an accumulator.

Gate costs are calibration constants (see :data:`DEFAULT_CALIBRATION`); the
model reproduces density ratios, not absolute silicon area.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Iterable, Optional

__all__ = [
    "Level",
    "FormatDescriptor",
    "SystolicConfig",
    "DEFAULT_CALIBRATION",
    "FORMATS",
    "get_format",
    "with_block_size",
    "bits_per_element",
    "round_one_decimal",
    "systolic_area",
    "arithmetic_density",
    "asymptotic_density",
    "normalized_density",
    "density_table",
    "load_calibration",
    "TABLE_HEADER",
]

DEFAULT_CALIBRATION = {
    "c_mul": 6.0,  # gates per bit^2 of an array multiplier
    "c_add": 9.0,  # gates per bit of a ripple adder
    "c_mux": 3.0,  # gates per bit per barrel-shifter stage
    "fp32_accumulator": 800.0,  # per-element FP32 adder of element-wise formats
    "mxfp_accumulator": 380.0,  # per-element accumulator lane of MXFP
    "f2b_lane": 200.0,  # float-to-block lane (max-exponent compare + shift)
    "b2f": 1200.0,  # block-to-float shift + FP32 accumulate, one per PE
}


@dataclass(frozen=True)
class Level:
    block_size: int
    exponent_bits: int


@dataclass(frozen=True)
class FormatDescriptor:
    """A scaled number format.

    ``mantissa_bits`` counts magnitude bits only; the sign is separate. For
    element-wise floats the per-element exponent is ``level2`` with block
    size 1 and ``level1`` is the shared scale (absent for plain FP formats).
    """

    name: str
    element_kind: str  # "block_fixed" | "element_float"
    mantissa_bits: int
    level1: Optional[Level] = None
    level2: Optional[Level] = None

    def __post_init__(self):
        if self.element_kind not in ("block_fixed", "element_float"):
            raise ValueError(f"unknown element kind {self.element_kind!r}")
        if self.element_kind == "block_fixed" and self.level1 is None:
            raise ValueError("block formats need a first scaling level")
        if self.element_kind == "element_float" and (self.level2 is None or self.level2.block_size != 1):
            raise ValueError("element-wise float formats need a per-element exponent")


@dataclass(frozen=True)
class SystolicConfig:
    """Array side ``N``; ``W`` overrides the PE width (default: level-1 block size)."""

    N: int = 8
    W: Optional[int] = None
    calibration: dict = field(default_factory=lambda: dict(DEFAULT_CALIBRATION))

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.W is not None and self.W < 1:
            raise ValueError("W must be >= 1")
        unknown = set(self.calibration) - set(DEFAULT_CALIBRATION)
        if unknown:
            raise ValueError(f"unknown calibration constants: {sorted(unknown)}")
        merged = dict(DEFAULT_CALIBRATION)
        merged.update(self.calibration)
        object.__setattr__(self, "calibration", merged)


def _hbfp(m: int) -> FormatDescriptor:
    return FormatDescriptor(f"hbfp{m + 1}", "block_fixed", m, Level(64, 8))


def _mx(name: str, m: int) -> FormatDescriptor:
    return FormatDescriptor(name, "block_fixed", m, Level(16, 8), Level(2, 1))


def _mxfp(name: str, e: int, m: int) -> FormatDescriptor:
    return FormatDescriptor(name, "element_float", m, Level(32, 8), Level(1, e))


def _fp(name: str, e: int, m: int) -> FormatDescriptor:
    return FormatDescriptor(name, "element_float", m, None, Level(1, e))


FORMATS: dict[str, FormatDescriptor] = {
    "hbfp8": _hbfp(7),
    "hbfp6": _hbfp(5),
    "hbfp5": _hbfp(4),
    "hbfp4": _hbfp(3),
    "mx9": _mx("mx9", 7),
    "mx6": _mx("mx6", 4),
    "mx4": _mx("mx4", 2),
    "mxfp8": _mxfp("mxfp8", 4, 3),  # E4M3
    "mxfp6": _mxfp("mxfp6", 3, 2),  # E3M2
    "mxfp4": _mxfp("mxfp4", 2, 1),  # E2M1
    "fp32": _fp("fp32", 8, 23),
    "bf16": _fp("bf16", 8, 7),
    "fp8": _fp("fp8", 4, 3),  # E4M3
}


def get_format(name: str) -> FormatDescriptor:
    try:
        return FORMATS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown format {name!r}; known: {', '.join(FORMATS)}") from None


def with_block_size(f: FormatDescriptor, block_size: int) -> FormatDescriptor:
    """Copy of ``f`` with a different first-level block size (no-op for FP)."""
    if f.level1 is None:
        return f
    return replace(f, level1=Level(block_size, f.level1.exponent_bits))


# -- storage ------------------------------------------------------------

def bits_per_element(f: FormatDescriptor) -> Fraction:
    bits = Fraction(1 + f.mantissa_bits)
    for lvl in (f.level1, f.level2):
        if lvl is not None:
            bits += Fraction(lvl.exponent_bits, lvl.block_size)
    return bits


def round_one_decimal(x: Fraction) -> Decimal:
    """Round half to even at one decimal (4.125 -> 4.1, 8.25 -> 8.2)."""
    exact = Decimal(x.numerator) / Decimal(x.denominator)
    return exact.quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN)


# -- gate counts --------------------------------------------------------

def _mul(c: dict, w: int) -> float:
    return c["c_mul"] * w * w


def _add(c: dict, w: float) -> float:
    return c["c_add"] * w


def _shifter(c: dict, w: int, max_shift: int) -> float:
    stages = math.ceil(math.log2(max_shift + 1)) if max_shift > 0 else 0
    return c["c_mux"] * w * stages


def _adder_tree(c: dict, n: int, w: int) -> float:
    """Binary reduction of ``n`` ``w``-bit inputs; level ``l`` adders are ``w + l`` wide."""
    total, level = 0.0, 0
    while n > 1:
        level += 1
        total += (n // 2) * _add(c, w + level)
        n = -(-n // 2)
    return total


def _adder_tree_per_input_limit(c: dict, w: int) -> float:
    # sum_l 2**-l * (w + l) = w + 2
    return _add(c, w + 2)


def _width(f: FormatDescriptor, sc: SystolicConfig) -> int:
    if sc.W is not None:
        return sc.W
    return f.level1.block_size if f.level1 is not None else 64


def _block_lane(f: FormatDescriptor, c: dict) -> tuple[int, float, float]:
    """Product width, per-lane gates excluding the tree, per-block gates."""
    p = f.mantissa_bits + 1
    w = 2 * p
    lane = _mul(c, p)
    block = _add(c, f.level1.exponent_bits) + c["b2f"]
    if f.level2 is not None:
        # Second-level scale: per sub-block exponent adder and product shifter.
        b2, e2 = f.level2.block_size, f.level2.exponent_bits
        shift = 2 * ((1 << e2) - 1)
        sub_w = w + math.ceil(math.log2(b2))
        lane += (_add(c, e2 + 1) + _shifter(c, sub_w, shift)) / b2
        w += shift
    return w, lane, block


def _float_lane(f: FormatDescriptor, c: dict) -> float:
    p = f.mantissa_bits + 1
    e = f.level2.exponent_bits
    acc = c["mxfp_accumulator"] if f.level1 is not None else c["fp32_accumulator"]
    return _mul(c, p) + _add(c, e + 1) + _shifter(c, 2 * p, 2 * p - 1) + acc


def systolic_area(f: FormatDescriptor, sc: SystolicConfig = SystolicConfig()) -> float:
    """Total gate count of the N x N array for format ``f``."""
    c, N = sc.calibration, sc.N
    W = _width(f, sc)
    edge = 2 * N * W * c["f2b_lane"]
    if f.element_kind == "block_fixed":
        w, lane, block = _block_lane(f, c)
        pe = W * lane + _adder_tree(c, W, w) + block
        return N * N * pe + edge
    lane = _float_lane(f, c)
    if f.level1 is None:
        # Plain FP: per-element exponent handling and accumulators, no converters.
        return N * N * W * lane
    pe = W * lane + _add(c, f.level1.exponent_bits) + c["b2f"]
    return N * N * pe + edge


def arithmetic_density(f: FormatDescriptor, sc: SystolicConfig = SystolicConfig()) -> float:
    """MACs per cycle per gate: ``N**2 * W / systolic_area``."""
    return sc.N * sc.N * _width(f, sc) / systolic_area(f, sc)


def asymptotic_density(f: FormatDescriptor, sc: SystolicConfig = SystolicConfig()) -> float:
    """Limit of :func:`arithmetic_density` as the block size grows without bound."""
    c, N = sc.calibration, sc.N
    edge = 2 * c["f2b_lane"] / N
    if f.element_kind == "block_fixed":
        w, lane, _ = _block_lane(f, c)
        return 1.0 / (lane + _adder_tree_per_input_limit(c, w) + edge)
    lane = _float_lane(f, c)
    return 1.0 / (lane if f.level1 is None else lane + edge)


def normalized_density(f: FormatDescriptor, baseline: FormatDescriptor,
                       sc: SystolicConfig = SystolicConfig()) -> float:
    return arithmetic_density(f, sc) / arithmetic_density(baseline, sc)


def load_calibration(path=None) -> dict:
    """Read a flat ``name -> number`` JSON map; ``$HBFP_CALIB`` if no path."""
    path = path or os.environ.get("HBFP_CALIB")
    if not path:
        return dict(DEFAULT_CALIBRATION)
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(isinstance(v, (int, float)) for v in data.values()):
        raise ValueError("calibration must be a flat JSON object of numbers")
    SystolicConfig(calibration=data)  # validates names
    merged = dict(DEFAULT_CALIBRATION)
    merged.update({k: float(v) for k, v in data.items()})
    return merged


TABLE_HEADER = ["format", "block_size", "density", "norm_vs_fp32", "norm_vs_hbfp8",
                "bits_per_element", "bits_exact"]


def density_table(formats: Iterable[str], block_sizes: Iterable[int], N: int = 8,
                  calibration: Optional[dict] = None) -> list[list]:
    """Rows of :data:`TABLE_HEADER`, one per (format, block size).

    Normalization baselines are FP32 and HBFP8 at block size 64.
    """
    cal = calibration or dict(DEFAULT_CALIBRATION)
    base_sc = SystolicConfig(N=N, W=64, calibration=cal)
    fp32 = arithmetic_density(FORMATS["fp32"], base_sc)
    hbfp8 = arithmetic_density(FORMATS["hbfp8"], base_sc)
    rows = []
    for name in formats:
        for bs in block_sizes:
            f = with_block_size(get_format(name), bs)
            d = arithmetic_density(f, SystolicConfig(N=N, W=bs, calibration=cal))
            bits = bits_per_element(f)
            rows.append([f.name, bs, d, d / fp32, d / hbfp8,
                         str(round_one_decimal(bits)), str(bits)])
    return rows


def format_table_csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for r in rows:
        w.writerow([r[0], r[1], f"{r[2]:.9g}", f"{r[3]:.6f}", f"{r[4]:.6f}", r[5], r[6]])
    return buf.getvalue()
