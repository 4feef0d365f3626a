import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hbfp.density import (
    DEFAULT_CALIBRATION, FORMATS, TABLE_HEADER, FormatDescriptor, Level, SystolicConfig,
    arithmetic_density, asymptotic_density, bits_per_element, density_table,
    format_table_csv, get_format, load_calibration, normalized_density,
    round_one_decimal, systolic_area, with_block_size,
)

# Storage cost per element, one decimal.
TABLE_BITS = {
    "hbfp8": "8.1", "hbfp6": "6.1", "hbfp4": "4.1",
    "mx9": "9.0", "mx6": "6.0", "mx4": "4.0",
    "mxfp8": "8.2", "mxfp6": "6.2", "mxfp4": "4.2",
}


@pytest.mark.parametrize("name,expected", sorted(TABLE_BITS.items()))
def test_bits_per_element_one_decimal(name, expected):
    assert str(round_one_decimal(bits_per_element(get_format(name)))) == expected


def test_bits_per_element_exact():
    assert bits_per_element(get_format("hbfp4")) == Fraction(33, 8)
    assert bits_per_element(get_format("mx9")) == Fraction(9)
    assert bits_per_element(get_format("mxfp8")) == Fraction(33, 4)
    assert bits_per_element(get_format("fp32")) == 32
    assert str(round_one_decimal(Fraction(33, 8))) == "4.1"
    assert str(round_one_decimal(Fraction(33, 4))) == "8.2"


def test_unknown_format_and_bad_configs():
    with pytest.raises(ValueError, match="unknown format"):
        get_format("int8")
    with pytest.raises(ValueError):
        FormatDescriptor("x", "block_fixed", 3)
    with pytest.raises(ValueError):
        FormatDescriptor("x", "element_float", 3, level2=Level(2, 4))
    with pytest.raises(ValueError):
        SystolicConfig(calibration={"c_bogus": 1.0})
    with pytest.raises(ValueError):
        SystolicConfig(N=0)


def test_area_by_hand():
    # HBFP4, N=1, W=2: 2 multipliers of 4x4 bits, one 9-bit tree adder,
    # an 8-bit exponent adder, the B2F unit, and 2*N*W F2B edge lanes.
    sc = SystolicConfig(N=1, W=2)
    expected = 2 * 6 * 16 + 9 * 9 + 9 * 8 + 1200 + 2 * 2 * 200
    assert systolic_area(get_format("hbfp4"), sc) == expected
    assert arithmetic_density(get_format("hbfp4"), sc) == 2 / expected


def test_fp32_area_by_hand():
    sc = SystolicConfig(N=2, W=3)
    # 24x24 multiplier, 9-bit exponent adder, 48-bit shifter (6 stages), accumulator.
    lane = 6 * 24 * 24 + 9 * 9 + 3 * 48 * 6 + 800
    assert systolic_area(get_format("fp32"), sc) == 4 * 3 * lane


def _ratio(a, b):
    return normalized_density(get_format(a), get_format(b), SystolicConfig(W=64))


def test_headline_ratios():
    assert 1.3 <= _ratio("hbfp6", "hbfp8") <= 1.7
    assert 2.0 <= _ratio("hbfp4", "hbfp8") <= 2.6
    assert 18 <= _ratio("hbfp4", "fp32") <= 32
    assert 3.5 <= _ratio("hbfp4", "bf16") <= 6.5
    assert 2.8 <= _ratio("hbfp4", "fp8") <= 5.2


def test_format_orderings():
    # Fewer mantissa bits means denser hardware within each family.
    for fam in (["hbfp8", "hbfp6", "hbfp5", "hbfp4"], ["mx9", "mx6", "mx4"],
                ["mxfp8", "mxfp6", "mxfp4"], ["fp32", "bf16", "fp8"]):
        d = [arithmetic_density(get_format(n)) for n in fam]
        assert d == sorted(d)
    # Fixed-point blocks beat element-wise floats at equal width.
    assert arithmetic_density(get_format("hbfp8")) > arithmetic_density(get_format("mxfp8"))
    assert arithmetic_density(get_format("hbfp4")) > arithmetic_density(get_format("mxfp4"))


@given(st.sampled_from(sorted(FORMATS)), st.integers(1, 11))
def test_density_nondecreasing_in_width(name, k):
    f = get_format(name)
    d1 = arithmetic_density(with_block_size(f, 2 ** k), SystolicConfig(W=2 ** k))
    d2 = arithmetic_density(with_block_size(f, 2 ** (k + 1)), SystolicConfig(W=2 ** (k + 1)))
    assert d2 >= d1 * (1 - 1e-12)


@pytest.mark.parametrize("name", sorted(FORMATS))
def test_asymptote_matches_large_width(name):
    f = get_format(name)
    W = 2 ** 22
    big = arithmetic_density(with_block_size(f, W), SystolicConfig(W=W))
    assert big == pytest.approx(asymptotic_density(f), rel=1e-4)
    assert big <= asymptotic_density(f) * (1 + 1e-12)


@pytest.mark.parametrize("name", ["hbfp8", "hbfp6", "hbfp5", "hbfp4"])
def test_width_64_is_close_to_asymptote(name):
    f = get_format(name)
    assert arithmetic_density(f, SystolicConfig(W=64)) >= 0.90 * asymptotic_density(f)


@given(st.integers(1, 8), st.integers(2, 9))
def test_density_independent_of_N_for_plain_floats(n, w):
    f = get_format("bf16")
    a = arithmetic_density(f, SystolicConfig(N=n, W=w))
    b = arithmetic_density(f, SystolicConfig(N=1, W=1))
    assert a == pytest.approx(b)


def test_calibration_overrides(tmp_path, monkeypatch):
    p = tmp_path / "cal.json"
    p.write_text(json.dumps({"b2f": 0}))
    cal = load_calibration(p)
    assert cal["b2f"] == 0.0 and cal["c_mul"] == DEFAULT_CALIBRATION["c_mul"]
    monkeypatch.setenv("HBFP_CALIB", str(p))
    assert load_calibration() == cal
    monkeypatch.delenv("HBFP_CALIB")
    assert load_calibration() == DEFAULT_CALIBRATION
    sc = SystolicConfig(W=64, calibration={"b2f": 0.0})
    assert arithmetic_density(get_format("hbfp4"), sc) > arithmetic_density(get_format("hbfp4"))
    p.write_text(json.dumps({"nope": 1}))
    with pytest.raises(ValueError):
        load_calibration(p)
    p.write_text(json.dumps([1, 2]))
    with pytest.raises(ValueError):
        load_calibration(p)


def test_density_table_and_csv():
    rows = density_table(["hbfp4", "fp32"], [16, 64])
    assert [r[:2] for r in rows] == [["hbfp4", 16], ["hbfp4", 64], ["fp32", 16], ["fp32", 64]]
    hb4_64 = rows[1]
    assert hb4_64[3] == pytest.approx(_ratio("hbfp4", "fp32"))
    assert hb4_64[5] == "4.1" and hb4_64[6] == "33/8"
    assert rows[3][3] == pytest.approx(1.0)
    text = format_table_csv(rows)
    lines = text.splitlines()
    assert lines[0] == ",".join(TABLE_HEADER)
    assert len(lines) == 5
    assert text == format_table_csv(density_table(["hbfp4", "fp32"], [16, 64]))
