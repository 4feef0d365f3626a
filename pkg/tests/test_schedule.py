import pytest
from hypothesis import given
from hypothesis import strategies as st

from hbfp.core import QuantConfig
from hbfp.training import BoosterSchedule, NumericMode, layer_configs, layer_role, schedule_lookup

HB4 = QuantConfig(4, 64)
HB6 = QuantConfig(6, 64)


def test_default_recipe():
    s = BoosterSchedule()
    assert s.default_cfg == HB4 and s.boost_cfg == HB6
    assert s.boost_last_epochs == 1 and s.boost_first_last_layers


def test_lookup_examples():
    s = BoosterSchedule()
    assert schedule_lookup(s, 0, "middle", 10) == HB4
    assert schedule_lookup(s, 8, "middle", 10) == HB4
    assert schedule_lookup(s, 9, "middle", 10) == HB6
    assert schedule_lookup(s, 0, "first", 10) == HB6
    assert schedule_lookup(s, 0, "last", 10) == HB6
    no_layers = BoosterSchedule(boost_first_last_layers=False)
    assert schedule_lookup(no_layers, 0, "first", 10) == HB4


def test_lookup_errors():
    with pytest.raises(ValueError):
        schedule_lookup(BoosterSchedule(), 0, "hidden", 10)
    with pytest.raises(ValueError):
        schedule_lookup(BoosterSchedule(boost_last_epochs=5), 0, "middle", 3)
    with pytest.raises(ValueError):
        BoosterSchedule(default_cfg=HB6, boost_cfg=HB4)
    with pytest.raises(ValueError):
        BoosterSchedule(boost_last_epochs=-1)


@given(st.integers(1, 50), st.integers(0, 5), st.booleans(), st.data())
def test_lookup_properties(epochs, k, boost_layers, data):
    k = min(k, epochs)
    s = BoosterSchedule(boost_last_epochs=k, boost_first_last_layers=boost_layers)
    epoch = data.draw(st.integers(0, epochs - 1))
    role = data.draw(st.sampled_from(["first", "middle", "last"]))
    cfg = schedule_lookup(s, epoch, role, epochs)
    assert cfg in (s.default_cfg, s.boost_cfg)
    if epoch >= epochs - k:
        assert cfg == s.boost_cfg
    if boost_layers and role != "middle":
        assert cfg == s.boost_cfg
    if role == "middle" and epoch < epochs - k:
        assert cfg == s.default_cfg
    # Boosting never lowers precision.
    assert cfg.mantissa_bits >= s.default_cfg.mantissa_bits


def test_layer_roles():
    assert [layer_role(i, 4) for i in range(4)] == ["first", "middle", "middle", "last"]
    assert layer_role(0, 1) == "first"


def test_layer_configs_per_mode():
    assert layer_configs(NumericMode(), 0, 3, 3) == [None, None, None]
    assert layer_configs(NumericMode("hbfp", HB6), 0, 3, 3) == [HB6] * 3
    b = NumericMode("booster")
    assert layer_configs(b, 0, 3, 4) == [HB6, HB4, HB4, HB6]
    assert layer_configs(b, 2, 3, 4) == [HB6] * 4


def test_numeric_mode_serialization():
    for m in (NumericMode(), NumericMode("hbfp", QuantConfig(5, 16)),
              NumericMode("booster", schedule=BoosterSchedule(boost_last_epochs=2))):
        assert NumericMode.from_dict(m.to_dict()) == m
    assert NumericMode("hbfp", HB6).label == "hbfp6@64"
    assert NumericMode("booster").label == "booster"
    with pytest.raises(ValueError):
        NumericMode("int8")
    with pytest.raises(ValueError):
        NumericMode("hbfp")
    with pytest.raises(ValueError):
        NumericMode.from_dict({"mode": "fp32", "block_size": 4})
