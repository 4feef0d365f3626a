"""Numeric modes and the Accuracy Booster mantissa schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import QuantConfig

__all__ = ["BoosterSchedule", "NumericMode", "layer_role", "schedule_lookup", "layer_configs"]

ROLES = ("first", "middle", "last")


def _hbfp(bits: int, block: int = 64) -> QuantConfig:
    return QuantConfig(mantissa_bits=bits, block_size=block)


@dataclass(frozen=True)
class BoosterSchedule:
    """HBFP4 everywhere, except HBFP6 in the first/last layers and final epochs."""

    default_cfg: QuantConfig = field(default_factory=lambda: _hbfp(4))
    boost_cfg: QuantConfig = field(default_factory=lambda: _hbfp(6))
    boost_last_epochs: int = 1
    boost_first_last_layers: bool = True

    def __post_init__(self):
        if self.boost_cfg.mantissa_bits < self.default_cfg.mantissa_bits:
            raise ValueError("boost_cfg must not have fewer mantissa bits than default_cfg")
        if self.boost_last_epochs < 0:
            raise ValueError("boost_last_epochs must be >= 0")

    def to_dict(self) -> dict:
        return {
            "default": self.default_cfg.to_dict(),
            "boost": self.boost_cfg.to_dict(),
            "boost_last_epochs": self.boost_last_epochs,
            "boost_first_last_layers": self.boost_first_last_layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoosterSchedule":
        kw = {}
        if "default" in d:
            kw["default_cfg"] = QuantConfig.from_dict(d["default"])
        if "boost" in d:
            kw["boost_cfg"] = QuantConfig.from_dict(d["boost"])
        for key in ("boost_last_epochs", "boost_first_last_layers"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)


def layer_role(index: int, n_layers: int) -> str:
    if index == 0:
        return "first"
    if index == n_layers - 1:
        return "last"
    return "middle"


def schedule_lookup(s: BoosterSchedule, epoch: int, role: str, epochs: int) -> QuantConfig:
    """Config for a layer with ``role`` during 0-based ``epoch`` of ``epochs``."""
    if role not in ROLES:
        raise ValueError(f"unknown layer role {role!r}")
    if s.boost_last_epochs > epochs:
        raise ValueError("boost_last_epochs exceeds the number of epochs")
    if epoch >= epochs - s.boost_last_epochs:
        return s.boost_cfg
    if s.boost_first_last_layers and role in ("first", "last"):
        return s.boost_cfg
    return s.default_cfg


@dataclass(frozen=True)
class NumericMode:
    """``fp32``, a single ``hbfp`` config, or a ``booster`` schedule."""

    kind: str = "fp32"
    config: Optional[QuantConfig] = None
    schedule: Optional[BoosterSchedule] = None

    def __post_init__(self):
        if self.kind not in ("fp32", "hbfp", "booster"):
            raise ValueError(f"unknown numeric mode {self.kind!r}")
        if self.kind == "hbfp" and self.config is None:
            raise ValueError("hbfp mode needs a config")
        if self.kind == "booster" and self.schedule is None:
            object.__setattr__(self, "schedule", BoosterSchedule())

    @property
    def label(self) -> str:
        if self.kind == "hbfp":
            return f"{self.config.name}@{self.config.block_size}"
        return self.kind

    def to_dict(self) -> dict:
        d = {"mode": self.kind}
        if self.kind == "hbfp":
            d.update(self.config.to_dict())
        elif self.kind == "booster":
            d.update(self.schedule.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NumericMode":
        d = dict(d)
        kind = d.pop("mode", "fp32")
        if kind == "hbfp":
            return cls("hbfp", config=QuantConfig.from_dict(d))
        if kind == "booster":
            return cls("booster", schedule=BoosterSchedule.from_dict(d))
        if d:
            raise ValueError(f"unexpected keys for fp32 mode: {sorted(d)}")
        return cls(kind)


def layer_configs(mode: NumericMode, epoch: int, epochs: int,
                  n_layers: int) -> list[Optional[QuantConfig]]:
    """Per-layer configs for one epoch; ``None`` means FP32."""
    if mode.kind == "fp32":
        return [None] * n_layers
    if mode.kind == "hbfp":
        return [mode.config] * n_layers
    return [schedule_lookup(mode.schedule, epoch, layer_role(i, n_layers), epochs)
            for i in range(n_layers)]
