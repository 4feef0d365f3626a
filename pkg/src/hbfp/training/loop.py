"""SGD training loop with per-epoch numeric configs and MAC accounting."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..io import load_checkpoint, save_checkpoint
from .data import DatasetSpec, make_dataset
from .mlp import Layer, MlpModel, backward, forward, init_mlp, layer_macs, softmax_cross_entropy
from .schedule import NumericMode, layer_configs

__all__ = ["TrainConfig", "EpochRecord", "RunReport", "train", "evaluate",
           "save_model", "load_model", "CURVE_HEADER"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_epochs: tuple[int, ...] = (50, 75)
    lr_decay: float = 0.1
    hidden: tuple[int, ...] = (64, 64, 64)
    seed: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    numeric: NumericMode = field(default_factory=NumericMode)
    quantize_dw: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.numeric.kind == "booster" and self.numeric.schedule.boost_last_epochs > self.epochs:
            raise ValueError("boost_last_epochs exceeds epochs")

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("dataset", "numeric")}
        d["lr_decay_epochs"] = list(self.lr_decay_epochs)
        d["hidden"] = list(self.hidden)
        d["dataset"] = self.dataset.to_dict()
        d["numeric"] = self.numeric.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        if "dataset" in d:
            d["dataset"] = DatasetSpec.from_dict(d["dataset"])
        if "numeric" in d:
            d["numeric"] = NumericMode.from_dict(d["numeric"])
        for key in ("lr_decay_epochs", "hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    active_cfg: str
    lr: float


CURVE_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "active_cfg"]


@dataclass
class RunReport:
    seed: int
    config_hash: str
    numeric: str
    curves: list[EpochRecord]
    mac_counts: dict[str, int]
    diverged: bool = False
    checkpoint: Optional[str] = None

    @property
    def final_val_acc(self) -> float:
        return self.curves[-1].val_acc if self.curves else float("nan")

    @property
    def final_train_acc(self) -> float:
        return self.curves[-1].train_acc if self.curves else float("nan")

    @property
    def mac_fraction(self) -> dict[str, float]:
        total = sum(self.mac_counts.values())
        return {k: v / total for k, v in sorted(self.mac_counts.items())} if total else {}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "numeric": self.numeric,
            "diverged": self.diverged,
            "epochs_completed": len(self.curves),
            "final_val_acc": self.final_val_acc,
            "final_train_acc": self.final_train_acc,
            "mac_counts": dict(sorted(self.mac_counts.items())),
            "mac_fraction": self.mac_fraction,
            "checkpoint": self.checkpoint,
            "curves": [asdict(r) for r in self.curves],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for r in self.curves:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc),
                        repr(r.val_loss), repr(r.val_acc), r.active_cfg])
        return buf.getvalue()


def _cfg_label(cfg) -> str:
    return "fp32" if cfg is None else cfg.name


def evaluate(model: MlpModel, x: np.ndarray, y: np.ndarray, cfgs, batch: int = 1024):
    """Mean loss and accuracy (percent) over ``x`` using forward-only passes."""
    total_loss, correct = 0.0, 0
    for s in range(0, len(x), batch):
        logits, _ = forward(model, x[s:s + batch], cfgs)
        loss, _ = softmax_cross_entropy(logits, y[s:s + batch])
        total_loss += loss * len(logits)
        correct += int(np.sum(np.argmax(logits, axis=1) == y[s:s + batch]))
    return total_loss / len(x), 100.0 * correct / len(x)


def save_model(path, model: MlpModel, meta: dict) -> None:
    tensors = {}
    for i, l in enumerate(model.layers):
        tensors[f"layer{i}.weight"] = l.weights
        tensors[f"layer{i}.bias"] = l.bias
    meta = dict(meta, activations=[l.activation for l in model.layers])
    save_checkpoint(path, tensors, meta)


def load_model(path) -> tuple[MlpModel, dict]:
    tensors, meta = load_checkpoint(path)
    layers = [Layer(tensors[f"layer{i}.weight"], tensors[f"layer{i}.bias"], act)
              for i, act in enumerate(meta["activations"])]
    return MlpModel(layers), meta


def _lr_at(cfg: TrainConfig, epoch: int) -> float:
    n = sum(1 for e in cfg.lr_decay_epochs if epoch >= e)
    return cfg.lr * cfg.lr_decay ** n


def train(cfg: TrainConfig, checkpoint: Optional[str] = None, data=None) -> RunReport:
    """Train an MLP per ``cfg``; identical configs give identical reports.

    Stops early with ``diverged=True`` if a loss or activation turns
    non-finite. ``data`` may pass a precomputed ``make_dataset`` result.
    """
    xt, yt, xv, yv = data if data is not None else make_dataset(cfg.dataset, cfg.seed)
    n_classes = int(max(yt.max(), yv.max())) + 1
    rng = np.random.default_rng(cfg.seed)
    model = init_mlp([xt.shape[1], *cfg.hidden, n_classes], rng)
    n_layers = len(model.layers)
    velocity = [np.zeros_like(p) for p in model.params()]
    report = RunReport(cfg.seed, cfg.config_hash(), cfg.numeric.label, [], {})

    for epoch in range(cfg.epochs):
        cfgs = layer_configs(cfg.numeric, epoch, cfg.epochs, n_layers)
        lr = np.float32(_lr_at(cfg, epoch))
        order = rng.permutation(len(xt))
        loss_sum, correct = 0.0, 0
        try:
            with np.errstate(over="raise", invalid="raise"):
                for s in range(0, len(xt), cfg.batch_size):
                    idx = order[s:s + cfg.batch_size]
                    xb, yb = xt[idx], yt[idx]
                    logits, cache = forward(model, xb, cfgs)
                    loss, g = softmax_cross_entropy(logits, yb)
                    if not math.isfinite(loss):
                        raise FloatingPointError("non-finite loss")
                    grads = backward(model, cache, g, cfgs, cfg.quantize_dw)
                    _sgd_step(model, grads, velocity, lr, cfg)
                    loss_sum += loss * len(idx)
                    correct += int(np.sum(np.argmax(logits, axis=1) == yb))
                    for c, macs in zip(cfgs, layer_macs(model, len(idx))):
                        key = _cfg_label(c)
                        report.mac_counts[key] = report.mac_counts.get(key, 0) + macs
                val_loss, val_acc = evaluate(model, xv, yv, cfgs)
        except FloatingPointError:
            report.diverged = True
            break
        except ValueError as exc:
            if "non-finite" not in str(exc):
                raise
            report.diverged = True
            break
        report.curves.append(EpochRecord(
            epoch, loss_sum / len(xt), 100.0 * correct / len(xt),
            float(val_loss), float(val_acc), "|".join(_cfg_label(c) for c in cfgs), float(lr)))

    if checkpoint is not None:
        save_model(checkpoint, model, {"train_config": cfg.to_dict(),
                                       "epochs_completed": len(report.curves)})
        report.checkpoint = str(checkpoint)
    return report


def _sgd_step(model: MlpModel, grads, velocity, lr, cfg: TrainConfig) -> None:
    mu = np.float32(cfg.momentum)
    wd = np.float32(cfg.weight_decay)
    params = model.params()
    flat = [g for pair in grads for g in pair]
    for i, (p, g, v) in enumerate(zip(params, flat, velocity)):
        if i % 2 == 0 and wd:
            g = g + wd * p
        v *= mu
        v += g
        p -= lr * v
