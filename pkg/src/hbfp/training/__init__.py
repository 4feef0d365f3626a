"""Desk-scale HBFP training: MLP, schedules, datasets and the SGD loop."""

from .data import DatasetSpec, make_dataset
from .loop import CURVE_HEADER, EpochRecord, RunReport, TrainConfig, evaluate, load_model, save_model, train
from .mlp import Layer, MlpModel, backward, forward, init_mlp, layer_macs, softmax_cross_entropy
from .schedule import BoosterSchedule, NumericMode, layer_configs, layer_role, schedule_lookup

__all__ = [
    "BoosterSchedule", "CURVE_HEADER", "DatasetSpec", "EpochRecord", "Layer", "MlpModel",
    "NumericMode", "RunReport", "TrainConfig", "backward", "evaluate", "forward",
    "init_mlp", "layer_configs", "layer_macs", "layer_role", "load_model", "make_dataset",
    "save_model", "schedule_lookup", "softmax_cross_entropy", "train",
]
