"""Dual-branch training: timestep fold rule, loss, step and loop."""

from src.training.dual_loss import LossResult, PreparedSample, dual_loss, prepare_sample
from src.training.fold import fold_timestep
from src.training.model import DenoiserModel
from src.training.trainer import DualTrainer, StepMetrics, TrainResult, TrainState, train_loop, train_step

__all__ = [
    "DenoiserModel",
    "DualTrainer",
    "LossResult",
    "PreparedSample",
    "StepMetrics",
    "TrainResult",
    "TrainState",
    "dual_loss",
    "fold_timestep",
    "prepare_sample",
    "train_loop",
    "train_step",
]
