"""Minimal dense-tensor engine with reverse-mode differentiation and AdamW."""

from src.numerics.gradcheck import compare_gradients, finite_diff_grad, relative_error, sample_coordinates
from src.numerics.optim import AdamWState, adamw_step
from src.numerics.tensor import Tape, Tensor, as_tensors, backpropagate, evaluate, parameter, precision

__all__ = [
    "AdamWState",
    "Tape",
    "Tensor",
    "adamw_step",
    "as_tensors",
    "backpropagate",
    "compare_gradients",
    "evaluate",
    "finite_diff_grad",
    "parameter",
    "precision",
    "relative_error",
    "sample_coordinates",
]
