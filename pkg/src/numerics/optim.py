"""AdamW with decoupled weight decay."""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.core.exceptions import ShapeMismatchError


@dataclass
class AdamWState:
    """Per-parameter first and second moments plus the shared step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> Tuple[Dict[str, np.ndarray], AdamWState]:
    """
    One AdamW update.

    Decay is applied as θ ← θ − lr·wd·θ before the bias-corrected adaptive
    step. Parameters without a gradient entry are left untouched (frozen).
    A learning rate of 0 leaves every parameter unchanged.

    Args:
        params: Current parameters
        grads: Gradients keyed like ``params``
        state: Optimizer state; not mutated
        lr: Learning rate, must be >= 0

    Returns:
        tuple: (new parameters, new state)

    Raises:
        ValueError: If lr is negative
        ShapeMismatchError: If a gradient or moment shape differs from its parameter
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    step = state.step + 1
    bias1 = 1.0 - beta1**step
    bias2 = 1.0 - beta2**step

    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = dict(state.m)
    new_v: Dict[str, np.ndarray] = dict(state.v)
    for name, theta in params.items():
        grad: Optional[np.ndarray] = grads.get(name)
        if grad is None:
            new_params[name] = theta
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        if grad.shape != theta.shape or m.shape != theta.shape or v.shape != theta.shape:
            raise ShapeMismatchError("adamw_step", [theta.shape, grad.shape, m.shape], name)
        grad = grad.astype(theta.dtype, copy=False)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        if lr == 0.0:
            updated = theta
        else:
            decayed = theta - (lr * weight_decay) * theta
            m_hat = m / bias1
            v_hat = v / bias2
            updated = decayed - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_params[name] = updated.astype(theta.dtype, copy=False)
        new_m[name] = m.astype(theta.dtype, copy=False)
        new_v[name] = v.astype(theta.dtype, copy=False)
    return new_params, AdamWState(m=new_m, v=new_v, step=step)
