"""
Central-difference gradient oracle.

Used by the test-suite and by ``selftest grad`` to verify the analytic
gradients produced by ``backpropagate``.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from src.core.exceptions import NonFiniteError

RELATIVE_ERROR_FLOOR = 1e-6

ScalarFn = Callable[[Dict[str, np.ndarray]], float]


def finite_diff_grad(
    f: ScalarFn,
    params: Mapping[str, np.ndarray],
    h: float = 1e-4,
    coords: Optional[Mapping[str, Sequence[int]]] = None,
) -> Dict[str, np.ndarray]:
    """
    Central-difference gradient (f(θ+h·e) − f(θ−h·e)) / (2h) per coordinate.

    Args:
        f: Deterministic scalar function of the named parameters
        params: Parameter arrays; copies are perturbed, the inputs are untouched
        h: Step size, must be positive
        coords: Optional flat indices to probe per parameter; other entries stay 0

    Returns:
        dict: Parameter name -> gradient estimate with the parameter's shape

    Raises:
        ValueError: If h is not positive
        NonFiniteError: If an evaluation of f is not finite
    """
    if h <= 0:
        raise ValueError("finite difference step must be positive")
    work = {name: np.array(value, copy=True) for name, value in params.items()}
    grads: Dict[str, np.ndarray] = {}
    for name, value in work.items():
        grad = np.zeros_like(value, dtype=np.float64)
        flat = value.reshape(-1)
        indices = range(flat.size) if coords is None else coords.get(name, ())
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            plus = float(f(work))
            flat[index] = original - h
            minus = float(f(work))
            flat[index] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NonFiniteError("finite_diff_grad", {"param": name, "index": int(index)})
            grad.reshape(-1)[index] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = RELATIVE_ERROR_FLOOR) -> np.ndarray:
    """|a − n| / max(|a|, |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def sample_coordinates(
    params: Mapping[str, np.ndarray], per_param: int, rng: np.random.Generator
) -> Dict[str, List[int]]:
    """Pick up to ``per_param`` flat indices from every parameter, sorted."""
    coords: Dict[str, List[int]] = {}
    for name in sorted(params):
        size = params[name].size
        count = min(per_param, size)
        coords[name] = sorted(int(i) for i in rng.choice(size, size=count, replace=False))
    return coords


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic and central-difference gradients."""

    tolerance: float
    max_relative_error: float = 0.0
    per_param: Dict[str, float] = field(default_factory=dict)
    probed: int = 0

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance

    def worst(self, k: int = 5) -> List[tuple]:
        return sorted(self.per_param.items(), key=lambda kv: -kv[1])[:k]


def compare_gradients(
    analytic: Mapping[str, np.ndarray],
    numeric: Mapping[str, np.ndarray],
    coords: Mapping[str, Sequence[int]],
    tolerance: float,
    floor: float = RELATIVE_ERROR_FLOOR,
) -> GradCheckReport:
    """Relative error on the probed coordinates of every parameter."""
    report = GradCheckReport(tolerance=tolerance)
    for name, indices in coords.items():
        if not indices:
            continue
        idx = np.asarray(indices)
        err = relative_error(analytic[name].reshape(-1)[idx], numeric[name].reshape(-1)[idx], floor)
        report.per_param[name] = float(err.max())
        report.probed += len(indices)
    report.max_relative_error = max(report.per_param.values(), default=0.0)
    return report
