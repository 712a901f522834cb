"""
Linear noise schedule and the forward (noising) process.

Timesteps are 1-based. Arrays are stored with a sentinel at index 0
(β_0 = 0, ᾱ_0 = 1) so ``alpha_bars[t]`` reads like the formulas.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from src.core.exceptions import ScheduleError, ShapeMismatchError, StepCountError, TimestepRangeError


@dataclass(frozen=True)
class NoiseSchedule:
    """β, α = 1 − β and ᾱ = cumulative product of α over T timesteps (64-bit)."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def check_timestep(self, t: int) -> int:
        if not 1 <= int(t) <= self.T:
            raise TimestepRangeError(int(t), self.T)
        return int(t)

    def beta(self, t: int) -> float:
        return float(self.betas[self.check_timestep(t)])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self.check_timestep(t)])

    def alpha_bar(self, t: int) -> float:
        """ᾱ_t for 0 <= t <= T (ᾱ_0 = 1)."""
        if not 0 <= int(t) <= self.T:
            raise TimestepRangeError(int(t), self.T)
        return float(self.alpha_bars[int(t)])


def build_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """
    Linear β schedule inclusive of both endpoints.

    Args:
        T: Number of timesteps (>= 2)
        beta_start: β_1
        beta_end: β_T

    Returns:
        NoiseSchedule: Schedule with sentinel entries at index 0

    Raises:
        ScheduleError: If T < 2 or the bounds violate 0 < β_start <= β_end < 1
    """
    if T < 2:
        raise ScheduleError(
            message=f"Schedule needs at least 2 timesteps, got {T}",
            error_code="SCHEDULE_LENGTH",
            details={"T": T},
        )
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ScheduleError(
            message="Beta bounds must satisfy 0 < beta_start <= beta_end < 1",
            error_code="SCHEDULE_BOUNDS",
            details={"beta_start": beta_start, "beta_end": beta_end},
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(
        T=T,
        betas=np.concatenate([[0.0], betas]),
        alphas=np.concatenate([[1.0], alphas]),
        alpha_bars=np.concatenate([[1.0], alpha_bars]),
    )


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """
    x_t = √ᾱ_t · x0 + √(1 − ᾱ_t) · ε, without clamping.

    Raises:
        TimestepRangeError: If t is outside [1, T]
        ShapeMismatchError: If ε and x0 differ in shape
    """
    schedule.check_timestep(t)
    if np.shape(x0) != np.shape(eps):
        raise ShapeMismatchError("forward_noise", [np.shape(x0), np.shape(eps)])
    alpha_bar = schedule.alpha_bar(t)
    x0 = np.asarray(x0)
    out = np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * np.asarray(eps)
    return out.astype(x0.dtype, copy=False)


def sampling_timesteps(T: int, num_steps: int) -> List[int]:
    """
    Strided timesteps round(T·i/num_steps), i = 1..num_steps, deduplicated, descending.

    Raises:
        StepCountError: If num_steps is outside [1, T]
    """
    if not 1 <= num_steps <= T:
        raise StepCountError(
            message=f"num_steps must lie in [1, {T}], got {num_steps}",
            error_code="STEP_COUNT",
            details={"num_steps": num_steps, "T": T},
        )
    steps = {int(round(T * i / num_steps)) for i in range(1, num_steps + 1)}
    return sorted((s for s in steps if s >= 1), reverse=True)
