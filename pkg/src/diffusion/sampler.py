"""
Strided ancestral sampling.

Between consecutive strided timesteps τ > τ' the chain uses the effective
coefficients ᾱ_eff = ᾱ_τ / ᾱ_τ' and β_eff = 1 − ᾱ_eff, so a stride of one
reduces to the ordinary ancestral update. No noise is added on the last
step.
"""

from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from src.conditioning.adapter import ControlSignal
from src.core.config import UNetConfig
from src.diffusion.pixels import decode_images
from src.diffusion.schedule import NoiseSchedule, sampling_timesteps
from src.diffusion.unet import predict_noise
from src.numerics.tensor import Tensor

NoisePredictor = Callable[[np.ndarray, int], np.ndarray]


def run_chain(
    predict: NoisePredictor,
    schedule: NoiseSchedule,
    timesteps: Sequence[int],
    x_T: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Run the reverse chain from ``x_T`` over descending ``timesteps``.

    Args:
        predict: (x_t, t) -> ε̂ for the whole batch
        schedule: Noise schedule
        timesteps: Descending strided timesteps
        x_T: Starting noise (N, 3, H, W)
        rng: Source of the per-step noise

    Returns:
        np.ndarray: x_0 estimate in model space (unclamped)
    """
    x = np.asarray(x_T)
    for i, tau in enumerate(timesteps):
        prev = timesteps[i + 1] if i + 1 < len(timesteps) else 0
        alpha_bar = schedule.alpha_bar(tau)
        alpha_bar_prev = schedule.alpha_bar(prev)
        alpha_eff = alpha_bar / alpha_bar_prev
        beta_eff = 1.0 - alpha_eff

        eps_hat = np.asarray(predict(x, tau), dtype=np.float64)
        mean = (x - (beta_eff / np.sqrt(1.0 - alpha_bar)) * eps_hat) / np.sqrt(alpha_eff)
        if prev > 0:
            variance = beta_eff * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)
            x = mean + np.sqrt(variance) * rng.standard_normal(x.shape)
        else:
            x = mean
        x = x.astype(x_T.dtype, copy=False)
    return x


def ancestral_sample(
    params: Mapping[str, Tensor],
    config: UNetConfig,
    schedule: NoiseSchedule,
    num_steps: int,
    caption_ids: Sequence[int],
    x_clean: np.ndarray,
    cond: Optional[ControlSignal],
    seed: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Draw a batch of samples conditioned on the clean inputs.

    Args:
        params: Model tensors
        config: Architecture
        schedule: Noise schedule
        num_steps: Strided step count, 1 <= num_steps <= T
        caption_ids: Caption table row per sample
        x_clean: Conditioning images in model space (N, 3, H, W)
        cond: Optional control signal
        seed: Seed of the starting noise and the per-step noise
        rng: Explicit generator overriding ``seed``

    Returns:
        np.ndarray: Images (N, H, W, 3) in [0, 1]

    Raises:
        StepCountError: If num_steps is outside [1, T]
    """
    timesteps = sampling_timesteps(schedule.T, num_steps)
    rng = rng if rng is not None else np.random.default_rng(seed)
    x_clean_t = Tensor(x_clean)
    n = x_clean_t.shape[0]
    caption_ids = list(caption_ids)

    def predict(x: np.ndarray, tau: int) -> np.ndarray:
        out = predict_noise(params, config, Tensor(x), [tau] * n, caption_ids, x_clean_t, cond)
        return out.data

    x_T = rng.standard_normal(x_clean_t.shape).astype(x_clean_t.data.dtype)
    return decode_images(run_chain(predict, schedule, timesteps, x_T, rng))
