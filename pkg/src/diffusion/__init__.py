"""Noise schedule, toy UNet denoiser and strided ancestral sampler."""

from src.diffusion.pixels import decode_images, encode_images
from src.diffusion.sampler import ancestral_sample, run_chain
from src.diffusion.schedule import NoiseSchedule, build_schedule, forward_noise, sampling_timesteps
from src.diffusion.unet import init_denoiser_params, predict_noise

__all__ = [
    "NoiseSchedule",
    "ancestral_sample",
    "build_schedule",
    "decode_images",
    "encode_images",
    "forward_noise",
    "init_denoiser_params",
    "predict_noise",
    "run_chain",
    "sampling_timesteps",
]
