"""
Toy conditional ε-prediction UNet.

Input is the noisy image concatenated with the clean conditioning image
(6 channels). Timestep and caption are embedded into one vector that every
residual block adds after its first convolution. When a control signal is
given it is injected at the end of every encoder level, before the skip is
stored.
"""

from typing import List, Mapping, Optional, Sequence

import numpy as np

from src.conditioning.adapter import ControlSignal, inject_level
from src.core.config import UNetConfig
from src.core.exceptions import ShapeMismatchError
from src.numerics.initializers import Params, conv_params, dense_params, embedding_params, norm_params
from src.numerics.ops import (
    add,
    concat,
    conv2d,
    embedding_mean,
    group_norm,
    linear,
    reshape,
    silu,
    upsample2x,
)
from src.numerics.tensor import Tensor

CAPTION_TABLE = "unet.caption.table"


def init_denoiser_params(config: UNetConfig, num_captions: int, rng: np.random.Generator) -> Params:
    """
    Seeded parameters of the denoiser, including the caption table.

    Args:
        config: Architecture
        num_captions: Rows of the caption embedding table
        rng: Random generator

    Returns:
        dict: Flat name -> float32 array
    """
    params: Params = {}
    widths = config.level_channels()
    emb = config.time_embed_dim

    dense_params(params, "unet.time.0", emb, emb, rng)
    dense_params(params, "unet.time.1", emb, emb, rng)
    embedding_params(params, CAPTION_TABLE, num_captions, config.caption_dim, rng)
    dense_params(params, "unet.caption.proj", config.caption_dim, emb, rng)

    conv_params(params, "unet.conv_in", config.in_channels + config.cond_channels, widths[0], 3, rng)

    channels = widths[0]
    for level, width in enumerate(widths):
        for block in range(config.num_res_blocks):
            _res_block_params(params, f"unet.down.{level}.res.{block}", channels, width, emb, rng)
            channels = width
        if level < config.levels - 1:
            conv_params(params, f"unet.down.{level}.downsample", width, width, 3, rng)

    for block in range(2):
        _res_block_params(params, f"unet.mid.{block}", channels, channels, emb, rng)

    for level in reversed(range(config.levels)):
        width = widths[level]
        channels = channels + width
        for block in range(config.num_res_blocks):
            _res_block_params(params, f"unet.up.{level}.res.{block}", channels, width, emb, rng)
            channels = width
        if level > 0:
            conv_params(params, f"unet.up.{level}.upsample", width, widths[level - 1], 3, rng)
            channels = widths[level - 1]

    norm_params(params, "unet.out.norm", channels)
    conv_params(params, "unet.out.conv", channels, config.out_channels, 3, rng, gain=0.1)
    return params


def _res_block_params(
    params: Params, prefix: str, in_channels: int, out_channels: int, emb: int, rng: np.random.Generator
) -> None:
    norm_params(params, f"{prefix}.norm1", in_channels)
    conv_params(params, f"{prefix}.conv1", in_channels, out_channels, 3, rng)
    dense_params(params, f"{prefix}.temb", emb, out_channels, rng)
    norm_params(params, f"{prefix}.norm2", out_channels)
    conv_params(params, f"{prefix}.conv2", out_channels, out_channels, 3, rng, gain=0.5)
    if in_channels != out_channels:
        conv_params(params, f"{prefix}.skip", in_channels, out_channels, 1, rng)


def timestep_embedding(t: Sequence[int], dim: int) -> np.ndarray:
    """Sinusoidal embedding [sin(t·f_k), cos(t·f_k)] with f_k = 10000^(−k/(dim/2))."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _conv(p: Mapping[str, Tensor], name: str, x: Tensor, stride: int = 1) -> Tensor:
    return conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride)


def _dense(p: Mapping[str, Tensor], name: str, x: Tensor) -> Tensor:
    return linear(x, p[f"{name}.w"], p[f"{name}.b"])


def _norm(p: Mapping[str, Tensor], name: str, x: Tensor) -> Tensor:
    return group_norm(x, p[f"{name}.gamma"], p[f"{name}.beta"])


def _res_block(p: Mapping[str, Tensor], prefix: str, h: Tensor, emb_act: Tensor) -> Tensor:
    a = _conv(p, f"{prefix}.conv1", silu(_norm(p, f"{prefix}.norm1", h)))
    temb = _dense(p, f"{prefix}.temb", emb_act)
    a = add(a, reshape(temb, temb.shape + (1, 1)))
    a = _conv(p, f"{prefix}.conv2", silu(_norm(p, f"{prefix}.norm2", a)))
    skip = _conv(p, f"{prefix}.skip", h) if f"{prefix}.skip.w" in p else h
    return add(skip, a)


def predict_noise(
    params: Mapping[str, Tensor],
    config: UNetConfig,
    x_t: Tensor,
    t: Sequence[int],
    caption_ids: Sequence[int],
    x_clean: Tensor,
    cond: Optional[ControlSignal] = None,
) -> Tensor:
    """
    Predicted noise ε̂ with the shape of ``x_t``.

    Args:
        params: Denoiser tensors, plus adapter tensors when ``cond`` is given
        config: Architecture
        x_t: Noisy images (N, 3, H, W)
        t: One timestep per sample
        caption_ids: One caption table row per sample
        x_clean: Conditioning images (N, 3, H, W)
        cond: Optional control signal

    Raises:
        ShapeMismatchError: If shapes disagree with each other or the config
        AdapterNotInitializedError: If ``cond`` is given without adapter parameters
    """
    n = x_t.shape[0]
    expected = (n, config.in_channels, config.side, config.side)
    if x_t.shape != expected or x_clean.shape != (n, config.cond_channels, config.side, config.side):
        raise ShapeMismatchError("predict_noise", [x_t.shape, x_clean.shape], f"expected {expected}")
    if len(t) != n or len(caption_ids) != n:
        raise ShapeMismatchError("predict_noise", [x_t.shape, (len(t),), (len(caption_ids),)])

    temb = Tensor(timestep_embedding(t, config.time_embed_dim))
    emb = _dense(params, "unet.time.1", silu(_dense(params, "unet.time.0", temb)))
    caption = embedding_mean(params[CAPTION_TABLE], [[int(c)] for c in caption_ids])
    emb = add(emb, _dense(params, "unet.caption.proj", caption))
    emb_act = silu(emb)

    h = _conv(params, "unet.conv_in", concat([x_t, x_clean]))
    skips: List[Tensor] = []
    for level in range(config.levels):
        for block in range(config.num_res_blocks):
            h = _res_block(params, f"unet.down.{level}.res.{block}", h, emb_act)
        if cond is not None:
            h = inject_level(h, level, cond, params)
        skips.append(h)
        if level < config.levels - 1:
            h = _conv(params, f"unet.down.{level}.downsample", h, stride=2)

    for block in range(2):
        h = _res_block(params, f"unet.mid.{block}", h, emb_act)

    for level in reversed(range(config.levels)):
        h = concat([h, skips[level]])
        for block in range(config.num_res_blocks):
            h = _res_block(params, f"unet.up.{level}.res.{block}", h, emb_act)
        if level > 0:
            h = _conv(params, f"unet.up.{level}.upsample", upsample2x(h))

    return _conv(params, "unet.out.conv", silu(_norm(params, "unet.out.norm", h)))
