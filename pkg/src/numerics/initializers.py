"""Seeded parameter initializers writing into a flat name -> array dict."""

from typing import Dict

import numpy as np

Params = Dict[str, np.ndarray]


def conv_params(
    params: Params,
    name: str,
    in_channels: int,
    out_channels: int,
    kernel: int,
    rng: np.random.Generator,
    zero: bool = False,
    gain: float = 1.0,
) -> None:
    """He-normal conv kernel ``{name}.w`` (O, C, k, k) and zero bias ``{name}.b``."""
    shape = (out_channels, in_channels, kernel, kernel)
    if zero:
        params[f"{name}.w"] = np.zeros(shape, dtype=np.float32)
    else:
        std = gain * np.sqrt(2.0 / (in_channels * kernel * kernel))
        params[f"{name}.w"] = (rng.standard_normal(shape) * std).astype(np.float32)
    params[f"{name}.b"] = np.zeros(out_channels, dtype=np.float32)


def dense_params(
    params: Params, name: str, in_features: int, out_features: int, rng: np.random.Generator
) -> None:
    """He-normal dense weight ``{name}.w`` (O, I) and zero bias ``{name}.b``."""
    std = np.sqrt(2.0 / in_features)
    params[f"{name}.w"] = (rng.standard_normal((out_features, in_features)) * std).astype(np.float32)
    params[f"{name}.b"] = np.zeros(out_features, dtype=np.float32)


def norm_params(params: Params, name: str, channels: int) -> None:
    """Group-norm affine: ``{name}.gamma`` = 1, ``{name}.beta`` = 0."""
    params[f"{name}.gamma"] = np.ones(channels, dtype=np.float32)
    params[f"{name}.beta"] = np.zeros(channels, dtype=np.float32)


def embedding_params(params: Params, name: str, rows: int, dim: int, rng: np.random.Generator) -> None:
    """Embedding table with unit-normal rows."""
    params[name] = rng.standard_normal((rows, dim)).astype(np.float32)
