"""
Measurement of aesthetic statistics from pixels alone.

The subject is segmented by Otsu thresholding the deviation of the value
channel from the background estimate (median V of the border pixels).

Blur is read from the contour map. Its mean over the ring of pixels just
outside the subject, divided by the value contrast across the outline, is an
edge strength. Sharp renders of the scene generator fix the calibration
constant once (``sharp_edge_strength``). The blur proxy is one minus the
calibrated strength, and a Gaussian-equivalent std is recovered from it
through the step response erf(1 / (σ√2)).
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import erfinv

from src.conditioning.maps import contour_map, rgb_to_hsv_map
from src.pairing.mos import THIRDS
from src.pairing.params import AestheticParams
from src.pairing.scenes import PALETTES, SEMANTIC_KEYS, SceneSpec, fit_params, generate_scene

DEGENERATE_DEVIATION = 0.02
OTSU_BINS = 256
MAX_BLUR_SIGMA = 2.0
# Smallest value contrast from which a blur estimate is attempted.
MIN_EDGE_CONTRAST = 0.05
CALIBRATION_SCENES = 68
CALIBRATION_SIDE = 32
CALIBRATION_SIZES = (0.08, 0.15, 0.25, 0.35)
# Sharp scenes whose strength falls below the calibration minimum still read as unblurred.
CALIBRATION_SLACK = 0.85


@dataclass(frozen=True)
class MeasuredStats:
    """Statistics of one image, the measurement-side mirror of AestheticParams."""

    saturation: float
    value: float
    background_value: float  # median V of the border
    cx: float
    cy: float
    size: float
    blur: float  # calibrated mean contour magnitude at the outline, inverted
    blur_sigma: float
    degenerate: bool


def border_pixels(channel: np.ndarray) -> np.ndarray:
    return np.concatenate([channel[0, :], channel[-1, :], channel[1:-1, 0], channel[1:-1, -1]])


def otsu_threshold(values: np.ndarray, bins: int = OTSU_BINS) -> float:
    """Threshold maximizing the between-class variance of ``values``."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    low, high = float(flat.min()), float(flat.max())
    if high <= low:
        return high
    counts, edges = np.histogram(flat, bins=bins, range=(low, high))
    centres = (edges[:-1] + edges[1:]) / 2.0
    weights = counts / counts.sum()
    omega = np.cumsum(weights)
    mu = np.cumsum(weights * centres)
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between = np.nan_to_num(between[:-1], nan=-1.0, posinf=-1.0)
    return float(edges[int(np.argmax(between)) + 1])


def segment_subject(image: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Subject mask of an RGB image and whether segmentation was degenerate.

    A degenerate image (no pixel deviates from the background by more than
    ``DEGENERATE_DEVIATION``) yields an empty mask.
    """
    value = rgb_to_hsv_map(image)[..., 2].astype(np.float64)
    return _segment_value(value)


def _segment_value(value: np.ndarray) -> Tuple[np.ndarray, bool]:
    deviation = np.abs(value - np.median(border_pixels(value)))
    if deviation.max() < DEGENERATE_DEVIATION:
        return np.zeros(value.shape, dtype=bool), True
    mask = deviation > otsu_threshold(deviation)
    return mask, not mask.any()


def edge_strength(value: np.ndarray, mask: np.ndarray) -> Optional[float]:
    """
    Mean contour magnitude on the ring just outside ``mask``, per unit of value contrast.

    Returns None when the outline has no usable contrast.
    """
    if not mask.any() or mask.all():
        return None
    contrast = abs(float(np.median(value[~mask]) - np.median(value[mask])))
    if contrast < MIN_EDGE_CONTRAST:
        return None
    ring = ndimage.binary_dilation(mask) & ~mask
    if not ring.any():
        return None
    gray = np.repeat(np.clip(value, 0.0, 1.0)[..., None], 3, axis=-1)
    return float(contour_map(gray)[ring].mean()) / contrast


@lru_cache(maxsize=1)
def sharp_edge_strength() -> float:
    """Calibration constant: the edge strength that counts as unblurred, fixed against σ = 0 renders."""
    strengths = []
    for index in range(CALIBRATION_SCENES):
        spec = SceneSpec(
            semantic_key=SEMANTIC_KEYS[index % len(SEMANTIC_KEYS)],
            layout_seed=index,
            palette_id=index % len(PALETTES),
        )
        corner = index % 4
        size = CALIBRATION_SIZES[index // len(SEMANTIC_KEYS) % len(CALIBRATION_SIZES)]
        params = fit_params(spec, AestheticParams(cx=THIRDS[corner % 2], cy=THIRDS[corner // 2], size=size))
        image, _ = generate_scene(spec, params, CALIBRATION_SIDE)
        value = rgb_to_hsv_map(image)[..., 2].astype(np.float64)
        mask, degenerate = _segment_value(value)
        strength = None if degenerate else edge_strength(value, mask)
        if strength is not None:
            strengths.append(strength)
    return CALIBRATION_SLACK * min(strengths)


def estimate_blur(value: np.ndarray, mask: np.ndarray) -> Tuple[float, float]:
    """
    Blur proxy in [0, 1] and Gaussian-equivalent std in pixels (capped at ``MAX_BLUR_SIGMA``).

    Both are 0 when the outline is at least as crisp as a sharp render or has
    no usable contrast.
    """
    strength = edge_strength(value, mask)
    if strength is None:
        return 0.0, 0.0
    ratio = min(1.0, strength / sharp_edge_strength())
    if ratio >= 1.0:
        return 0.0, 0.0
    if ratio <= 0.0:
        return 1.0, MAX_BLUR_SIGMA
    return 1.0 - ratio, min(MAX_BLUR_SIGMA, 1.0 / (math.sqrt(2.0) * float(erfinv(ratio))))


def measure_stats(image: np.ndarray) -> MeasuredStats:
    """
    Measure saturation, value, subject placement, size and blur.

    Degenerate images get the image centre as centroid, size 0 and no blur.

    Raises:
        PixelRangeError: If the image is not (H, W, 3) in [0, 1]
    """
    hsv = rgb_to_hsv_map(image).astype(np.float64)
    value = hsv[..., 2]
    height, width = value.shape
    mask, degenerate = _segment_value(value)

    if degenerate:
        cx = cy = 0.5
        size = blur = sigma = 0.0
    else:
        rows, cols = np.nonzero(mask)
        cx = (cols.mean() + 0.5) / width
        cy = (rows.mean() + 0.5) / height
        size = mask.sum() / float(height * width)
        blur, sigma = estimate_blur(value, mask)

    return MeasuredStats(
        saturation=float(hsv[..., 1].mean()),
        value=float(value.mean()),
        background_value=float(np.median(border_pixels(value))),
        cx=float(cx),
        cy=float(cy),
        size=float(size),
        blur=float(blur),
        blur_sigma=float(sigma),
        degenerate=bool(degenerate),
    )
