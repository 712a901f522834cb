"""
Visual aesthetic maps derived from an RGB image.

* HSV map: a pixel-wise colour space conversion, shape (H, W, 3).
* Contour map: normalized Sobel gradient magnitude of luminance, shape (H, W).
"""

from typing import Optional, Protocol, Tuple

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy import ndimage

from src.core.exceptions import PixelRangeError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
# Largest Sobel magnitude on a [0, 1] image is 4 * sqrt(2).
SOBEL_NORMALIZER = 4.0 * np.sqrt(2.0)


def _check_rgb(image: np.ndarray) -> np.ndarray:
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[-1] != 3:
        raise PixelRangeError(
            message=f"Expected an (H, W, 3) RGB image, got shape {array.shape}",
            error_code="PIXEL_LAYOUT",
        )
    if array.size and (not np.all(np.isfinite(array)) or array.min() < 0.0 or array.max() > 1.0):
        raise PixelRangeError(
            message="RGB values must lie in [0, 1]",
            error_code="PIXEL_RANGE",
            details={"min": float(np.nanmin(array)), "max": float(np.nanmax(array))},
        )
    return array


def _output_dtype(array: np.ndarray) -> np.dtype:
    return array.dtype if array.dtype in (np.float32, np.float64) else np.dtype(np.float64)


def rgb_to_hsv_map(image: np.ndarray) -> np.ndarray:
    """
    Per-pixel HSV with every channel in [0, 1].

    Hue of achromatic pixels is 0.

    Raises:
        PixelRangeError: If the image is not (H, W, 3) in [0, 1]
    """
    array = _check_rgb(image)
    return rgb_to_hsv(array.astype(np.float64)).astype(_output_dtype(array))


def hsv_map_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse of ``rgb_to_hsv_map``."""
    array = _check_rgb(hsv)
    return hsv_to_rgb(array.astype(np.float64)).astype(_output_dtype(array))


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an (H, W, 3) image."""
    return np.asarray(image, dtype=np.float64) @ LUMA_WEIGHTS


def sobel_magnitude(channel: np.ndarray) -> np.ndarray:
    """Normalized 3x3 Sobel gradient magnitude of a single (H, W) channel, clipped to [0, 1]."""
    gx = ndimage.sobel(channel, axis=1, mode="nearest")
    gy = ndimage.sobel(channel, axis=0, mode="nearest")
    return np.clip(np.hypot(gx, gy) / SOBEL_NORMALIZER, 0.0, 1.0)


class ContourExtractor(Protocol):
    """Anything mapping an RGB image to an (H, W) map in [0, 1]."""

    def __call__(self, image: np.ndarray) -> np.ndarray: ...


class SobelContourExtractor:
    """3x3 Sobel magnitude on luminance with replicated borders."""

    def __call__(self, image: np.ndarray) -> np.ndarray:
        array = _check_rgb(image)
        return sobel_magnitude(luminance(array)).astype(_output_dtype(array))


DEFAULT_CONTOUR_EXTRACTOR: ContourExtractor = SobelContourExtractor()


def contour_map(image: np.ndarray, extractor: Optional[ContourExtractor] = None) -> np.ndarray:
    """
    Edge-strength map of an RGB image.

    Raises:
        PixelRangeError: If the image is not (H, W, 3) in [0, 1]
    """
    return (extractor or DEFAULT_CONTOUR_EXTRACTOR)(image)


def aesthetic_maps(images: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """HSV maps (N, H, W, 3) and contour maps (N, H, W) of a batch of RGB images."""
    hsv = np.stack([rgb_to_hsv_map(image) for image in images])
    contour = np.stack([contour_map(image) for image in images])
    return hsv, contour
