"""Conversions between stored images (HWC in [0, 1]) and model space (NCHW in [-1, 1])."""

import numpy as np

from src.core.exceptions import PixelRangeError


def encode_images(images: np.ndarray) -> np.ndarray:
    """
    Map a batch (N, H, W, 3) or a single image (H, W, 3) in [0, 1] to NCHW in [-1, 1].

    Raises:
        PixelRangeError: If values fall outside [0, 1] or the layout is not RGB
    """
    batch = np.asarray(images)
    if batch.ndim == 3:
        batch = batch[None]
    if batch.ndim != 4 or batch.shape[-1] != 3:
        raise PixelRangeError(
            message=f"Expected RGB images of shape (N, H, W, 3), got {np.shape(images)}",
            error_code="PIXEL_LAYOUT",
        )
    if batch.size and (batch.min() < 0.0 or batch.max() > 1.0):
        raise PixelRangeError(
            message="Pixel values must lie in [0, 1]",
            error_code="PIXEL_RANGE",
            details={"min": float(batch.min()), "max": float(batch.max())},
        )
    return np.ascontiguousarray(batch.transpose(0, 3, 1, 2) * 2.0 - 1.0, dtype=np.float32)


def decode_images(x: np.ndarray) -> np.ndarray:
    """Map NCHW model-space samples back to (N, H, W, 3) in [0, 1], clamping."""
    out = (np.asarray(x, dtype=np.float64) + 1.0) / 2.0
    return np.clip(out, 0.0, 1.0).transpose(0, 2, 3, 1).astype(np.float32)
