"""
Aesthetic (PAS) and content-consistency (SCS) scores.

PAS feeds measured statistics through the same MOS formula the generator
labels images with, so no ground-truth rendering parameter is read.
SCS = 0.5·IoU(segment(generated), input mask) + 0.5·max(0, NCC(luma)).
"""

from dataclasses import dataclass

import numpy as np

from src.conditioning.maps import luminance
from src.core.exceptions import ShapeMismatchError
from src.evaluation.measure import MeasuredStats, measure_stats, segment_subject
from src.pairing.mos import mos_from_values


@dataclass(frozen=True)
class ScoreResult:
    score: float
    degenerate: bool


def pas_from_stats(stats: MeasuredStats) -> float:
    """MOS of measured statistics; brightness is the mean V of the image."""
    return mos_from_values(stats.saturation, stats.value, stats.cx, stats.cy, stats.blur_sigma)


def pas_detail(image: np.ndarray) -> ScoreResult:
    stats = measure_stats(image)
    return ScoreResult(score=pas_from_stats(stats), degenerate=stats.degenerate)


def pas_score(image: np.ndarray) -> float:
    """
    Parametric aesthetic score in [1, 10].

    Raises:
        PixelRangeError: If the image is not (H, W, 3) in [0, 1]
    """
    return pas_detail(image).score


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; two empty masks score 0."""
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean NCC; 0 when either input has no variance."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    x = x - x.mean()
    y = y - y.mean()
    denominator = np.sqrt((x * x).sum() * (y * y).sum())
    if denominator < 1e-12:
        return 0.0
    return float(np.clip((x * y).sum() / denominator, -1.0, 1.0))


def scs_detail(generated: np.ndarray, source: np.ndarray, source_mask: np.ndarray) -> ScoreResult:
    if generated.shape != source.shape or generated.shape[:2] != source_mask.shape:
        raise ShapeMismatchError("scs_score", [generated.shape, source.shape, source_mask.shape])
    mask, degenerate = segment_subject(generated)
    iou = 0.0 if degenerate else mask_iou(mask, source_mask)
    ncc = normalized_cross_correlation(luminance(generated), luminance(source))
    return ScoreResult(score=0.5 * iou + 0.5 * max(0.0, ncc), degenerate=degenerate)


def scs_score(generated: np.ndarray, source: np.ndarray, source_mask: np.ndarray) -> float:
    """
    Semantic consistency of ``generated`` with ``source`` in [0, 1].

    Raises:
        ShapeMismatchError: If the images or mask differ in size
    """
    return scs_detail(generated, source, source_mask).score
