"""Measurement-based scores, the evaluation runner and ablations."""

from src.evaluation.measure import MeasuredStats, measure_stats, otsu_threshold, segment_subject
from src.evaluation.report import EvalReport, EvalRow, build_report, write_report
from src.evaluation.scores import mask_iou, normalized_cross_correlation, pas_score, scs_score

__all__ = [
    "EvalReport",
    "EvalRow",
    "MeasuredStats",
    "build_report",
    "mask_iou",
    "measure_stats",
    "normalized_cross_correlation",
    "otsu_threshold",
    "pas_score",
    "scs_score",
    "segment_subject",
    "write_report",
]
