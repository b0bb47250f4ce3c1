"""Detection scoring: IoU matching, precision/recall/F1, FPI and FROC."""

from .metrics import froc_curve, froc_interpolate, iou, match_detections, non_max_suppression
from .evaluator import (
    MetricsReport,
    evaluate,
    evaluate_detections,
    evaluate_with_config,
    predict_sample,
    write_froc_csv,
    write_report,
)

__all__ = [
    "MetricsReport",
    "evaluate",
    "evaluate_detections",
    "evaluate_with_config",
    "froc_curve",
    "froc_interpolate",
    "iou",
    "match_detections",
    "non_max_suppression",
    "predict_sample",
    "write_froc_csv",
    "write_report",
]
