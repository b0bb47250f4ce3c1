"""Full-pipeline prediction and detection scoring."""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from ..config.models import EvalConfig
from ..errors import ShapeError
from ..gradients import run_stack
from ..heads import MASS_CLASS, classify, decode_regression, regress
from ..model import ModelParams
from ..schema import Detection, PairedSample, RoiGeometry, View
from ..utils import PathLike, atomic_write_bytes, write_json
from .metrics import f1_score, froc_curve, froc_interpolate, greedy_match_flags, non_max_suppression

logger = logging.getLogger(__name__)

ImageResult = Tuple[List[Detection], List[RoiGeometry]]


class MetricsReport(BaseModel):
    """Headline operating point plus the full FROC curve."""

    precision: float
    recall: float
    f1: float
    fpi: float
    froc: List[Tuple[float, float]] = Field(default_factory=list)
    threshold: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_images: int = 0
    n_detections: int = 0
    tpr_at_fpi: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode='after')
    def validate_ranges(self):
        for name in ("precision", "recall", "f1"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.fpi < 0:
            raise ValueError("fpi must be non-negative")
        if any(not 0.0 <= tpr <= 1.0 for _, tpr in self.froc):
            raise ValueError("FROC TPR values must lie in [0, 1]")
        return self


def _check_dims(sample: PairedSample, model: ModelParams) -> None:
    d_f = sample.d_f
    if d_f is not None and d_f != model.d_f:
        raise ShapeError(f"case {sample.case_id}: dataset features have length {d_f}, "
                         f"model expects {model.d_f}", expected=(model.d_f,), actual=(d_f,))


def predict_sample(sample: PairedSample, model: ModelParams) -> Tuple[List[Detection], List[Detection]]:
    """Scored, decoded detections of every candidate in both views (before suppression)."""
    _check_dims(sample, model)
    if sample.view1 and sample.view2:
        feats1, feats2, _ = run_stack(sample, model)
    else:
        logger.warning(f"case {sample.case_id}: one view has no candidates; relation stack skipped")
        feats1 = [c.feature for c in sample.view1]
        feats2 = [c.feature for c in sample.view2]

    results = []
    for view, feats in ((View.VIEW1, feats1), (View.VIEW2, feats2)):
        head = model.head_for(view)
        dets = []
        for cand, feature in zip(sample.candidates(view), feats):
            score = float(np.clip(classify(feature, head)[MASS_CLASS], 0.0, 1.0))
            dets.append(Detection(decode_regression(cand.geometry, regress(feature, head)), score, view))
        results.append(dets)
    return results[0], results[1]


def predict_images(model: ModelParams, dataset: Sequence[PairedSample], nms_iou: float = 0.5) -> List[ImageResult]:
    """Per single-view image: suppressed detections and ground-truth boxes."""
    images: List[ImageResult] = []
    for sample in dataset:
        for view, dets in zip((View.VIEW1, View.VIEW2), predict_sample(sample, model)):
            gts = [g.geometry for g in sample.ground_truth(view)]
            images.append((non_max_suppression(dets, nms_iou), gts))
    return images


def evaluate_detections(images: Sequence[ImageResult], score_threshold: float = 0.5,
                        iou_threshold: float = 0.5,
                        fpi_points: Sequence[float] = (1.2, 1.9, 4.4)) -> MetricsReport:
    """
    Score detections image by image.

    The headline row keeps detections scoring strictly above
    ``score_threshold``; the FROC curve sweeps every distinct score.
    """
    if not images:
        raise ValueError("at least one image is required")
    tp = fp = n_gts = n_kept = 0
    pooled: List[Tuple[float, bool]] = []
    for dets, gts in images:
        ordered, flags = greedy_match_flags(dets, gts, iou_threshold)
        n_gts += len(gts)
        for det, hit in zip(ordered, flags):
            pooled.append((det.score, hit))
            if det.score > score_threshold:
                n_kept += 1
                tp += hit
                fp += not hit
    fn = n_gts - tp
    n_images = len(images)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / n_gts if n_gts else 0.0
    froc = froc_curve(pooled, n_gts, n_images)
    return MetricsReport(
        precision=precision, recall=recall, f1=f1_score(precision, recall), fpi=fp / n_images,
        froc=froc, threshold=score_threshold, tp=tp, fp=fp, fn=fn, n_images=n_images,
        n_detections=n_kept,
        tpr_at_fpi={f"{p:g}": froc_interpolate(froc, p) for p in fpi_points},
    )


def evaluate(model: ModelParams, dataset: Sequence[PairedSample], score_threshold: float = 0.5,
             nms_iou: float = 0.5, iou_threshold: float = 0.5,
             fpi_points: Sequence[float] = (1.2, 1.9, 4.4)) -> MetricsReport:
    """Relation stack, heads, decoding, per-view suppression and scoring over ``dataset``."""
    if not dataset:
        raise ValueError("dataset must not be empty")
    report = evaluate_detections(predict_images(model, dataset, nms_iou), score_threshold,
                                 iou_threshold, fpi_points)
    logger.info(f"Evaluated {len(dataset)} cases: precision {report.precision:.4f}, "
                f"recall {report.recall:.4f}, F1 {report.f1:.4f}, FPI {report.fpi:.4f}")
    return report


def evaluate_with_config(model: ModelParams, dataset: Sequence[PairedSample], cfg: EvalConfig) -> MetricsReport:
    return evaluate(model, dataset, cfg.score_threshold, cfg.nms_iou, cfg.iou_threshold, cfg.fpi_points)


def write_report(report: MetricsReport, path: PathLike, config_echo: Optional[Dict[str, Any]] = None) -> None:
    payload = report.model_dump(mode="json")
    payload["config"] = config_echo or {}
    write_json(path, payload)
    logger.info(f"Wrote metrics report to {path}")


def write_froc_csv(report: MetricsReport, path: PathLike) -> None:
    frame = pd.DataFrame(report.froc, columns=["fpi", "tpr"])
    atomic_write_bytes(path, frame.to_csv(index=False).encode("utf-8"))
