"""
Per-candidate classification and box-regression heads and the two-view loss.

Class index 0 is background and index 1 is mass; the detection score of a
candidate is its class-1 probability.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .config.models import LossWeights
from .errors import NumericalError, ShapeError
from .numerics import Matrix, Vector, as_matrix, as_vector
from .schema import CandidateTarget, Label, RoiGeometry

N_CLASSES = 2
MASS_CLASS = 1
SMOOTH_L1_KNOT = 1.0
# Largest log-size offset magnitude applied when decoding boxes.
BBOX_XFORM_CLIP = float(np.log(1000.0 / 16))
_PROB_FLOOR = np.finfo(np.float64).tiny


@dataclass(frozen=True, eq=False)
class HeadParams:
    """One affine classification layer and one affine regression layer."""
    cls_weight: Matrix
    cls_bias: Vector
    reg_weight: Matrix
    reg_bias: Vector

    TENSOR_NAMES = ("cls_weight", "cls_bias", "reg_weight", "reg_bias")

    def __post_init__(self):
        cls_weight = as_matrix(self.cls_weight, name="cls_weight")
        if cls_weight.shape[0] != N_CLASSES:
            raise ShapeError("cls_weight must have 2 rows", expected=(N_CLASSES,), actual=cls_weight.shape[:1])
        d_f = cls_weight.shape[1]
        object.__setattr__(self, "cls_weight", cls_weight)
        object.__setattr__(self, "cls_bias", as_vector(self.cls_bias, N_CLASSES, "cls_bias"))
        object.__setattr__(self, "reg_weight", as_matrix(self.reg_weight, (4, d_f), "reg_weight"))
        object.__setattr__(self, "reg_bias", as_vector(self.reg_bias, 4, "reg_bias"))

    @property
    def d_f(self) -> int:
        return self.cls_weight.shape[1]

    def tensors(self):
        return {name: getattr(self, name) for name in self.TENSOR_NAMES}


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_features(features: np.ndarray, params: HeadParams) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != params.d_f:
        raise ShapeError("feature length does not match the heads", expected=(params.d_f,),
                         actual=features.shape[-1:])
    return features


def classify(feature: Vector, params: HeadParams) -> Vector:
    """Class probabilities of one feature (or a matrix of features, row-wise)."""
    feature = _check_features(feature, params)
    return softmax(feature @ params.cls_weight.T + params.cls_bias)


def regress(feature: Vector, params: HeadParams) -> Vector:
    """Box offsets ``[t_x, t_y, t_w, t_h]`` of one feature (or row-wise)."""
    feature = _check_features(feature, params)
    return feature @ params.reg_weight.T + params.reg_bias


def encode_regression_target(anchor: RoiGeometry, gt: RoiGeometry) -> Vector:
    """Offsets that move ``anchor`` onto ``gt``."""
    return np.array([
        (gt.x - anchor.x) / anchor.w,
        (gt.y - anchor.y) / anchor.h,
        np.log(gt.w / anchor.w),
        np.log(gt.h / anchor.h),
    ])


def decode_regression(anchor: RoiGeometry, offsets: Vector) -> RoiGeometry:
    """Inverse of :func:`encode_regression_target`."""
    t = as_vector(offsets, 4, "offsets")
    if not np.all(np.isfinite(t)):
        raise NumericalError(f"cannot decode non-finite offsets {t.tolist()}")
    tw, th = np.clip(t[2:], -BBOX_XFORM_CLIP, BBOX_XFORM_CLIP)
    return RoiGeometry(
        x=anchor.x + t[0] * anchor.w,
        y=anchor.y + t[1] * anchor.h,
        w=anchor.w * float(np.exp(tw)),
        h=anchor.h * float(np.exp(th)),
    )


def smooth_l1(x):
    """Quadratic inside the knot, linear outside, continuous slope at the knot."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax < SMOOTH_L1_KNOT, 0.5 * x * x / SMOOTH_L1_KNOT, ax - 0.5 * SMOOTH_L1_KNOT)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < SMOOTH_L1_KNOT, x / SMOOTH_L1_KNOT, np.sign(x))


def view_loss_arrays(probs: np.ndarray, regs: np.ndarray, labels: np.ndarray,
                     reg_targets: np.ndarray) -> Tuple[float, float]:
    """
    Mean cross-entropy over labelled candidates and mean smooth-L1 over positives.

    ``labels`` holds label codes (1 positive, 0 negative, -1 ignore);
    ``reg_targets`` rows are read for positives only. Empty sets give 0.
    """
    if not (probs.shape[0] == regs.shape[0] == labels.shape[0] == reg_targets.shape[0]):
        raise ShapeError("loss inputs are not aligned",
                         actual=(probs.shape[0], regs.shape[0], labels.shape[0], reg_targets.shape[0]))
    labelled = labels >= 0
    n_cls = int(labelled.sum())
    if n_cls:
        picked = probs[labelled, labels[labelled]]
        cls_loss = float(-np.log(np.maximum(picked, _PROB_FLOOR)).sum() / n_cls)
    else:
        cls_loss = 0.0
    positive = labels == Label.POSITIVE.code
    n_pos = int(positive.sum())
    if n_pos:
        reg_loss = float(smooth_l1(regs[positive] - reg_targets[positive]).sum() / n_pos)
    else:
        reg_loss = 0.0
    return cls_loss, reg_loss


def target_arrays(targets: Sequence[CandidateTarget]) -> Tuple[np.ndarray, np.ndarray]:
    """Label codes and a zero-padded regression-target matrix."""
    labels = np.array([t.label.code for t in targets], dtype=np.int64)
    reg_targets = np.zeros((len(targets), 4))
    for i, t in enumerate(targets):
        if t.regression_target is not None:
            reg_targets[i] = t.regression_target
    return labels, reg_targets


def view_loss(probs: Sequence[Vector], regs: Sequence[Vector],
              targets: Sequence[CandidateTarget]) -> Tuple[float, float]:
    """``(cls_loss, reg_loss)`` of one view."""
    if not len(probs) == len(regs) == len(targets):
        raise ShapeError("loss inputs are not aligned", actual=(len(probs), len(regs), len(targets)))
    labels, reg_targets = target_arrays(targets)
    probs_arr = np.asarray(probs, dtype=np.float64).reshape(len(probs), N_CLASSES)
    regs_arr = np.asarray(regs, dtype=np.float64).reshape(len(regs), 4)
    return view_loss_arrays(probs_arr, regs_arr, labels, reg_targets)


def total_loss(v1: Tuple[float, float], v2: Tuple[float, float], wts: LossWeights) -> float:
    """``L1_cls + alpha*L1_reg + beta*L2_cls + gamma*L2_reg``."""
    return v1[0] + wts.alpha * v1[1] + wts.beta * v2[0] + wts.gamma * v2[1]
