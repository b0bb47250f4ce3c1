"""
Synthetic paired-view detection problems.

Each case images the same latent lesions in two views. A lesion's first
coordinate follows its depth and agrees across views up to placement noise;
its second coordinate is drawn independently per view. Lesion candidates
carry a shared signature seen through a fixed appearance matrix plus
view-specific noise. Distractors get uncorrelated positions and features
interpolated between noise and a real lesion signature.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..config.models import GeneratorConfig
from ..evaluation.metrics import iou
from ..heads import encode_regression_target
from ..numerics import Rng
from ..schema import CandidateTarget, GroundTruthBox, Label, PairedSample, RoiCandidate, RoiGeometry, View

logger = logging.getLogger(__name__)

POSITIVE_IOU = 0.5
NEGATIVE_IOU = 0.3
ASPECT_RANGE = (0.85, 1.15)
MAX_PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True, eq=False)
class LatentLesion:
    identity: int
    shared_signature: np.ndarray
    size: float
    depth: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError(f"lesion size must be positive, got {self.size}")
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError(f"lesion depth must lie in [0, 1], got {self.depth}")


@dataclass(frozen=True, eq=False)
class LesionAppearance:
    """Dataset-wide lesion prototype and signature-to-feature map."""
    prototype: np.ndarray
    matrix: np.ndarray

    @classmethod
    def from_config(cls, cfg: GeneratorConfig) -> "LesionAppearance":
        rng = Rng(cfg.seed).derive(0)
        return cls(prototype=rng.normal(size=cfg.d_sig), matrix=rng.normal(size=(cfg.d_f, cfg.d_sig)))

    def feature(self, signature: np.ndarray) -> np.ndarray:
        return self.matrix @ signature / np.sqrt(signature.shape[0])


def assign_targets(candidates: Sequence[RoiCandidate], gts: Sequence[GroundTruthBox],
                   positive_iou: float = POSITIVE_IOU,
                   negative_iou: float = NEGATIVE_IOU) -> List[CandidateTarget]:
    """Label each candidate by its best IoU with the view's ground truth."""
    targets = []
    for cand in candidates:
        overlaps = [iou(cand.geometry, gt.geometry) for gt in gts]
        best = int(np.argmax(overlaps)) if overlaps else -1
        best_iou = overlaps[best] if overlaps else 0.0
        if best_iou >= positive_iou:
            targets.append(CandidateTarget(Label.POSITIVE,
                                           encode_regression_target(cand.geometry, gts[best].geometry)))
        elif best_iou < negative_iou:
            targets.append(CandidateTarget(Label.NEGATIVE))
        else:
            targets.append(CandidateTarget(Label.IGNORE))
    return targets


def _clip_center(value: float, half: float, extent: float) -> float:
    return float(np.clip(value, half, extent - half))


def _draw_lesions(cfg: GeneratorConfig, rng: Rng, appearance: LesionAppearance) -> List[LatentLesion]:
    margin = 0.5 * ASPECT_RANGE[1] * cfg.lesion_size_range[1] / cfg.image_extent
    lesions = []
    for identity in range(rng.integers(*cfg.lesions_per_case)):
        signature = appearance.prototype + cfg.lesion_variation * rng.normal(size=cfg.d_sig)
        lesions.append(LatentLesion(
            identity=identity,
            shared_signature=signature,
            size=float(rng.uniform(*cfg.lesion_size_range)),
            depth=float(rng.uniform(margin, 1.0 - margin)),
        ))
    return lesions


def _lesion_view(cfg: GeneratorConfig, rng: Rng, appearance: LesionAppearance, lesion: LatentLesion,
                 view: View) -> Tuple[GroundTruthBox, RoiCandidate]:
    sigma = cfg.geometry_noise_sigma
    aspect = float(rng.uniform(*ASPECT_RANGE))
    w, h = lesion.size * aspect, lesion.size / aspect
    x = _clip_center(lesion.depth * cfg.image_extent + rng.normal(0.0, sigma), w / 2, cfg.image_extent)
    y = float(rng.uniform(h / 2, cfg.image_extent - h / 2))
    gt = RoiGeometry(x, y, w, h)

    rel_sigma = sigma / lesion.size
    box = RoiGeometry(
        x=x + float(rng.normal(0.0, sigma)),
        y=y + float(rng.normal(0.0, sigma)),
        w=w * float(np.exp(rng.normal(0.0, rel_sigma))),
        h=h * float(np.exp(rng.normal(0.0, rel_sigma))),
    )
    feature = appearance.feature(lesion.shared_signature) + rng.normal(0.0, cfg.feature_noise_sigma, size=cfg.d_f)
    return GroundTruthBox(gt, lesion.identity), RoiCandidate(box, feature, view, lesion=lesion.identity)


def _distractor(cfg: GeneratorConfig, rng: Rng, appearance: LesionAppearance, lesions: List[LatentLesion],
                gts: List[GroundTruthBox], view: View) -> RoiCandidate:
    extent = cfg.image_extent
    box = None
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        size = float(rng.uniform(*cfg.lesion_size_range))
        aspect = float(rng.uniform(*ASPECT_RANGE))
        w, h = size * aspect, size / aspect
        box = RoiGeometry(float(rng.uniform(w / 2, extent - w / 2)),
                          float(rng.uniform(h / 2, extent - h / 2)), w, h)
        if all(iou(box, gt.geometry) < NEGATIVE_IOU for gt in gts):
            break
    if lesions:
        lure = lesions[rng.integers(0, len(lesions) - 1)].shared_signature
    else:
        lure = appearance.prototype + cfg.lesion_variation * rng.normal(size=cfg.d_sig)
    c = cfg.distractor_confusability
    signature = (1.0 - c) * rng.normal(size=cfg.d_sig) + c * lure
    feature = appearance.feature(signature) + rng.normal(0.0, cfg.feature_noise_sigma, size=cfg.d_f)
    return RoiCandidate(box, feature, view)


def generate_case(cfg: GeneratorConfig, rng: Rng, case_id: int = 0) -> PairedSample:
    """One paired case drawn from ``rng``."""
    appearance = LesionAppearance.from_config(cfg)
    lesions = _draw_lesions(cfg, rng, appearance)
    views = {}
    for view in (View.VIEW1, View.VIEW2):
        gts, cands = [], []
        for lesion in lesions:
            gt, cand = _lesion_view(cfg, rng, appearance, lesion, view)
            gts.append(gt)
            cands.append(cand)
        for _ in range(rng.integers(*cfg.distractors_per_view)):
            cands.append(_distractor(cfg, rng, appearance, lesions, gts, view))
        order = rng.permutation(len(cands))
        cands = [cands[i] for i in order]
        views[view] = (cands, gts, assign_targets(cands, gts))
    (view1, gt1, targets1), (view2, gt2, targets2) = views[View.VIEW1], views[View.VIEW2]
    return PairedSample(case_id=case_id, view1=view1, view2=view2, gt1=gt1, gt2=gt2,
                        targets1=targets1, targets2=targets2)


def generate_dataset(cfg: GeneratorConfig) -> List[PairedSample]:
    """``cfg.n_cases`` cases, each from its own derived stream."""
    root = Rng(cfg.seed)
    samples = [generate_case(cfg, root.derive(1, i), case_id=i) for i in range(cfg.n_cases)]
    n_candidates = sum(len(s.view1) + len(s.view2) for s in samples)
    n_lesions = sum(len(s.gt1) for s in samples)
    logger.info(f"Generated {len(samples)} cases with {n_lesions} lesions and {n_candidates} candidates")
    return samples


def split_dataset(samples: Sequence[PairedSample],
                  train_fraction: float = 0.8) -> Tuple[List[PairedSample], List[PairedSample]]:
    """Case-level split keeping the original order."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie strictly between 0 and 1, got {train_fraction}")
    cut = int(round(len(samples) * train_fraction))
    return list(samples[:cut]), list(samples[cut:])
