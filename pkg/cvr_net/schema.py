"""Domain records shared across the relation network, data and evaluation code."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, ShapeError


class View(str, Enum):
    """The two paired views of one case."""
    VIEW1 = "view1"
    VIEW2 = "view2"


class Label(str, Enum):
    """Training label of a candidate."""
    POSITIVE = "positive"
    NEGATIVE = "negative"
    IGNORE = "ignore"

    @property
    def code(self) -> int:
        return _LABEL_CODES[self]


_LABEL_CODES = {Label.POSITIVE: 1, Label.NEGATIVE: 0, Label.IGNORE: -1}


@dataclass(frozen=True)
class RoiGeometry:
    """Center-based box ``[x, y, w, h]`` in image units."""
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"geometry {name} must be finite, got {getattr(self, name)}")
        if not (self.w > 0 and self.h > 0):
            raise DomainError(f"geometry width and height must be positive, got w={self.w}, h={self.h}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def corners(self) -> Tuple[float, float, float, float]:
        """``(x0, y0, x1, y1)`` corner form."""
        return (self.x - self.w / 2, self.y - self.h / 2,
                self.x + self.w / 2, self.y + self.h / 2)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True, eq=False)
class RoiCandidate:
    """One proposal in one view; ``lesion`` links true positives to their lesion."""
    geometry: RoiGeometry
    feature: np.ndarray
    view: View
    lesion: Optional[int] = None

    def __post_init__(self):
        feature = np.asarray(self.feature, dtype=np.float64)
        if feature.ndim != 1:
            raise ShapeError("candidate feature must be one-dimensional", actual=feature.shape)
        object.__setattr__(self, "feature", feature)
        object.__setattr__(self, "view", View(self.view))

    @property
    def d_f(self) -> int:
        return self.feature.shape[0]


@dataclass(frozen=True, eq=False)
class CandidateTarget:
    """Assigned label; ``regression_target`` is present iff the label is positive."""
    label: Label
    regression_target: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if self.label is Label.POSITIVE:
            if self.regression_target is None:
                raise DomainError("positive targets need a regression target")
            target = np.asarray(self.regression_target, dtype=np.float64)
            if target.shape != (4,):
                raise ShapeError("regression target must have 4 entries", expected=(4,), actual=target.shape)
            object.__setattr__(self, "regression_target", target)
        elif self.regression_target is not None:
            raise DomainError(f"{self.label.value} targets carry no regression target")


@dataclass(frozen=True)
class GroundTruthBox:
    geometry: RoiGeometry
    lesion: int


@dataclass(eq=False)
class PairedSample:
    """One two-view case with its candidates, ground truth and targets."""
    case_id: int
    view1: List[RoiCandidate]
    view2: List[RoiCandidate]
    gt1: List[GroundTruthBox]
    gt2: List[GroundTruthBox]
    targets1: List[CandidateTarget] = field(default_factory=list)
    targets2: List[CandidateTarget] = field(default_factory=list)

    def __post_init__(self):
        if len(self.targets1) != len(self.view1) or len(self.targets2) != len(self.view2):
            raise DomainError(f"case {self.case_id}: targets are not aligned with candidates")
        lesions1 = {g.lesion for g in self.gt1}
        lesions2 = {g.lesion for g in self.gt2}
        if lesions1 != lesions2:
            raise DomainError(f"case {self.case_id}: lesion ids differ between views "
                              f"({sorted(lesions1)} vs {sorted(lesions2)})")

    def candidates(self, view: View) -> List[RoiCandidate]:
        return self.view1 if view is View.VIEW1 else self.view2

    def targets(self, view: View) -> List[CandidateTarget]:
        return self.targets1 if view is View.VIEW1 else self.targets2

    def ground_truth(self, view: View) -> List[GroundTruthBox]:
        return self.gt1 if view is View.VIEW1 else self.gt2

    @property
    def d_f(self) -> Optional[int]:
        for cand in self.view1 + self.view2:
            return cand.d_f
        return None


@dataclass(frozen=True)
class Detection:
    """A scored, decoded box in one view."""
    geometry: RoiGeometry
    score: float
    view: View

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise DomainError(f"detection score must lie in [0, 1], got {self.score}")
