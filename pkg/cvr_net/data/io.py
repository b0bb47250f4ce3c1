"""
JSON Lines dataset files, one paired case per line.

Record layout::

    {"case_id": 0,
     "view1": [{"x":..,"y":..,"w":..,"h":..,"feature":[..],"label":"positive","target":[..],"lesion":0}, ..],
     "view2": [..],
     "gt1": [{"x":..,"y":..,"w":..,"h":..,"lesion":0}, ..],
     "gt2": [..]}

Floats are written by orjson as the shortest decimal that reads back to the
identical float64, so a write/read cycle is lossless.
"""

import logging
from typing import List, Optional, Sequence

import orjson
import pydantic
from pydantic import BaseModel, Field

from ..errors import CVRError, CVRIOError, DatasetFormatError, DatasetSchemaError
from ..schema import CandidateTarget, GroundTruthBox, Label, PairedSample, RoiCandidate, RoiGeometry, View
from ..utils import PathLike, atomic_write_bytes

logger = logging.getLogger(__name__)


class GroundTruthRecord(BaseModel):
    x: float
    y: float
    w: float
    h: float
    lesion: int


class CandidateRecord(BaseModel):
    x: float
    y: float
    w: float
    h: float
    feature: List[float]
    label: Label
    target: List[float] = Field(default_factory=list)
    lesion: Optional[int] = None


class CaseRecord(BaseModel):
    case_id: int
    view1: List[CandidateRecord]
    view2: List[CandidateRecord]
    gt1: List[GroundTruthRecord]
    gt2: List[GroundTruthRecord]


def _candidate_record(cand: RoiCandidate, target: CandidateTarget) -> dict:
    g = cand.geometry
    record = {"x": g.x, "y": g.y, "w": g.w, "h": g.h,
              "feature": cand.feature.tolist(), "label": target.label.value,
              "target": [] if target.regression_target is None else target.regression_target.tolist()}
    if cand.lesion is not None:
        record["lesion"] = cand.lesion
    return record


def _gt_record(gt: GroundTruthBox) -> dict:
    g = gt.geometry
    return {"x": g.x, "y": g.y, "w": g.w, "h": g.h, "lesion": gt.lesion}


def sample_to_record(sample: PairedSample) -> dict:
    return {
        "case_id": sample.case_id,
        "view1": [_candidate_record(c, t) for c, t in zip(sample.view1, sample.targets1)],
        "view2": [_candidate_record(c, t) for c, t in zip(sample.view2, sample.targets2)],
        "gt1": [_gt_record(g) for g in sample.gt1],
        "gt2": [_gt_record(g) for g in sample.gt2],
    }


def encode_dataset(samples: Sequence[PairedSample]) -> bytes:
    return b"".join(orjson.dumps(sample_to_record(s), option=orjson.OPT_SORT_KEYS) + b"\n" for s in samples)


def write_dataset(samples: Sequence[PairedSample], path: PathLike) -> None:
    """Serialize ``samples`` to ``path`` atomically."""
    atomic_write_bytes(path, encode_dataset(samples))
    logger.info(f"Wrote {len(samples)} cases to {path}")


def _record_to_sample(record: CaseRecord) -> PairedSample:
    def candidates(records: List[CandidateRecord], view: View):
        cands, targets = [], []
        for r in records:
            cands.append(RoiCandidate(RoiGeometry(r.x, r.y, r.w, r.h), r.feature, view, lesion=r.lesion))
            targets.append(CandidateTarget(r.label, r.target if r.label is Label.POSITIVE else None))
        return cands, targets

    view1, targets1 = candidates(record.view1, View.VIEW1)
    view2, targets2 = candidates(record.view2, View.VIEW2)
    gt1 = [GroundTruthBox(RoiGeometry(g.x, g.y, g.w, g.h), g.lesion) for g in record.gt1]
    gt2 = [GroundTruthBox(RoiGeometry(g.x, g.y, g.w, g.h), g.lesion) for g in record.gt2]
    return PairedSample(case_id=record.case_id, view1=view1, view2=view2, gt1=gt1, gt2=gt2,
                        targets1=targets1, targets2=targets2)


def read_dataset(path: PathLike) -> List[PairedSample]:
    """Inverse of :func:`write_dataset`."""
    samples: List[PairedSample] = []
    d_f: Optional[int] = None
    try:
        with open(path, "rb") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise CVRIOError(str(path), f"read failed: {e}", e) from e

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = CaseRecord.model_validate(orjson.loads(line))
            sample = _record_to_sample(record)
        except orjson.JSONDecodeError as e:
            raise DatasetFormatError(str(path), line_no, f"invalid JSON: {e}") from e
        except pydantic.ValidationError as e:
            first = e.errors()[0]
            where = ".".join(str(p) for p in first.get("loc", ()))
            raise DatasetFormatError(str(path), line_no, f"{where}: {first.get('msg')}") from e
        except CVRError as e:
            raise DatasetFormatError(str(path), line_no, e.message) from e

        for cand in sample.view1 + sample.view2:
            if d_f is None:
                d_f = cand.d_f
            elif cand.d_f != d_f:
                raise DatasetSchemaError(
                    f"{path}: line {line_no}: feature length {cand.d_f} differs from {d_f} seen earlier",
                    context={"path": str(path), "line": line_no})
        samples.append(sample)

    logger.info(f"Read {len(samples)} cases from {path}")
    return samples
