"""Relation-block count sweep and head-sharing comparison."""

import logging
from typing import List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from ..config.models import EvalConfig, TrainConfig
from ..evaluation.evaluator import MetricsReport, evaluate_with_config
from ..schema import PairedSample
from ..utils import PathLike, atomic_write_bytes
from .trainer import train

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["precision", "recall", "f1", "fpi"]


class AblationRow(BaseModel):
    n_blocks: int
    seed: int
    final_loss: float
    report: MetricsReport


class ComparisonRow(BaseModel):
    variant: str
    n_blocks: int
    shared_heads: bool
    final_loss: float
    report: MetricsReport


def _fit_and_score(train_set: Sequence[PairedSample], test_set: Sequence[PairedSample],
                   cfg: TrainConfig, eval_cfg: EvalConfig):
    checkpoint = train(train_set, cfg)
    report = evaluate_with_config(checkpoint.model, test_set, eval_cfg)
    return checkpoint.train_loss_history[-1], report


def run_ablation(train_set: Sequence[PairedSample], test_set: Sequence[PairedSample],
                 base_cfg: TrainConfig, n_values: Sequence[int] = (0, 1, 2, 3, 4),
                 seeds: Optional[Sequence[int]] = None,
                 eval_cfg: Optional[EvalConfig] = None) -> List[AblationRow]:
    """
    Train and evaluate one model per ``(N, seed)`` on the same data.

    Only ``n_blocks`` and ``seed`` vary from ``base_cfg``. Rows are sorted by
    ``(N, seed)``.
    """
    if not n_values:
        raise ValueError("n_values must not be empty")
    seeds = list(seeds) if seeds else [base_cfg.seed]
    eval_cfg = eval_cfg or EvalConfig()
    rows = []
    for n in sorted(set(n_values)):
        for seed in sorted(set(seeds)):
            cfg = base_cfg.model_copy(update={"n_blocks": n, "seed": seed})
            logger.info(f"Ablation run N={n}, seed={seed}")
            final_loss, report = _fit_and_score(train_set, test_set, cfg, eval_cfg)
            rows.append(AblationRow(n_blocks=n, seed=seed, final_loss=final_loss, report=report))
    return rows


def run_comparison(train_set: Sequence[PairedSample], test_set: Sequence[PairedSample],
                   base_cfg: TrainConfig, eval_cfg: Optional[EvalConfig] = None) -> List[ComparisonRow]:
    """
    Plain two-branch detector (N=0, shared heads, the ablation's N=0 model),
    per-view detectors (N=0, per-view heads) and the cross-view network
    (``base_cfg.n_blocks``, shared heads).
    """
    eval_cfg = eval_cfg or EvalConfig()
    variants = [
        ("two-branch", 0, True),
        ("per-view", 0, False),
        ("cross-view", base_cfg.n_blocks, True),
    ]
    rows = []
    for name, n, shared in variants:
        cfg = base_cfg.model_copy(update={"n_blocks": n, "shared_heads": shared})
        logger.info(f"Comparison run {name}: N={n}, shared_heads={shared}")
        final_loss, report = _fit_and_score(train_set, test_set, cfg, eval_cfg)
        rows.append(ComparisonRow(variant=name, n_blocks=n, shared_heads=shared,
                                  final_loss=final_loss, report=report))
    return rows


def _report_columns(report: MetricsReport) -> dict:
    columns = {name: getattr(report, name) for name in METRIC_COLUMNS}
    for point, tpr in report.tpr_at_fpi.items():
        columns[f"tpr@{point}"] = tpr
    return columns


def ablation_frame(rows: Sequence[AblationRow]) -> pd.DataFrame:
    """One row per ``(N, seed)`` run."""
    records = [{"n_blocks": r.n_blocks, "seed": r.seed, "final_loss": r.final_loss, **_report_columns(r.report)}
               for r in rows]
    return pd.DataFrame.from_records(records)


def ablation_means(frame: pd.DataFrame) -> pd.DataFrame:
    """Per-N means over seeds."""
    numeric = [c for c in frame.columns if c not in ("n_blocks", "seed")]
    means = frame.groupby("n_blocks", sort=True)[numeric].mean().reset_index()
    means.insert(1, "seed", "mean")
    return means


def ablation_table(rows: Sequence[AblationRow]) -> pd.DataFrame:
    """Per-run rows followed by per-N mean rows."""
    frame = ablation_frame(rows)
    if frame.empty:
        return frame
    frame["seed"] = frame["seed"].astype(object)
    return pd.concat([frame, ablation_means(frame)], ignore_index=True)


def comparison_frame(rows: Sequence[ComparisonRow]) -> pd.DataFrame:
    records = [{"variant": r.variant, "n_blocks": r.n_blocks, "shared_heads": r.shared_heads,
                "final_loss": r.final_loss, **_report_columns(r.report)} for r in rows]
    return pd.DataFrame.from_records(records)


def write_table_csv(frame: pd.DataFrame, path: PathLike) -> None:
    atomic_write_bytes(path, frame.to_csv(index=False, float_format="%.6f").encode("utf-8"))
    logger.info(f"Wrote {len(frame)} rows to {path}")
