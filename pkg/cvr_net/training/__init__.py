"""Training loop, checkpoints and experiment drivers."""

from .trainer import Checkpoint, SGDMomentum, train
from .checkpoint import check_compatible, load_checkpoint, save_checkpoint
from .ablation import (
    AblationRow,
    ComparisonRow,
    ablation_table,
    comparison_frame,
    run_ablation,
    run_comparison,
    write_table_csv,
)

__all__ = [
    "AblationRow",
    "Checkpoint",
    "ComparisonRow",
    "SGDMomentum",
    "ablation_table",
    "check_compatible",
    "comparison_frame",
    "load_checkpoint",
    "run_ablation",
    "run_comparison",
    "save_checkpoint",
    "train",
    "write_table_csv",
]
