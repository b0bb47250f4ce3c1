"""Synthetic paired-view data and its file format."""

from .io import read_dataset, write_dataset
from .synthetic import LatentLesion, assign_targets, generate_case, generate_dataset, split_dataset

__all__ = [
    "LatentLesion",
    "assign_targets",
    "generate_case",
    "generate_dataset",
    "read_dataset",
    "split_dataset",
    "write_dataset",
]
