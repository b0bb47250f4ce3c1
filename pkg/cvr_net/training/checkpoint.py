"""Versioned JSON checkpoints of trained models."""

import logging
from typing import Any, Dict, Sequence

import numpy as np
import orjson
from pydantic import ValidationError as PydanticValidationError

from ..config.models import ModelConfig, TrainConfig
from ..errors import CheckpointError, CheckpointMismatchError, CVRError, CVRIOError
from ..model import ModelParams
from ..schema import PairedSample
from ..utils import PathLike, write_json
from .trainer import Checkpoint

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cvr-net-checkpoint"
CHECKPOINT_VERSION = 1


def _encode_tensor(arr: np.ndarray) -> Dict[str, Any]:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _decode_tensor(name: str, record: Dict[str, Any]) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in record["shape"])
        data = np.asarray(record["data"], dtype=np.float64)
        return data.reshape(shape)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"tensor {name} is malformed: {e}") from e


def checkpoint_to_dict(checkpoint: Checkpoint) -> Dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "epoch": checkpoint.epoch,
        "train_loss_history": list(checkpoint.train_loss_history),
        "train_config": checkpoint.config.model_dump(mode="json"),
        "model_config": checkpoint.model.config.model_dump(mode="json"),
        "tensors": {name: _encode_tensor(arr) for name, arr in checkpoint.model.named_tensors().items()},
    }


def checkpoint_from_dict(payload: Dict[str, Any]) -> Checkpoint:
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a checkpoint file")
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r} (expected {CHECKPOINT_VERSION})")
    try:
        model_config = ModelConfig(**payload["model_config"])
        train_config = TrainConfig(**payload["train_config"])
        tensors = {name: _decode_tensor(name, rec) for name, rec in payload["tensors"].items()}
        model = ModelParams.from_tensors(model_config, tensors)
        return Checkpoint(model=model, config=train_config, epoch=int(payload["epoch"]),
                          train_loss_history=[float(x) for x in payload["train_loss_history"]])
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, PydanticValidationError, CVRError) as e:
        raise CheckpointError(f"invalid checkpoint contents: {e}") from e


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> None:
    write_json(path, checkpoint_to_dict(checkpoint))
    logger.info(f"Saved checkpoint (epoch {checkpoint.epoch}, N={checkpoint.model.n_blocks}) to {path}")


def load_checkpoint(path: PathLike) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            payload = orjson.loads(f.read())
    except OSError as e:
        raise CVRIOError(str(path), f"read failed: {e}", e) from e
    except orjson.JSONDecodeError as e:
        raise CheckpointError(f"unreadable checkpoint: {e}", path=str(path)) from e
    try:
        checkpoint = checkpoint_from_dict(payload)
    except CheckpointError as e:
        raise CheckpointError(e.message, path=str(path)) from e
    logger.debug(f"Loaded checkpoint from {path}: {len(checkpoint.model.named_tensors())} tensors")
    return checkpoint


def check_compatible(checkpoint: Checkpoint, dataset: Sequence[PairedSample]) -> None:
    """Raise when any case's feature length differs from the model's."""
    for sample in dataset:
        d_f = sample.d_f
        if d_f is not None and d_f != checkpoint.model.d_f:
            raise CheckpointMismatchError(
                f"checkpoint expects features of length {checkpoint.model.d_f}, "
                f"dataset case {sample.case_id} has length {d_f}",
                context={"checkpoint_d_f": checkpoint.model.d_f, "dataset_d_f": d_f},
            )
