"""Mini-batch SGD with momentum over paired cases."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..config.models import TrainConfig
from ..errors import DomainError, NumericalError
from ..gradients import ParamGradients, backward
from ..model import ModelParams, init_model
from ..numerics import Rng
from ..schema import PairedSample

logger = logging.getLogger(__name__)

# Stream keys under the training seed.
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


@dataclass(eq=False)
class Checkpoint:
    """Trained model together with the run that produced it."""
    model: ModelParams
    config: TrainConfig
    epoch: int
    train_loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.train_loss_history) != self.epoch:
            raise ValueError(f"history has {len(self.train_loss_history)} entries for {self.epoch} epochs")


class SGDMomentum:
    """
    Heavy-ball SGD: ``velocity = momentum * velocity + grad``,
    ``param -= lr * velocity``.
    """

    def __init__(self, learning_rate: float, momentum: float = 0.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: Optional[Dict[str, np.ndarray]] = None

    def step(self, model: ModelParams, grads: ParamGradients) -> ModelParams:
        params = model.named_tensors()
        if self.velocity is None:
            self.velocity = {name: np.zeros_like(arr) for name, arr in params.items()}
        updated = {}
        for name, arr in params.items():
            velocity = self.momentum * self.velocity[name] + grads[name]
            self.velocity[name] = velocity
            updated[name] = arr - self.learning_rate * velocity
        return model.with_tensors(updated)


def batch_gradients(batch: Sequence[PairedSample], model: ModelParams, cfg: TrainConfig,
                    step: int) -> tuple:
    """Mean loss and mean gradient over ``batch``, reduced in batch order."""
    total = ParamGradients.zeros_like(model)
    losses = []
    for sample in batch:
        loss, grads = backward(sample, model, cfg.loss_weights)
        if not math.isfinite(loss) or not grads.is_finite():
            raise NumericalError(f"non-finite loss or gradient on case {sample.case_id}", step=step,
                                 context={"case_id": sample.case_id, "loss": loss})
        total = total + grads
        losses.append(loss)
    return float(np.mean(losses)), total.scaled(1.0 / len(batch))


def train(dataset: Sequence[PairedSample], cfg: TrainConfig,
          initial: Optional[ModelParams] = None) -> Checkpoint:
    """
    Train for ``cfg.epochs`` epochs of ``ceil(len(dataset) / batch_size)`` steps.

    The epoch order is a permutation drawn from the training seed, so a run is
    fully determined by the dataset and the configuration.
    """
    if not dataset:
        raise DomainError("training needs at least one case")
    d_f = dataset[0].d_f
    if d_f is None:
        raise DomainError("the first case has no candidates to infer the feature length from")
    rng = Rng(cfg.seed)
    model = initial if initial is not None else init_model(cfg.model_config_for(d_f), rng.derive(_INIT_STREAM))
    optimizer = SGDMomentum(cfg.learning_rate, cfg.momentum)
    n_steps = math.ceil(len(dataset) / cfg.batch_size)
    history: List[float] = []
    logger.info(f"Training N={cfg.n_blocks} on {len(dataset)} cases: {cfg.epochs} epochs x {n_steps} steps, "
                f"lr={cfg.learning_rate}, momentum={cfg.momentum}")

    step = 0
    epochs = tqdm(range(cfg.epochs), desc=f"train N={cfg.n_blocks}", disable=not cfg.show_progress)
    for epoch in epochs:
        order = rng.derive(_SHUFFLE_STREAM, epoch).permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(dataset), cfg.batch_size):
            batch = [dataset[i] for i in order[start:start + cfg.batch_size]]
            loss, grads = batch_gradients(batch, model, cfg, step)
            model = optimizer.step(model, grads)
            epoch_losses.extend([loss] * len(batch))
            step += 1
        mean_loss = float(np.mean(epoch_losses))
        history.append(mean_loss)
        epochs.set_postfix(loss=f"{mean_loss:.4f}")
        logger.debug(f"epoch {epoch + 1}/{cfg.epochs}: mean loss {mean_loss:.6f}")

    logger.info(f"Finished training: final epoch loss {history[-1]:.6f}")
    return Checkpoint(model=model, config=cfg, epoch=cfg.epochs, train_loss_history=history)
