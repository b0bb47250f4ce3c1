"""Complete model parameters: the relation stack plus detection heads."""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .config.models import ModelConfig
from .errors import ShapeError
from .heads import N_CLASSES, HeadParams
from .numerics import Rng, fan_in_scale, random_matrix, random_vector
from .relation import RelationBlockParams, RelationStackParams
from .schema import View

logger = logging.getLogger(__name__)

_DIRECTIONS = ("blocks_1from2", "blocks_2from1")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Relation stack and heads. ``heads`` holds one entry when both views share
    head parameters and one entry per view otherwise.
    """
    config: ModelConfig
    stack: RelationStackParams
    heads: Tuple[HeadParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(self.heads))
        expected_heads = 1 if self.config.shared_heads else 2
        if len(self.heads) != expected_heads:
            raise ShapeError("head count does not match shared_heads",
                             expected=(expected_heads,), actual=(len(self.heads),))
        if self.stack.n_blocks != self.config.n_blocks:
            raise ShapeError("stack depth does not match n_blocks",
                             expected=(self.config.n_blocks,), actual=(self.stack.n_blocks,))
        for block in self.stack.blocks_1from2 + self.stack.blocks_2from1:
            if (block.d_f, block.d_k, block.d_emb) != (self.config.d_f, self.config.d_k, self.config.d_emb):
                raise ShapeError("relation block dimensions differ from the model config",
                                 expected=(self.config.d_f, self.config.d_k, self.config.d_emb),
                                 actual=(block.d_f, block.d_k, block.d_emb))
        for head in self.heads:
            if head.d_f != self.config.d_f:
                raise ShapeError("head dimensions differ from the model config",
                                 expected=(self.config.d_f,), actual=(head.d_f,))

    @property
    def d_f(self) -> int:
        return self.config.d_f

    @property
    def n_blocks(self) -> int:
        return self.stack.n_blocks

    def head_for(self, view: View) -> HeadParams:
        if self.config.shared_heads:
            return self.heads[0]
        return self.heads[0] if view is View.VIEW1 else self.heads[1]

    def head_prefix(self, index: int) -> str:
        if self.config.shared_heads:
            return "heads"
        return f"heads.{(View.VIEW1, View.VIEW2)[index].value}"

    def named_tensors(self) -> Dict[str, np.ndarray]:
        """Every learnable tensor under a stable dotted name, in a fixed order."""
        tensors: Dict[str, np.ndarray] = {}
        for direction in _DIRECTIONS:
            for i, block in enumerate(getattr(self.stack, direction)):
                for name, arr in block.tensors().items():
                    tensors[f"{direction}.{i}.{name}"] = arr
        for index, head in enumerate(self.heads):
            prefix = self.head_prefix(index)
            for name, arr in head.tensors().items():
                tensors[f"{prefix}.{name}"] = arr
        return tensors

    def with_tensors(self, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        """A model of the same structure holding ``tensors`` (shape-checked)."""
        current = self.named_tensors()
        for name, arr in tensors.items():
            if name in current and np.shape(arr) != current[name].shape:
                raise ShapeError(f"tensor {name} has wrong shape", expected=current[name].shape,
                                 actual=np.shape(arr))
        return ModelParams.from_tensors(self.config, tensors)

    @classmethod
    def from_tensors(cls, config: ModelConfig, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        """Assemble a model from dotted tensor names; arrays are copied."""

        def take(name: str) -> np.ndarray:
            if name not in tensors:
                raise ShapeError(f"missing tensor {name}")
            return np.array(tensors[name], dtype=np.float64)

        def block(direction: str, i: int) -> RelationBlockParams:
            return RelationBlockParams(**{n: take(f"{direction}.{i}.{n}") for n in RelationBlockParams.TENSOR_NAMES})

        stack = RelationStackParams(
            blocks_1from2=[block("blocks_1from2", i) for i in range(config.n_blocks)],
            blocks_2from1=[block("blocks_2from1", i) for i in range(config.n_blocks)],
        )
        n_heads = 1 if config.shared_heads else 2
        prefixes = ["heads"] if config.shared_heads else [f"heads.{v.value}" for v in (View.VIEW1, View.VIEW2)]
        heads = [HeadParams(**{n: take(f"{prefixes[k]}.{n}") for n in HeadParams.TENSOR_NAMES})
                 for k in range(n_heads)]
        model = cls(config=config, stack=stack, heads=heads)
        extra = sorted(set(tensors) - set(model.named_tensors()))
        if extra:
            raise ShapeError(f"unexpected tensors {extra}")
        return model


def init_block(cfg: ModelConfig, rng: Rng) -> RelationBlockParams:
    scale_f = fan_in_scale(cfg.d_f)
    return RelationBlockParams(
        W1=random_matrix(rng, cfg.d_k, cfg.d_f, scale_f),
        W2=random_matrix(rng, cfg.d_k, cfg.d_f, scale_f),
        W3=random_matrix(rng, cfg.d_f, cfg.d_f, scale_f),
        v=random_vector(rng, cfg.d_emb, fan_in_scale(cfg.d_emb)),
    )


def init_heads(cfg: ModelConfig, rng: Rng) -> HeadParams:
    scale_f = fan_in_scale(cfg.d_f)
    return HeadParams(
        cls_weight=random_matrix(rng, N_CLASSES, cfg.d_f, scale_f),
        cls_bias=np.zeros(N_CLASSES),
        reg_weight=random_matrix(rng, 4, cfg.d_f, scale_f),
        reg_bias=np.zeros(4),
    )


def init_model(cfg: ModelConfig, rng: Rng) -> ModelParams:
    """
    Uniform ``+-1/sqrt(fan_in)`` weights and zero biases.

    Blocks are drawn direction by direction in stage order, then the heads, so
    models that differ only in ``n_blocks`` still share their first blocks.
    """
    block_rng = rng.derive(0)
    head_rng = rng.derive(1)
    blocks_1from2 = [init_block(cfg, block_rng.derive(0, i)) for i in range(cfg.n_blocks)]
    blocks_2from1 = [init_block(cfg, block_rng.derive(1, i)) for i in range(cfg.n_blocks)]
    n_heads = 1 if cfg.shared_heads else 2
    heads = [init_heads(cfg, head_rng.derive(k)) for k in range(n_heads)]
    logger.debug(f"Initialised model with {cfg.n_blocks} relation blocks per direction, "
                 f"d_f={cfg.d_f}, d_k={cfg.d_k}, d_emb={cfg.d_emb}")
    return ModelParams(config=cfg, stack=RelationStackParams(blocks_1from2, blocks_2from1), heads=heads)
