"""
Cross-view relation blocks.

Each candidate in a target view gathers a relational feature from every
candidate in the paired (source) view. The weight of a source is the product
of a visual affinity (scaled dot product of projected features) and a
geometric gate (ReLU of a learned projection of the sinusoidally embedded,
pairwise-normalized box geometry). Weights are normalized over the sources,
applied to W3-transformed source features, and the result is added back to
the target feature. Geometry passes through a block unchanged.

The scalar functions (``visual_affinity``, ``geometric_gate``, ``aggregate``)
express the operation for one pair or one target; ``block_forward`` is the
vectorized form used by the stack, the heads and the gradient engine.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError
from .numerics import Matrix, Vector, as_matrix, as_vector, dot, matvec, relu
from .schema import RoiCandidate, RoiGeometry, View

logger = logging.getLogger(__name__)

DEFAULT_GEOMETRY_EPS = 1e-3
DEFAULT_WAVELENGTH = 1000.0
DEFAULT_DENOM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class RelationBlockParams:
    """Learnable tensors of one relation block in one direction."""
    W1: Matrix
    W2: Matrix
    W3: Matrix
    v: Vector

    TENSOR_NAMES = ("W1", "W2", "W3", "v")

    def __post_init__(self):
        W1 = as_matrix(self.W1, name="W1")
        d_k, d_f = W1.shape
        W2 = as_matrix(self.W2, shape=(d_k, d_f), name="W2")
        W3 = as_matrix(self.W3, shape=(d_f, d_f), name="W3")
        v = as_vector(self.v, name="v")
        if v.shape[0] == 0 or v.shape[0] % 8 != 0:
            raise ShapeError(f"v length must be a positive multiple of 8, got {v.shape[0]}")
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "W3", W3)
        object.__setattr__(self, "v", v)

    @property
    def d_f(self) -> int:
        return self.W1.shape[1]

    @property
    def d_k(self) -> int:
        return self.W1.shape[0]

    @property
    def d_emb(self) -> int:
        return self.v.shape[0]

    def tensors(self):
        return {name: getattr(self, name) for name in self.TENSOR_NAMES}


@dataclass(frozen=True, eq=False)
class RelationStackParams:
    """N blocks per direction; ``blocks_1from2[i]`` updates view 1 from view 2."""
    blocks_1from2: Tuple[RelationBlockParams, ...]
    blocks_2from1: Tuple[RelationBlockParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks_1from2", tuple(self.blocks_1from2))
        object.__setattr__(self, "blocks_2from1", tuple(self.blocks_2from1))
        if len(self.blocks_1from2) != len(self.blocks_2from1):
            raise ShapeError("both directions need the same number of blocks",
                             expected=(len(self.blocks_1from2),), actual=(len(self.blocks_2from1),))
        dims = {(b.d_f, b.d_k, b.d_emb) for b in self.blocks_1from2 + self.blocks_2from1}
        if len(dims) > 1:
            raise ShapeError(f"relation blocks disagree on dimensions: {sorted(dims)}")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks_1from2)

    def direction(self, target: View) -> Tuple[RelationBlockParams, ...]:
        """Blocks that update ``target`` from the opposite view."""
        return self.blocks_1from2 if target is View.VIEW1 else self.blocks_2from1


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def pairwise_geometry(targets: np.ndarray, sources: np.ndarray,
                      eps: float = DEFAULT_GEOMETRY_EPS) -> np.ndarray:
    """
    Normalized geometry for every (target, source) pair.

    ``targets`` is ``(n, 4)`` and ``sources`` ``(m, 4)`` in ``[x, y, w, h]``
    form; the result is ``(n, m, 4)``: log offsets relative to the source size
    (clamped below at ``eps``) followed by log size ratios.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 4)
    sources = np.asarray(sources, dtype=np.float64).reshape(-1, 4)
    if np.any(targets[:, 2:] <= 0) or np.any(sources[:, 2:] <= 0):
        raise DomainError("box width and height must be positive")
    t = targets[:, None, :]
    s = sources[None, :, :]
    dx = np.maximum(np.abs(t[..., 0] - s[..., 0]) / s[..., 2], eps)
    dy = np.maximum(np.abs(t[..., 1] - s[..., 1]) / s[..., 3], eps)
    return np.stack([np.log(dx), np.log(dy),
                     np.log(t[..., 2] / s[..., 2]), np.log(t[..., 3] / s[..., 3])], axis=-1)


def geometric_normalize(p_a: RoiGeometry, p_b: RoiGeometry,
                        eps: float = DEFAULT_GEOMETRY_EPS) -> Vector:
    """Geometry of box ``p_a`` normalized by box ``p_b``."""
    return pairwise_geometry(p_a.as_array(), p_b.as_array(), eps)[0, 0]


def embed_geometry(g: np.ndarray, d_emb: int, wavelength: float = DEFAULT_WAVELENGTH) -> np.ndarray:
    """
    Sinusoidal embedding of the last axis (length 4) into ``d_emb`` entries.

    Component ``c`` fills entries ``[c*d_emb/4, (c+1)*d_emb/4)`` with
    interleaved ``sin(g[c]/wavelength**(8k/d_emb))``, ``cos(...)`` pairs for
    ``k = 0 .. d_emb/8 - 1``.
    """
    if d_emb <= 0 or d_emb % 8 != 0:
        raise ConfigurationError(f"d_emb must be a positive multiple of 8, got {d_emb}", field="d_emb")
    if not wavelength > 1:
        raise ConfigurationError(f"wavelength must exceed 1, got {wavelength}", field="wavelength")
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-1] != 4:
        raise ShapeError("geometry must have 4 components", expected=(4,), actual=g.shape[-1:])
    k = np.arange(d_emb // 8, dtype=np.float64)
    inv_freq = 1.0 / np.power(wavelength, 8.0 * k / d_emb)
    angles = g[..., :, None] * inv_freq
    pairs = np.stack([np.sin(angles), np.cos(angles)], axis=-1)
    return pairs.reshape(g.shape[:-1] + (d_emb,))


# ---------------------------------------------------------------------------
# Scalar forms
# ---------------------------------------------------------------------------

def visual_affinity(f_a: Vector, f_b: Vector, params: RelationBlockParams) -> float:
    """Scaled dot product of the W1-projected target and W2-projected source."""
    return dot(matvec(params.W1, f_a), matvec(params.W2, f_b)) / np.sqrt(params.d_k)


def geometric_gate(g: Vector, params: RelationBlockParams,
                   wavelength: float = DEFAULT_WAVELENGTH) -> float:
    """Non-negative geometric weight of one pair."""
    g = as_vector(g, length=4, name="g")
    return relu(dot(params.v, embed_geometry(g, params.d_emb, wavelength)))


def _check_views(targets: Sequence[RoiCandidate], sources: Sequence[RoiCandidate]) -> None:
    target_views = {c.view for c in targets}
    source_views = {c.view for c in sources}
    if len(target_views) > 1 or len(source_views) > 1:
        raise DomainError("candidates within one list must share a view")
    if target_views and source_views and target_views == source_views:
        raise DomainError("targets and sources must come from opposite views")


def aggregate(target: RoiCandidate, sources: Sequence[RoiCandidate], params: RelationBlockParams,
              eps_denom: float = DEFAULT_DENOM_EPS, wavelength: float = DEFAULT_WAVELENGTH,
              geometry_eps: float = DEFAULT_GEOMETRY_EPS) -> Vector:
    """
    Relational feature of ``target`` gathered from ``sources``.

    Weights ``v_m * exp(w_m - max w)`` are normalized to sum to one; when
    their sum is at most ``eps_denom`` (every gate trimmed, or no sources)
    the zero vector is returned.
    """
    if not eps_denom > 0:
        raise ValueError(f"eps_denom must be positive, got {eps_denom}")
    _check_views([target], sources)
    if not sources:
        return np.zeros(params.d_f)
    affinities = np.array([visual_affinity(target.feature, s.feature, params) for s in sources])
    gates = np.array([
        geometric_gate(geometric_normalize(target.geometry, s.geometry, geometry_eps), params, wavelength)
        for s in sources
    ])
    weights = gates * np.exp(affinities - affinities.max())
    denom = weights.sum()
    if denom <= eps_denom:
        return np.zeros(params.d_f)
    transformed = np.stack([matvec(params.W3, s.feature) for s in sources])
    return (weights / denom) @ transformed


# ---------------------------------------------------------------------------
# Vectorized block
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BlockTrace:
    """Intermediates of one block evaluation, kept for the backward pass."""
    targets: np.ndarray
    sources: np.ndarray
    embedding: np.ndarray
    queries: np.ndarray
    keys: np.ndarray
    gate_logits: np.ndarray
    exp_scores: np.ndarray
    denom: np.ndarray
    active: np.ndarray
    weights: np.ndarray
    values: np.ndarray


def block_forward(targets: np.ndarray, sources: np.ndarray, embedding: np.ndarray,
                  params: RelationBlockParams,
                  denom_eps: float = DEFAULT_DENOM_EPS) -> Tuple[np.ndarray, BlockTrace]:
    """
    One relation block on feature matrices.

    ``targets`` is ``(n, d_f)``, ``sources`` ``(m, d_f)`` and ``embedding`` the
    ``(n, m, d_emb)`` embedded pairwise geometry. Returns the updated target
    features and the trace for :func:`cvr_net.gradients.block_backward`.
    """
    n, m = targets.shape[0], sources.shape[0]
    if targets.shape[1:] != (params.d_f,) or sources.shape[1:] != (params.d_f,):
        raise ShapeError("feature matrices do not match d_f",
                         expected=(params.d_f,), actual=targets.shape[1:] + sources.shape[1:])
    if embedding.shape != (n, m, params.d_emb):
        raise ShapeError("geometry embedding has wrong shape",
                         expected=(n, m, params.d_emb), actual=embedding.shape)
    queries = targets @ params.W1.T
    keys = sources @ params.W2.T
    values = sources @ params.W3.T
    gate_logits = embedding @ params.v
    if m == 0:
        empty = np.zeros((n, 0))
        trace = BlockTrace(targets, sources, embedding, queries, keys, gate_logits,
                           empty, np.zeros(n), np.zeros(n, dtype=bool), empty, values)
        return targets.copy(), trace

    scores = queries @ keys.T / np.sqrt(params.d_k)
    exp_scores = np.exp(scores - scores.max(axis=1, keepdims=True))
    gated = np.maximum(gate_logits, 0.0) * exp_scores
    denom = gated.sum(axis=1)
    active = denom > denom_eps
    if not active.all():
        logger.debug(f"{int((~active).sum())} of {n} targets have no active gate; relational feature is zero")
    safe = np.where(active, denom, 1.0)
    weights = np.where(active[:, None], gated / safe[:, None], 0.0)
    out = targets + weights @ values
    trace = BlockTrace(targets, sources, embedding, queries, keys, gate_logits,
                       exp_scores, denom, active, weights, values)
    return out, trace


def _candidate_arrays(cands: Sequence[RoiCandidate], d_f: int) -> Tuple[np.ndarray, np.ndarray]:
    feats = np.zeros((len(cands), d_f))
    geoms = np.zeros((len(cands), 4))
    for i, c in enumerate(cands):
        if c.feature.shape[0] != d_f:
            raise ShapeError("candidate feature length differs from d_f",
                             expected=(d_f,), actual=c.feature.shape)
        feats[i] = c.feature
        geoms[i] = c.geometry.as_array()
    return feats, geoms


def relation_block_forward(targets: Sequence[RoiCandidate], sources: Sequence[RoiCandidate],
                           params: RelationBlockParams, wavelength: float = DEFAULT_WAVELENGTH,
                           geometry_eps: float = DEFAULT_GEOMETRY_EPS,
                           denom_eps: float = DEFAULT_DENOM_EPS) -> List[Vector]:
    """Updated feature of every target, in target order."""
    _check_views(targets, sources)
    x_t, p_t = _candidate_arrays(targets, params.d_f)
    x_s, p_s = _candidate_arrays(sources, params.d_f)
    embedding = embed_geometry(pairwise_geometry(p_t, p_s, geometry_eps), params.d_emb, wavelength)
    out, _ = block_forward(x_t, x_s, embedding, params, denom_eps)
    return list(out)


@dataclass(eq=False)
class StackTrace:
    """Per-stage traces of both directions."""
    stages: List[Tuple[BlockTrace, BlockTrace]]


def stack_forward(x1: np.ndarray, x2: np.ndarray, emb12: np.ndarray, emb21: np.ndarray,
                  stack: RelationStackParams,
                  denom_eps: float = DEFAULT_DENOM_EPS) -> Tuple[np.ndarray, np.ndarray, StackTrace]:
    """Synchronous two-direction update on feature matrices."""
    stages = []
    for b12, b21 in zip(stack.blocks_1from2, stack.blocks_2from1):
        new1, t12 = block_forward(x1, x2, emb12, b12, denom_eps)
        new2, t21 = block_forward(x2, x1, emb21, b21, denom_eps)
        stages.append((t12, t21))
        x1, x2 = new1, new2
    return x1, x2, StackTrace(stages)


def pair_embeddings(p1: np.ndarray, p2: np.ndarray, d_emb: int, wavelength: float,
                    geometry_eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Embedded geometry for view 1 from view 2 and for view 2 from view 1."""
    emb12 = embed_geometry(pairwise_geometry(p1, p2, geometry_eps), d_emb, wavelength)
    emb21 = embed_geometry(pairwise_geometry(p2, p1, geometry_eps), d_emb, wavelength)
    return emb12, emb21


def relation_stack_forward(view1: Sequence[RoiCandidate], view2: Sequence[RoiCandidate],
                           stack: RelationStackParams, wavelength: float = DEFAULT_WAVELENGTH,
                           geometry_eps: float = DEFAULT_GEOMETRY_EPS,
                           denom_eps: float = DEFAULT_DENOM_EPS) -> Tuple[List[Vector], List[Vector]]:
    """Apply the N stacked blocks to both views; N = 0 returns the inputs."""
    _check_views(view1, view2)
    if stack.n_blocks == 0:
        return [c.feature.copy() for c in view1], [c.feature.copy() for c in view2]
    d_f = stack.blocks_1from2[0].d_f
    d_emb = stack.blocks_1from2[0].d_emb
    x1, p1 = _candidate_arrays(view1, d_f)
    x2, p2 = _candidate_arrays(view2, d_f)
    emb12, emb21 = pair_embeddings(p1, p2, d_emb, wavelength, geometry_eps)
    out1, out2, _ = stack_forward(x1, x2, emb12, emb21, stack, denom_eps)
    return list(out1), list(out2)
