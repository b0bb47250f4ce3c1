"""
Exact gradients of the two-view loss and a central-difference verifier.

The backward pass mirrors the forward pass in reverse: loss terms, heads,
then the relation stack stage by stage. Within a block the gradient flows
through the residual sum, the normalized aggregation (numerator and
denominator), the ReLU gate (subgradient 0 at exactly 0) and the bilinear
affinity. Embedded geometry is data and receives no gradient.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .config.models import GradCheckConfig, LossWeights
from .errors import DomainError
from .heads import MASS_CLASS, N_CLASSES, smooth_l1_grad, softmax, target_arrays, total_loss, view_loss_arrays
from .model import ModelParams, init_model
from .numerics import Rng
from .relation import BlockTrace, RelationBlockParams, StackTrace, pair_embeddings, stack_forward
from .schema import CandidateTarget, GroundTruthBox, Label, PairedSample, RoiCandidate, RoiGeometry, View

logger = logging.getLogger(__name__)

_VIEWS = (View.VIEW1, View.VIEW2)
# Magnitude bounds of gradcheck regression residuals; the upper bound stays below the smooth-L1 knot.
TARGET_OFFSET_RANGE = (0.05, 0.5)


@dataclass(eq=False)
class ParamGradients:
    """Partial derivatives keyed exactly like :meth:`ModelParams.named_tensors`."""
    tensors: Dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, model: ModelParams) -> "ParamGradients":
        return cls({name: np.zeros_like(arr) for name, arr in model.named_tensors().items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __add__(self, other: "ParamGradients") -> "ParamGradients":
        return ParamGradients({name: arr + other.tensors[name] for name, arr in self.tensors.items()})

    def scaled(self, factor: float) -> "ParamGradients":
        return ParamGradients({name: arr * factor for name, arr in self.tensors.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for arr in self.tensors.values())

    def max_abs(self) -> float:
        return max((float(np.abs(arr).max()) for arr in self.tensors.values() if arr.size), default=0.0)


@dataclass(eq=False)
class _ViewPass:
    features: np.ndarray
    probs: np.ndarray
    regs: np.ndarray
    labels: np.ndarray
    reg_targets: np.ndarray
    losses: Tuple[float, float]


@dataclass(eq=False)
class ForwardPass:
    """Everything the backward pass needs from one forward evaluation."""
    loss: float
    views: Tuple[_ViewPass, _ViewPass]
    stack_trace: StackTrace = field(default_factory=lambda: StackTrace([]))


def _candidate_matrix(cands: List[RoiCandidate]) -> Tuple[np.ndarray, np.ndarray]:
    return (np.stack([c.feature for c in cands]),
            np.stack([c.geometry.as_array() for c in cands]))


def run_stack(sample: PairedSample, model: ModelParams) -> Tuple[np.ndarray, np.ndarray, StackTrace]:
    """Relation-stack output features of both views of ``sample``."""
    if not sample.view1 or not sample.view2:
        raise DomainError(f"case {sample.case_id}: each view needs at least one candidate")
    x1, p1 = _candidate_matrix(sample.view1)
    x2, p2 = _candidate_matrix(sample.view2)
    cfg = model.config
    if model.n_blocks == 0:
        return x1, x2, StackTrace([])
    emb12, emb21 = pair_embeddings(p1, p2, cfg.d_emb, cfg.wavelength, cfg.geometry_eps)
    return stack_forward(x1, x2, emb12, emb21, model.stack, cfg.denom_eps)


def forward_pass(sample: PairedSample, model: ModelParams, wts: LossWeights) -> ForwardPass:
    out1, out2, trace = run_stack(sample, model)
    views = []
    for view, feats in zip(_VIEWS, (out1, out2)):
        head = model.head_for(view)
        probs = softmax(feats @ head.cls_weight.T + head.cls_bias)
        regs = feats @ head.reg_weight.T + head.reg_bias
        labels, reg_targets = target_arrays(sample.targets(view))
        losses = view_loss_arrays(probs, regs, labels, reg_targets)
        views.append(_ViewPass(feats, probs, regs, labels, reg_targets, losses))
    loss = total_loss(views[0].losses, views[1].losses, wts)
    return ForwardPass(loss=loss, views=tuple(views), stack_trace=trace)


def compute_loss(sample: PairedSample, model: ModelParams, wts: LossWeights) -> float:
    """Forward-only evaluation of the two-view loss."""
    return forward_pass(sample, model, wts).loss


def block_backward(d_out: np.ndarray, trace: BlockTrace,
                   params: RelationBlockParams) -> Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray]]:
    """
    Gradients of one block given ``d_out`` = dL/d(updated targets).

    Returns ``(dL/d targets, dL/d sources, {W1, W2, W3, v})``.
    """
    targets, sources = trace.targets, trace.sources
    d_targets = d_out.copy()
    if sources.shape[0] == 0:
        grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        return d_targets, np.zeros_like(sources), grads

    weights = trace.weights
    d_values = weights.T @ d_out
    dW3 = d_values.T @ sources
    d_sources = d_values @ params.W3

    d_weights = d_out @ trace.values.T
    centered = d_weights - (d_weights * weights).sum(axis=1, keepdims=True)
    d_scores = weights * centered
    safe = np.where(trace.active, trace.denom, 1.0)
    d_gated = np.where(trace.active[:, None], centered / safe[:, None], 0.0)
    d_gate_logits = d_gated * trace.exp_scores * (trace.gate_logits > 0)
    dv = d_gate_logits.reshape(-1) @ trace.embedding.reshape(-1, params.d_emb)

    scale = 1.0 / np.sqrt(params.d_k)
    d_queries = d_scores @ trace.keys * scale
    d_keys = d_scores.T @ trace.queries * scale
    dW1 = d_queries.T @ targets
    d_targets += d_queries @ params.W1
    dW2 = d_keys.T @ sources
    d_sources += d_keys @ params.W2
    return d_targets, d_sources, {"W1": dW1, "W2": dW2, "W3": dW3, "v": dv}


def _head_grads(view_pass: _ViewPass, cls_coef: float, reg_coef: float) -> Tuple[np.ndarray, np.ndarray]:
    """dL/d logits and dL/d regression outputs of one view."""
    labels = view_pass.labels
    d_logits = np.zeros_like(view_pass.probs)
    labelled = labels >= 0
    n_cls = int(labelled.sum())
    if n_cls and cls_coef:
        onehot = np.zeros((n_cls, N_CLASSES))
        onehot[np.arange(n_cls), labels[labelled]] = 1.0
        d_logits[labelled] = (view_pass.probs[labelled] - onehot) * (cls_coef / n_cls)
    d_regs = np.zeros_like(view_pass.regs)
    positive = labels == MASS_CLASS
    n_pos = int(positive.sum())
    if n_pos and reg_coef:
        diff = view_pass.regs[positive] - view_pass.reg_targets[positive]
        d_regs[positive] = smooth_l1_grad(diff) * (reg_coef / n_pos)
    return d_logits, d_regs


def backward(sample: PairedSample, model: ModelParams,
             wts: LossWeights) -> Tuple[float, ParamGradients]:
    """Loss and the gradient of every learnable tensor for one paired case."""
    fwd = forward_pass(sample, model, wts)
    grads = ParamGradients.zeros_like(model)
    coefs = ((1.0, wts.alpha), (wts.beta, wts.gamma))

    d_features = []
    for index, (view, view_pass, (cls_coef, reg_coef)) in enumerate(zip(_VIEWS, fwd.views, coefs)):
        head = model.head_for(view)
        prefix = model.head_prefix(0 if model.config.shared_heads else index)
        d_logits, d_regs = _head_grads(view_pass, cls_coef, reg_coef)
        grads[f"{prefix}.cls_weight"][...] += d_logits.T @ view_pass.features
        grads[f"{prefix}.cls_bias"][...] += d_logits.sum(axis=0)
        grads[f"{prefix}.reg_weight"][...] += d_regs.T @ view_pass.features
        grads[f"{prefix}.reg_bias"][...] += d_regs.sum(axis=0)
        d_features.append(d_logits @ head.cls_weight + d_regs @ head.reg_weight)

    d1, d2 = d_features
    stages = fwd.stack_trace.stages
    for i in reversed(range(len(stages))):
        trace12, trace21 = stages[i]
        b12, b21 = model.stack.blocks_1from2[i], model.stack.blocks_2from1[i]
        dt1, ds2, g12 = block_backward(d1, trace12, b12)
        dt2, ds1, g21 = block_backward(d2, trace21, b21)
        for name in RelationBlockParams.TENSOR_NAMES:
            grads[f"blocks_1from2.{i}.{name}"][...] += g12[name]
            grads[f"blocks_2from1.{i}.{name}"][...] += g21[name]
        d1, d2 = dt1 + ds1, dt2 + ds2
    return fwd.loss, grads


class GradCheckReport(BaseModel):
    """Outcome of a finite-difference comparison."""

    max_relative_error: Dict[str, float] = Field(default_factory=dict)
    tolerance: float
    passed: bool
    n_entries: int = 0

    @model_validator(mode='after')
    def validate_verdict(self):
        if self.passed != (self.overall_error < self.tolerance):
            raise ValueError("passed must equal overall_error < tolerance")
        return self

    @property
    def overall_error(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)

    @property
    def worst_tensor(self) -> Optional[str]:
        if not self.max_relative_error:
            return None
        return max(self.max_relative_error, key=self.max_relative_error.get)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_difference_check(sample: PairedSample, model: ModelParams, wts: LossWeights,
                            step: float = 1e-5, tolerance: float = 1e-4,
                            corrupt: float = 0.0) -> GradCheckReport:
    """
    Compare :func:`backward` with central differences for every parameter entry.

    ``corrupt`` scales the largest-magnitude analytic gradient entry by
    ``1 + corrupt`` before the comparison; it exists to prove the check fails.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step must lie in [1e-7, 1e-3], got {step}")
    _, grads = backward(sample, model, wts)
    if corrupt:
        name = max(grads.tensors, key=lambda k: np.abs(grads[k]).max() if grads[k].size else 0.0)
        flat = grads[name].reshape(-1)
        flat[np.argmax(np.abs(flat))] *= 1.0 + corrupt

    probe = model.with_tensors({k: v.copy() for k, v in model.named_tensors().items()})
    tensors = probe.named_tensors()
    errors: Dict[str, float] = {}
    n_entries = 0
    for name, arr in tensors.items():
        flat = arr.reshape(-1)
        numeric = np.zeros_like(flat)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + step
            plus = compute_loss(sample, probe, wts)
            flat[j] = original - step
            minus = compute_loss(sample, probe, wts)
            flat[j] = original
            numeric[j] = (plus - minus) / (2.0 * step)
        n_entries += flat.size
        errors[name] = float(relative_error(grads[name].reshape(-1), numeric).max()) if flat.size else 0.0

    overall = max(errors.values(), default=0.0)
    report = GradCheckReport(max_relative_error=errors, tolerance=tolerance,
                             passed=overall < tolerance, n_entries=n_entries)
    logger.info(f"Gradient check over {n_entries} entries: max relative error {overall:.3e} "
                f"({'pass' if report.passed else 'fail'}, worst tensor {report.worst_tensor})")
    return report


def build_gradcheck_problem(cfg: GradCheckConfig) -> Tuple[PairedSample, ModelParams]:
    """
    Random toy case and model for gradient verification.

    Each positive's regression target differs from the model's current output
    by a continuously distributed amount in ``TARGET_OFFSET_RANGE`` (either
    sign) per coordinate, so residuals stay inside the smooth-L1 knot.
    """
    rng = Rng(cfg.seed)
    model = init_model(cfg.model_config_for(), rng.derive(0))
    case_rng = rng.derive(1)

    def candidates(view: View) -> Tuple[List[RoiCandidate], List[Label], np.ndarray]:
        cands, labels = [], []
        offsets = np.zeros(4)
        for i in range(cfg.candidates_per_view):
            geometry = RoiGeometry(x=float(case_rng.uniform(0, 100)), y=float(case_rng.uniform(0, 100)),
                                   w=float(case_rng.uniform(5, 30)), h=float(case_rng.uniform(5, 30)))
            cands.append(RoiCandidate(geometry, case_rng.normal(size=cfg.d_f), view))
            if i == 0:
                labels.append(Label.POSITIVE)
                draw = case_rng.normal(0.0, 0.5, size=4)
                low, high = TARGET_OFFSET_RANGE
                offsets = np.sign(draw) * (low + (high - low) * np.tanh(np.abs(draw)))
            elif i % 3 == 2:
                labels.append(Label.IGNORE)
            else:
                labels.append(Label.NEGATIVE)
        return cands, labels, offsets

    def targets(labels: List[Label], regs: Optional[np.ndarray] = None,
                offsets: Optional[np.ndarray] = None) -> List[CandidateTarget]:
        out = []
        for i, label in enumerate(labels):
            if label is Label.POSITIVE:
                out.append(CandidateTarget(label, np.zeros(4) if regs is None else regs[i] + offsets))
            else:
                out.append(CandidateTarget(label))
        return out

    view1, labels1, offsets1 = candidates(View.VIEW1)
    view2, labels2, offsets2 = candidates(View.VIEW2)
    gt1 = [GroundTruthBox(view1[0].geometry, 0)]
    gt2 = [GroundTruthBox(view2[0].geometry, 0)]
    draft = PairedSample(case_id=cfg.seed, view1=view1, view2=view2, gt1=gt1, gt2=gt2,
                         targets1=targets(labels1), targets2=targets(labels2))
    regs1, regs2 = (view.regs for view in forward_pass(draft, model, cfg.loss_weights).views)
    sample = PairedSample(case_id=cfg.seed, view1=view1, view2=view2, gt1=gt1, gt2=gt2,
                          targets1=targets(labels1, regs1, offsets1),
                          targets2=targets(labels2, regs2, offsets2))
    return sample, model
