"""Pydantic models for generator, model, training, evaluation and run configuration."""

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from ..errors import ValidationError


def _check_range(v: Tuple[float, float], name: str, minimum: float = 0) -> Tuple[float, float]:
    low, high = v
    if low < minimum:
        raise ValidationError(f"{name} lower bound must be >= {minimum}, got {low}")
    if high < low:
        raise ValidationError(f"{name} range is empty: ({low}, {high})")
    return v


class LossWeights(BaseModel):
    """Coefficients of the two-view detection loss."""

    alpha: float = Field(2.0, description="View-1 regression weight")
    beta: float = Field(1.0, description="View-2 classification weight")
    gamma: float = Field(2.0, description="View-2 regression weight")

    @field_validator('alpha', 'beta', 'gamma')
    @classmethod
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValidationError("Loss weights must be non-negative")
        return v


class ModelConfig(BaseModel):
    """Dimensions and constants of one relation network."""

    d_f: int = Field(128, description="Visual feature length")
    d_k: int = Field(64, description="Affinity projection length")
    d_emb: int = Field(64, description="Geometry embedding length")
    n_blocks: int = Field(3, description="Relation blocks per direction")
    wavelength: float = Field(1000.0, description="Base wavelength of the geometry embedding")
    geometry_eps: float = Field(1e-3, description="Clamp for zero positional offsets")
    denom_eps: float = Field(1e-12, description="Aggregation denominator floor")
    shared_heads: bool = Field(True, description="One head set for both views")

    @field_validator('d_f', 'd_k')
    @classmethod
    def validate_positive_dim(cls, v):
        if v <= 0:
            raise ValidationError("Dimensions must be positive")
        return v

    @field_validator('d_emb')
    @classmethod
    def validate_d_emb(cls, v):
        if v <= 0 or v % 8 != 0:
            raise ValidationError(f"d_emb must be a positive multiple of 8, got {v}")
        return v

    @field_validator('n_blocks')
    @classmethod
    def validate_n_blocks(cls, v):
        if v < 0:
            raise ValidationError("n_blocks must be non-negative")
        return v

    @field_validator('wavelength')
    @classmethod
    def validate_wavelength(cls, v):
        if v <= 1:
            raise ValidationError(f"wavelength must exceed 1, got {v}")
        return v

    @field_validator('geometry_eps', 'denom_eps')
    @classmethod
    def validate_eps(cls, v):
        if v <= 0:
            raise ValidationError("Epsilon values must be positive")
        return v


class TrainConfig(BaseModel):
    """SGD training run; defaults follow the reference training protocol."""

    learning_rate: float = Field(0.001, description="SGD step size")
    momentum: float = Field(0.9, description="Heavy-ball momentum")
    epochs: int = Field(20, description="Passes over the training set")
    batch_size: int = Field(2, description="Paired cases per step")
    n_blocks: int = Field(3, description="Relation blocks per direction")
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = Field(0, description="Initialisation and shuffling seed")
    d_k: int = Field(64, description="Affinity projection length")
    d_emb: int = Field(64, description="Geometry embedding length")
    wavelength: float = Field(1000.0, description="Base wavelength of the geometry embedding")
    geometry_eps: float = Field(1e-3, description="Clamp for zero positional offsets")
    denom_eps: float = Field(1e-12, description="Aggregation denominator floor")
    shared_heads: bool = Field(True, description="One head set for both views")
    show_progress: bool = Field(False, description="Display a tqdm progress bar")

    @field_validator('learning_rate')
    @classmethod
    def validate_learning_rate(cls, v):
        if not v > 0:
            raise ValidationError(f"learning_rate must be positive, got {v}")
        return v

    @field_validator('momentum')
    @classmethod
    def validate_momentum(cls, v):
        if not 0 <= v < 1:
            raise ValidationError(f"momentum must lie in [0, 1), got {v}")
        return v

    @field_validator('epochs', 'batch_size')
    @classmethod
    def validate_at_least_one(cls, v):
        if v < 1:
            raise ValidationError(f"must be at least 1, got {v}")
        return v

    @field_validator('seed')
    @classmethod
    def validate_seed(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        return v

    def model_config_for(self, d_f: int) -> ModelConfig:
        """Model dimensions for features of length ``d_f``."""
        return ModelConfig(
            d_f=d_f, d_k=self.d_k, d_emb=self.d_emb, n_blocks=self.n_blocks,
            wavelength=self.wavelength, geometry_eps=self.geometry_eps,
            denom_eps=self.denom_eps, shared_heads=self.shared_heads,
        )


class GeneratorConfig(BaseModel):
    """Synthetic paired-view benchmark."""

    n_cases: int = Field(..., description="Number of paired cases")
    seed: int = Field(..., description="Generator seed")
    image_extent: float = Field(1024.0, description="Side of the square image")
    lesions_per_case: Tuple[int, int] = Field((1, 2), description="Inclusive lesion count range")
    distractors_per_view: Tuple[int, int] = Field((2, 5), description="Inclusive distractor count range")
    lesion_size_range: Tuple[float, float] = Field((48.0, 112.0), description="Lesion box side range")
    feature_noise_sigma: float = Field(0.5, description="View-specific feature noise")
    geometry_noise_sigma: float = Field(8.0, description="Placement and box jitter")
    lesion_variation: float = Field(0.6, description="Per-lesion deviation from the lesion prototype")
    distractor_confusability: float = Field(0.6, description="0 = pure noise, 1 = copy of a lesion signature")
    d_f: int = Field(128, description="Feature length")
    d_sig: int = Field(32, description="Latent signature length")
    train_fraction: Optional[float] = Field(None, description="Also write a case-level train/test split")

    @field_validator('n_cases')
    @classmethod
    def validate_n_cases(cls, v):
        if v < 0:
            raise ValidationError("n_cases must be non-negative")
        return v

    @field_validator('seed')
    @classmethod
    def validate_seed(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        return v

    @field_validator('image_extent')
    @classmethod
    def validate_extent(cls, v):
        if v <= 0:
            raise ValidationError("image_extent must be positive")
        return v

    @field_validator('lesions_per_case')
    @classmethod
    def validate_lesions(cls, v):
        return _check_range(v, "lesions_per_case")

    @field_validator('distractors_per_view')
    @classmethod
    def validate_distractors(cls, v):
        return _check_range(v, "distractors_per_view")

    @field_validator('lesion_size_range')
    @classmethod
    def validate_sizes(cls, v):
        if v[0] <= 0:
            raise ValidationError("lesion sizes must be positive")
        return _check_range(v, "lesion_size_range")

    @field_validator('feature_noise_sigma', 'geometry_noise_sigma', 'lesion_variation')
    @classmethod
    def validate_sigma(cls, v):
        if v < 0:
            raise ValidationError("noise levels must be non-negative")
        return v

    @field_validator('distractor_confusability')
    @classmethod
    def validate_confusability(cls, v):
        if not 0 <= v <= 1:
            raise ValidationError("distractor_confusability must lie in [0, 1]")
        return v

    @field_validator('d_f', 'd_sig')
    @classmethod
    def validate_dims(cls, v):
        if v <= 0:
            raise ValidationError("Dimensions must be positive")
        return v

    @field_validator('train_fraction')
    @classmethod
    def validate_fraction(cls, v):
        if v is not None and not 0 < v < 1:
            raise ValidationError("train_fraction must lie strictly between 0 and 1")
        return v

    @model_validator(mode='after')
    def validate_boxes_fit(self):
        if self.lesion_size_range[1] >= self.image_extent:
            raise ValidationError("lesions must be smaller than the image")
        return self


class EvalConfig(BaseModel):
    """Post-processing and matching thresholds."""

    score_threshold: float = Field(0.5, description="Operating threshold for the headline row")
    iou_threshold: float = Field(0.5, description="Minimum IoU for a true positive")
    nms_iou: float = Field(0.5, description="Per-view suppression overlap")
    fpi_points: List[float] = Field(default_factory=lambda: [1.2, 1.9, 4.4],
                                    description="FPI values at which TPR is reported")

    @field_validator('score_threshold', 'iou_threshold', 'nms_iou')
    @classmethod
    def validate_unit_interval(cls, v):
        if not 0 <= v <= 1:
            raise ValidationError(f"thresholds must lie in [0, 1], got {v}")
        return v

    @field_validator('fpi_points')
    @classmethod
    def validate_fpi_points(cls, v):
        if any(p < 0 for p in v):
            raise ValidationError("FPI points must be non-negative")
        return sorted(v)


class GradCheckConfig(BaseModel):
    """Toy-scale finite-difference verification."""

    seed: int = Field(0, description="Model and sample seed")
    d_f: int = Field(8, description="Feature length")
    d_k: int = Field(4, description="Affinity projection length")
    d_emb: int = Field(8, description="Geometry embedding length")
    n_blocks: int = Field(2, description="Relation blocks per direction")
    candidates_per_view: int = Field(3, description="Candidates in each view")
    step: float = Field(1e-5, description="Central-difference step")
    tolerance: float = Field(1e-4, description="Maximum accepted relative error")
    shared_heads: bool = Field(True, description="One head set for both views")
    loss_weights: LossWeights = Field(default_factory=LossWeights)

    @field_validator('step')
    @classmethod
    def validate_step(cls, v):
        if not 1e-7 <= v <= 1e-3:
            raise ValidationError(f"step must lie in [1e-7, 1e-3], got {v}")
        return v

    @field_validator('tolerance')
    @classmethod
    def validate_tolerance(cls, v):
        if v <= 0:
            raise ValidationError("tolerance must be positive")
        return v

    @field_validator('candidates_per_view')
    @classmethod
    def validate_candidates(cls, v):
        if v < 1:
            raise ValidationError("each view needs at least one candidate")
        return v

    def model_config_for(self) -> ModelConfig:
        return ModelConfig(d_f=self.d_f, d_k=self.d_k, d_emb=self.d_emb,
                           n_blocks=self.n_blocks, shared_heads=self.shared_heads)


class AblationConfig(BaseModel):
    """Relation-block count sweep."""

    n_values: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])

    @field_validator('n_values')
    @classmethod
    def validate_n_values(cls, v):
        if not v:
            raise ValidationError("n_values must not be empty")
        if any(n < 0 for n in v):
            raise ValidationError("n_values must be non-negative")
        return sorted(set(v))

    @field_validator('seeds')
    @classmethod
    def validate_seeds(cls, v):
        if not v:
            raise ValidationError("seeds must not be empty")
        return v


class RunManifest(BaseModel):
    """Record of one command-line run."""

    command: str
    version: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
    exit_code: int = 0
    duration_seconds: float = 0.0
