"""Shared fixtures: seeded random sources, toy models and tiny datasets."""

import numpy as np
import pytest

from cvr_net.config import GeneratorConfig, GradCheckConfig, ModelConfig
from cvr_net.data import generate_dataset
from cvr_net.gradients import build_gradcheck_problem
from cvr_net.model import init_model
from cvr_net.numerics import Rng
from cvr_net.relation import RelationBlockParams
from cvr_net.schema import RoiCandidate, RoiGeometry, View


def random_candidates(rng: Rng, n: int, d_f: int, view: View, extent: float = 200.0):
    """Candidates with random boxes and standard-normal features."""
    cands = []
    for _ in range(n):
        geometry = RoiGeometry(x=float(rng.uniform(0, extent)), y=float(rng.uniform(0, extent)),
                               w=float(rng.uniform(5, 40)), h=float(rng.uniform(5, 40)))
        cands.append(RoiCandidate(geometry, rng.normal(size=d_f), view))
    return cands


def random_block(rng: Rng, d_f: int = 6, d_k: int = 4, d_emb: int = 8, v_scale: float = 1.0) -> RelationBlockParams:
    return RelationBlockParams(
        W1=rng.normal(0.0, 0.5, size=(d_k, d_f)),
        W2=rng.normal(0.0, 0.5, size=(d_k, d_f)),
        W3=rng.normal(0.0, 0.5, size=(d_f, d_f)),
        # non-negative gate projection
        v=np.abs(rng.normal(0.0, v_scale, size=d_emb)),
    )


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def toy_model_config():
    return ModelConfig(d_f=8, d_k=4, d_emb=8, n_blocks=2)


@pytest.fixture
def toy_model(toy_model_config):
    return init_model(toy_model_config, Rng(7))


@pytest.fixture
def gradcheck_problem():
    return build_gradcheck_problem(GradCheckConfig())


@pytest.fixture
def tiny_generator_config():
    return GeneratorConfig(n_cases=6, seed=3, d_f=16, d_sig=8)


@pytest.fixture
def tiny_dataset(tiny_generator_config):
    return generate_dataset(tiny_generator_config)


@pytest.fixture
def noiseless_generator_config():
    return GeneratorConfig(n_cases=1, seed=11, d_f=16, d_sig=8, lesions_per_case=(1, 1),
                           distractors_per_view=(2, 3), feature_noise_sigma=0.0,
                           geometry_noise_sigma=0.0, distractor_confusability=0.0)
