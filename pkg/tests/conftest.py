import numpy as np
import pytest

from models import Partition
from schemas.model_params import ModelParams
from services.planted_model import generate_instance


@pytest.fixture
def np_random():
    return np.random.default_rng(12345)


@pytest.fixture
def small_params():
    return ModelParams(n=6, m=3, r=2, k=3, p=0.9, q=0.1)


@pytest.fixture
def small_instance(small_params):
    return generate_instance(small_params, seed=7)


@pytest.fixture
def two_clusters():
    # vertices 0..5 in two clusters, 6 unclustered
    return Partition([0, 1, 0, 1, 0, 1, -1])
