import numpy as np
import numpy.testing as npt
import pytest
from pydantic import ValidationError

from models import Partition
from schemas.model_params import DiagonalPolicy, ModelParams
from services.planted_model import (agreement_tensor, expectation_tensor, generate_instance, preset, sample_adjacency,
                                    sample_partition)
from utils.errors import DimensionError, InvariantError, ParameterError
from utils.helpers import derive_seed, diagonal_mask


def test_params_invariants():
    with pytest.raises(ValidationError):
        ModelParams(n=5, m=3, r=2, k=3, p=0.9, q=0.1)
    with pytest.raises(ValidationError):
        ModelParams(n=6, m=3, r=2, k=3, p=0.5, q=0.5)
    with pytest.raises(ValidationError):
        ModelParams(n=6, m=1, r=2, k=3, p=0.9, q=0.1)


def test_sample_partition_shapes():
    full = sample_partition(ModelParams(n=6, m=3, r=2, k=3, p=0.9, q=0.1), seed=1)
    assert full.unassigned() == ()
    assert full.sizes() == [3, 3]
    single = sample_partition(ModelParams(n=5, m=2, r=1, k=5, p=0.9, q=0.1), seed=1)
    assert single.clusters() == [(0, 1, 2, 3, 4)]
    partial = sample_partition(ModelParams(n=9, m=3, r=2, k=3, p=0.9, q=0.1), seed=4)
    assert len(partial.unassigned()) == 3


def test_sample_partition_is_uniform():
    params = ModelParams(n=6, m=2, r=2, k=2, p=0.9, q=0.1)
    counts = np.zeros(6)
    for seed in range(3000):
        counts += sample_partition(params, seed).assignment >= 0
    # each vertex is clustered with probability 4/6
    npt.assert_allclose(counts / 3000, 4 / 6, atol=4 * np.sqrt((2 / 9) / 3000))


def test_agreement_tensor():
    npt.assert_array_equal(agreement_tensor(Partition([0, 0]), 3).values, np.ones((2, 2, 2)))
    y_star = agreement_tensor(Partition([0, 0, 1, 1, -1]), 3)
    assert y_star.entry((0, 1, 0)) == 1.0
    assert y_star.entry((0, 1, 2)) == 0.0
    assert y_star.entry((4, 4, 4)) == 0.0
    assert Partition.from_clusters([[0, 1], [2, 3]], 4).canonical() == Partition([1, 1, 0, 0]).canonical()
    with pytest.raises(InvariantError):
        Partition.from_clusters([[0, 1], [1, 2]], 4)


def test_degenerate_probabilities():
    params = ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0)
    instance = generate_instance(params, seed=3)
    npt.assert_array_equal(instance.adjacency.values, instance.agreement.values)

    zeroed = ModelParams(n=5, m=3, r=1, k=3, p=1.0, q=0.0, diagonal_policy=DiagonalPolicy.ZEROED)
    instance = generate_instance(zeroed, seed=3)
    assert not instance.adjacency.flat[diagonal_mask(5, 3)].any()
    npt.assert_array_equal(instance.adjacency.flat[~diagonal_mask(5, 3)],
                           instance.agreement.flat[~diagonal_mask(5, 3)])


def test_adjacency_is_symmetric_and_binary(small_params, small_instance):
    a = small_instance.adjacency
    assert a.is_symmetric()
    assert set(np.unique(a.values)) <= {0.0, 1.0}
    again = sample_adjacency(small_params, small_instance.truth, derive_seed(7, 1))
    npt.assert_array_equal(again.values, a.values)


def test_adjacency_rejects_wrong_partition(small_params):
    with pytest.raises(DimensionError):
        sample_adjacency(small_params, Partition([0, 0, 0, 1, 1, 1, -1]), seed=0)


def test_expectation_tensor():
    truth = Partition([0, 0, 1, 1])
    y_star = agreement_tensor(truth, 3)
    mean = expectation_tensor(ModelParams(n=4, m=3, r=2, k=2, p=0.7, q=0.0), truth)
    npt.assert_allclose(mean.values, 0.7 * y_star.values)
    zeroed = expectation_tensor(ModelParams(n=4, m=3, r=2, k=2, p=0.7, q=0.2,
                                            diagonal_policy=DiagonalPolicy.ZEROED), truth)
    assert zeroed.entry((0, 0, 1)) == 0.0
    assert zeroed.entry((0, 1, 2)) == pytest.approx(0.2)


def test_edge_frequencies():
    params = ModelParams(n=4, m=3, r=1, k=2, p=0.8, q=0.2)
    truth = Partition([0, 0, -1, -1])
    inside = outside = 0.0
    trials = 10_000
    for seed in range(trials):
        a = sample_adjacency(params, truth, seed)
        inside += a.entry((0, 1, 0))
        outside += a.entry((0, 2, 3))
    sigma = np.sqrt(0.16 / trials)
    assert abs(inside / trials - 0.8) <= 3 * sigma
    assert abs(outside / trials - 0.2) <= 3 * sigma


@pytest.mark.slow
def test_mean_decomposition():
    params = ModelParams(n=4, m=3, r=2, k=2, p=0.8, q=0.2)
    truth = Partition([0, 0, 1, 1])
    total = np.zeros((4, 4, 4))
    trials = 10_000
    for seed in range(trials):
        total += sample_adjacency(params, truth, seed).values
    expected = expectation_tensor(params, truth).values
    npt.assert_allclose(total / trials, expected, atol=3 * np.sqrt(0.25 / trials))


def test_presets():
    hsbm = preset('hsbm', r=2, k=5, p=0.9, q=0.1)
    assert hsbm.n == 10
    assert preset('hyperclique', q=0.3).p == 1.0
    assert preset('densest', k=3, n=8).r == 1
    with pytest.raises(ParameterError):
        preset('densest', r=2)
    with pytest.raises(ParameterError):
        preset('hsbm', n=11, r=2, k=5)
    with pytest.raises(ParameterError):
        preset('hyperclique', q=0.0)
    with pytest.raises(ParameterError):
        preset('planted-clique')


def test_generate_instance_is_deterministic(small_params):
    first = generate_instance(small_params, seed=99)
    second = generate_instance(small_params, seed=99)
    npt.assert_array_equal(first.adjacency.values, second.adjacency.values)
    assert first.truth.canonical() == second.truth.canonical()
