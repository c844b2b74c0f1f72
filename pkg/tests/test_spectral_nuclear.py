import numpy as np
import numpy.testing as npt
import pytest

from models import Partition, RankOneAtom
from services.planted_model import agreement_tensor
from services.spectral_nuclear import (agreement_decomposition, nuclear_bounds, nuclear_lower_from_witness,
                                       nuclear_upper_from_decomposition, power_iteration, spectral_oracle,
                                       spectral_upper_heuristic)
from services.tensor_core import inner_product, ones_tensor, outer_power, random_symmetric, scale, zeros_tensor
from tests.helpers import random_partition
from utils.errors import ParameterError
from utils.helpers import make_rng


def _unit(values):
    u = np.asarray(values, dtype=float)
    return u / np.linalg.norm(u)


def test_power_iteration_on_reference_tensors():
    assert power_iteration(zeros_tensor(3, 3)).value == 0.0
    y_star = agreement_tensor(Partition([0, 0, 1, 1]), 4)
    assert power_iteration(y_star, restarts=64).value == pytest.approx(4.0, abs=1e-6)
    assert power_iteration(ones_tensor(3, 3)).value == pytest.approx(3 ** 1.5, abs=1e-6)


@pytest.mark.parametrize('r,k,m', [(1, 2, 3), (2, 3, 3), (2, 2, 4)])
def test_agreement_norms(r, k, m):
    truth = Partition(np.repeat(np.arange(r), k))
    y_star = agreement_tensor(truth, m)
    assert power_iteration(y_star, restarts=64).value == pytest.approx(k ** (m / 2.0), abs=1e-6)
    bounds = nuclear_bounds(y_star, agreement_decomposition(truth, m), scale(y_star, k ** (-m / 2.0)))
    assert bounds.upper == pytest.approx(r * k ** (m / 2.0), abs=1e-8)
    assert bounds.lower == pytest.approx(r * k ** (m / 2.0), abs=1e-8)
    assert bounds.is_tight()


def test_witness_orientation_for_odd_order():
    u = _unit([1.0, 2.0, -1.0])
    estimate = power_iteration(scale(outer_power(u, 3), -1.0))
    assert estimate.value == pytest.approx(1.0, abs=1e-8)
    # the witness of an odd-order tensor attains +value
    assert float(np.einsum('ijk,i,j,k->', -outer_power(u, 3).values, *[estimate.witness] * 3)) > 0


def test_power_iteration_is_reproducible():
    a = random_symmetric(4, 3, make_rng(3))
    first = power_iteration(a, restarts=8, seed=11)
    second = power_iteration(a, restarts=8, seed=11)
    assert first.value == second.value
    npt.assert_array_equal(first.witness, second.witness)
    with pytest.raises(ParameterError):
        power_iteration(a, restarts=0)


def test_oracle_examples():
    u = _unit([3.0, -1.0, 2.0])
    estimate = spectral_oracle(outer_power(u, 3))
    assert estimate.value == pytest.approx(1.0, abs=1e-6)
    assert abs(abs(estimate.witness @ u) - 1.0) < 1e-4
    y_star = agreement_tensor(Partition([0, 0, 0, 0]), 3)
    assert spectral_oracle(y_star).value == pytest.approx(8.0, abs=1e-6)


def test_oracle_agrees_with_power_iteration():
    a = random_symmetric(4, 3, make_rng(21))
    assert spectral_oracle(a).value == pytest.approx(power_iteration(a, restarts=64).value, abs=1e-6)


def test_upper_heuristic():
    u = _unit([1.0, 1.0, 0.0, 2.0])
    assert spectral_upper_heuristic(outer_power(u, 3), safety=1.0) == pytest.approx(1.0, abs=1e-9)
    assert spectral_upper_heuristic(zeros_tensor(3, 3)) == 0.0
    a = random_symmetric(4, 3, make_rng(5))
    assert spectral_upper_heuristic(a, safety=1.1) >= spectral_oracle(a).value
    with pytest.raises(ParameterError):
        spectral_upper_heuristic(a, safety=0.9)


def test_nuclear_upper_examples():
    u = _unit([1.0, 2.0])
    value, tensor = nuclear_upper_from_decomposition([RankOneAtom(-2.5, u)], 3)
    assert value == 2.5
    npt.assert_allclose(tensor.values, -2.5 * outer_power(u, 3).values)

    value, tensor = nuclear_upper_from_decomposition([RankOneAtom(1.5, u), RankOneAtom(-1.5, u)], 3)
    assert value == 3.0
    npt.assert_allclose(tensor.values, 0.0, atol=1e-15)

    with pytest.raises(ParameterError):
        nuclear_upper_from_decomposition([RankOneAtom(1.0, np.array([1.0, 1.0]))], 3)


def test_nuclear_lower_examples():
    truth = Partition([0, 0, 1, 1, -1])
    y_star = agreement_tensor(truth, 3)
    assert nuclear_lower_from_witness(y_star, scale(y_star, 2 ** -1.5)) == pytest.approx(2 * 2 ** 1.5, abs=1e-9)
    assert nuclear_lower_from_witness(y_star, zeros_tensor(5, 3)) == 0.0
    u = _unit([1.0, -1.0, 3.0])
    assert nuclear_lower_from_witness(outer_power(u, 3), outer_power(u, 3)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        nuclear_lower_from_witness(y_star, y_star)


def test_nuclear_bounds_rejects_wrong_decomposition():
    truth = Partition([0, 0, 1, 1])
    y_star = agreement_tensor(truth, 3)
    atoms = agreement_decomposition(truth, 3)[:1]
    with pytest.raises(ParameterError):
        nuclear_bounds(y_star, atoms, scale(y_star, 2 ** -1.5))


@pytest.mark.parametrize('c', [2.5, -0.3, -4.0])
def test_power_iteration_is_absolutely_homogeneous(c):
    rng = make_rng(31)
    for _ in range(5):
        a = random_symmetric(4, 3, rng)
        base = power_iteration(a, restarts=16, seed=5).value
        scaled = power_iteration(scale(a, c), restarts=16, seed=5).value
        assert scaled == pytest.approx(abs(c) * base, rel=1e-6)


def test_spectral_nuclear_duality():
    rng = make_rng(17)
    for _ in range(10):
        a = random_symmetric(4, 3, rng)
        spectral = spectral_oracle(a).value
        atoms = [RankOneAtom(float(rng.normal()), _unit(rng.normal(size=4))) for _ in range(3)]
        upper, b = nuclear_upper_from_decomposition(atoms, 3)
        assert abs(inner_product(a, b)) <= spectral * upper + 1e-6


def test_nuclear_bounds_sandwich_on_random_partitions():
    rng = make_rng(9)
    for _ in range(12):
        m = int(rng.integers(2, 4))
        r = int(rng.integers(1, 3))
        k = int(rng.integers(1, 4))
        n = r * k + int(rng.integers(0, 2))
        truth = random_partition(rng, n, r, k)
        y_star = agreement_tensor(truth, m)
        atoms = agreement_decomposition(truth, m)
        noise = random_symmetric(n, m, rng)
        witness = scale(noise, 1.0 / spectral_upper_heuristic(noise, safety=1.5))
        bounds = nuclear_bounds(y_star, atoms, witness)
        assert bounds.lower <= bounds.upper + 1e-8
        assert bounds.upper == pytest.approx(r * k ** (m / 2.0))
