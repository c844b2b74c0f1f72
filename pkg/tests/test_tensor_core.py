import itertools

import numpy as np
import numpy.testing as npt
import pytest

from models import Partition, SymmetricTensor
from services.planted_model import agreement_tensor
from services.tensor_core import (add, entrywise_l1, entrywise_linf, fiber, inner_product, is_symmetric, ones_tensor,
                                  outer_power, random_symmetric, scale, subtract, symmetrize, zeros_tensor)
from utils.errors import DimensionError, ParameterError, SymmetryError


def test_inner_product_of_ones_with_agreement():
    y_star = agreement_tensor(Partition([0, 0, 1, 1]), 3)
    assert inner_product(ones_tensor(4, 3), y_star) == 16.0


def test_inner_product_matches_loop(np_random):
    a = random_symmetric(3, 3, np_random)
    b = random_symmetric(3, 3, np_random)
    expected = 0.0
    for i, j, k in itertools.product(range(3), repeat=3):
        expected += a.values[i, j, k] * b.values[i, j, k]
    assert inner_product(a, b) == pytest.approx(expected, abs=1e-12)
    assert inner_product(zeros_tensor(3, 3), zeros_tensor(3, 3)) == 0.0


def test_inner_product_shape_mismatch():
    with pytest.raises(DimensionError):
        inner_product(ones_tensor(3, 3), ones_tensor(4, 3))


def test_outer_power_examples():
    e1 = outer_power([1.0, 0.0, 0.0], 3)
    assert e1.values[0, 0, 0] == 1.0
    assert entrywise_l1(e1) == 1.0
    npt.assert_array_equal(outer_power([1.0, 1.0], 3).values, np.ones((2, 2, 2)))
    npt.assert_array_equal(outer_power([1.0, 2.0], 2).values, [[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(ParameterError):
        outer_power([1.0, 2.0], 1)


def test_entrywise_norms():
    y_star = agreement_tensor(Partition([0, 0]), 3)
    assert entrywise_l1(y_star) == 8.0
    assert entrywise_linf(zeros_tensor(4, 3)) == 0.0
    a = SymmetricTensor(np.array([[1.0, -3.0], [-3.0, 2.0]]))
    assert entrywise_l1(a) == 9.0
    assert entrywise_linf(a) == 3.0


def test_arithmetic(np_random):
    a = random_symmetric(3, 3, np_random)
    assert entrywise_linf(subtract(a, a)) == 0.0
    npt.assert_allclose(add(a, a).values, scale(a, 2.0).values)
    assert add(a, a).symmetric
    with pytest.raises(ParameterError):
        scale(a, np.inf)


def test_fibers():
    u = np.array([1.0, 2.0, 3.0])
    a = outer_power(u, 3)
    npt.assert_allclose(fiber(a, 0, [1, 2]), u * u[1] * u[2])
    npt.assert_allclose(fiber(a, 2, [0, 1]), u * u[0] * u[1])
    npt.assert_array_equal(fiber(ones_tensor(3, 4), 1, [0, 2, 1]), np.ones(3))
    with pytest.raises(DimensionError):
        fiber(a, 3, [0, 0])
    with pytest.raises(DimensionError):
        fiber(a, 0, [0, 5])


def test_symmetry_checks(np_random):
    values = np_random.standard_normal((3, 3, 3))
    with pytest.raises(SymmetryError):
        SymmetricTensor(values)
    general = SymmetricTensor(values, symmetric=False)
    assert not is_symmetric(general)
    assert is_symmetric(SymmetricTensor(symmetrize(values)))
    assert random_symmetric(4, 3, np_random).is_symmetric()


def test_tensor_validation():
    with pytest.raises(DimensionError):
        SymmetricTensor(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        SymmetricTensor(np.ones(3))
    with pytest.raises(DimensionError):
        SymmetricTensor(np.full((2, 2), np.nan))
    with pytest.raises(DimensionError):
        ones_tensor(3, 3).entry((0, 0))
    assert ones_tensor(3, 3).entry((2, 1, 0)) == 1.0


def test_values_are_read_only():
    a = ones_tensor(2, 2)
    with pytest.raises(ValueError):
        a.values[0, 0] = 5.0
