"""Elementary algebra on dense symmetric tensors.

Vertices, modes and index tuples are 0-based throughout.
"""
import logging
from functools import reduce
from itertools import permutations
from math import factorial
from typing import Sequence

import numpy as np

from models import SymmetricTensor
from utils.errors import DimensionError, ParameterError
from utils.validators import require_indices, require_mode, require_same_shape

logger = logging.getLogger(__name__)


def _wrap(values: np.ndarray, symmetric: bool) -> SymmetricTensor:
    # entrywise operations on symmetric inputs stay exactly symmetric
    return SymmetricTensor(values, symmetric=symmetric, verify=False)


def inner_product(a: SymmetricTensor, b: SymmetricTensor) -> float:
    """Sum over all index tuples of the entrywise products"""
    require_same_shape(a, b)
    return float(np.vdot(a.values, b.values))


def outer_power(u, m: int) -> SymmetricTensor:
    """u^{(x)m}: entry (i1..im) is u[i1] * ... * u[im]"""
    if m < 2:
        raise ParameterError(f"Order must be at least 2, got {m}")
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.size == 0:
        raise DimensionError("Vector must not be empty")
    if not np.all(np.isfinite(u)):
        raise ParameterError("Vector has non-finite entries")
    return _wrap(reduce(np.multiply.outer, [u] * m), symmetric=True)


def entrywise_l1(a: SymmetricTensor) -> float:
    return float(np.abs(a.values).sum())


def entrywise_linf(a: SymmetricTensor) -> float:
    return float(np.abs(a.values).max())


def add(a: SymmetricTensor, b: SymmetricTensor) -> SymmetricTensor:
    require_same_shape(a, b)
    return _wrap(a.values + b.values, a.symmetric and b.symmetric)


def subtract(a: SymmetricTensor, b: SymmetricTensor) -> SymmetricTensor:
    require_same_shape(a, b)
    return _wrap(a.values - b.values, a.symmetric and b.symmetric)


def scale(a: SymmetricTensor, c: float) -> SymmetricTensor:
    c = float(c)
    if not np.isfinite(c):
        raise ParameterError(f"Scale factor must be finite, got {c}")
    return _wrap(a.values * c, a.symmetric)


def fiber(a: SymmetricTensor, mode: int, fixed: Sequence[int]) -> np.ndarray:
    """Mode-`mode` fiber with the other m-1 indices given by `fixed` (in mode order)"""
    require_mode(mode, a.order)
    fixed = [int(i) for i in fixed]
    if len(fixed) != a.order - 1:
        raise DimensionError(f"Need {a.order - 1} fixed indices, got {len(fixed)}")
    require_indices(fixed, a.dim)
    index = fixed[:mode] + [slice(None)] + fixed[mode:]
    return np.array(a.values[tuple(index)])


def ones_tensor(n: int, m: int) -> SymmetricTensor:
    """1^{(x)m}"""
    return _wrap(np.ones((n,) * m), symmetric=True)


def zeros_tensor(n: int, m: int) -> SymmetricTensor:
    return _wrap(np.zeros((n,) * m), symmetric=True)


def symmetrize(values: np.ndarray) -> np.ndarray:
    """Average an array over all permutations of its axes"""
    m = values.ndim
    total = np.zeros_like(values, dtype=np.float64)
    for perm in permutations(range(m)):
        total += np.transpose(values, perm)
    return total / factorial(m)


def random_symmetric(n: int, m: int, rng: np.random.Generator) -> SymmetricTensor:
    """Symmetric tensor with standard normal draws averaged over index permutations"""
    return SymmetricTensor(symmetrize(rng.standard_normal((n,) * m)))


def is_symmetric(a: SymmetricTensor) -> bool:
    return a.is_symmetric()
