import logging
from typing import Sequence

import numpy as np

from utils.errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12
SYMMETRY_ATOL = 1e-12


def is_symmetric_array(values: np.ndarray, rtol: float = SYMMETRY_RTOL, atol: float = SYMMETRY_ATOL) -> bool:
    """Check invariance under every index permutation.

    Adjacent transpositions generate the symmetric group, so checking them
    is enough.
    """
    for axis in range(values.ndim - 1):
        if not np.allclose(values, np.swapaxes(values, axis, axis + 1), rtol=rtol, atol=atol):
            return False
    return True


def validate_cubical(values: np.ndarray) -> None:
    """Raise unless values is an m >= 2 order array with equal sides and finite entries"""
    if values.ndim < 2:
        raise DimensionError(f"Tensor order must be at least 2, got {values.ndim}")
    if len(set(values.shape)) != 1:
        raise DimensionError(f"Only cubical tensors are supported, got shape {values.shape}")
    if values.shape[0] < 1:
        raise DimensionError("Tensor dimension must be at least 1")
    if not np.all(np.isfinite(values)):
        raise DimensionError("Tensor has non-finite entries")


def require_same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"Shape mismatch: {a.shape} vs {b.shape}")


def require_mode(mode: int, order: int) -> None:
    if not 0 <= mode < order:
        raise DimensionError(f"Mode {mode} out of range for order {order}")


def require_indices(indices: Sequence[int], dim: int) -> None:
    for index in indices:
        if not 0 <= int(index) < dim:
            raise DimensionError(f"Index {index} out of range [0, {dim})")


def require_unit(vector: np.ndarray, atol: float = 1e-8) -> None:
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > atol:
        raise ParameterError(f"Atom vector must have unit norm, got {norm:.3g}")
