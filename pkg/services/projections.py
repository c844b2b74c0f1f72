"""Fiber-span projectors and the composite projections Q^0, Q^i, Q and Q-perp.

Modes are 0-based. ``q_component(i)`` keeps the definition's numbering:
i = 0 projects every mode onto its fiber span, i = j >= 1 puts the
orthogonal complement on mode j - 1 and the span projector on the others.
"""
import logging
from typing import List, Sequence

import numpy as np
from scipy.linalg import orth

from models import ModeProjector, Partition, SymmetricTensor
from services.tensor_core import add, scale, subtract
from utils.errors import DimensionError, ParameterError
from utils.validators import require_mode, require_same_shape

logger = logging.getLogger(__name__)

RANK_RCOND = 1e-10


def _unfold(a: SymmetricTensor, mode: int) -> np.ndarray:
    """(n, n^{m-1}) matrix whose columns are the mode-`mode` fibers"""
    return np.moveaxis(a.values, mode, 0).reshape(a.dim, -1)


def fiber_span_projector(a: SymmetricTensor, mode: int) -> ModeProjector:
    """Orthogonal projector onto the span of all mode-`mode` fibers of a"""
    require_mode(mode, a.order)
    basis = orth(_unfold(a, mode), rcond=RANK_RCOND)
    if basis.shape[1] == 0:
        return ModeProjector.zero(a.dim)
    matrix = basis @ basis.T
    # exact symmetry; orth's rounding can leave a 1e-17 skew
    return ModeProjector((matrix + matrix.T) / 2.0, verify=False)


def agreement_projector(membership: Partition) -> ModeProjector:
    """Closed form (1/k) sum_i y^(i) y^(i)^T of the agreement tensor's fiber span"""
    k = membership.k
    y = membership.membership_vectors()
    return ModeProjector(y.T @ y / k, verify=False)


def apply_modes(values: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Apply matrices[j] to every mode-j fiber; None leaves the mode alone"""
    out = values
    for mode, matrix in enumerate(matrices):
        if matrix is None:
            continue
        out = np.moveaxis(np.tensordot(matrix, out, axes=([1], [mode])), 0, mode)
    return out


def mode_multiply(a: SymmetricTensor, p: ModeProjector, mode: int) -> SymmetricTensor:
    """Apply the linear map p to every mode-`mode` fiber of a"""
    require_mode(mode, a.order)
    if p.dim != a.dim:
        raise DimensionError(f"Projector dim {p.dim} does not match tensor dim {a.dim}")
    matrices = [None] * a.order
    matrices[mode] = p.matrix
    return SymmetricTensor(apply_modes(a.values, matrices), symmetric=False, verify=False)


def mode_projectors(a_ref: SymmetricTensor) -> List[np.ndarray]:
    return [fiber_span_projector(a_ref, mode).matrix for mode in range(a_ref.order)]


def _component(projectors: List[np.ndarray], x: SymmetricTensor, i: int) -> SymmetricTensor:
    matrices = list(projectors)
    if i >= 1:
        matrices[i - 1] = np.eye(x.dim) - projectors[i - 1]
    return SymmetricTensor(apply_modes(x.values, matrices), symmetric=False, verify=False)


def q_component(a_ref: SymmetricTensor, x: SymmetricTensor, i: int) -> SymmetricTensor:
    """Q^0 (i = 0) or Q^i (i in 1..m) of x with respect to a_ref"""
    require_same_shape(a_ref, x)
    if not 0 <= i <= a_ref.order:
        raise DimensionError(f"Component index {i} outside 0..{a_ref.order}")
    return _component(mode_projectors(a_ref), x, i)


def q_project(a_ref: SymmetricTensor, x: SymmetricTensor) -> SymmetricTensor:
    """Q(x) = sum of the m + 1 components"""
    require_same_shape(a_ref, x)
    projectors = mode_projectors(a_ref)
    total = np.zeros_like(x.values)
    for i in range(a_ref.order + 1):
        total += _component(projectors, x, i).values
    return SymmetricTensor(total, symmetric=False, verify=False)


def q_perp_project(a_ref: SymmetricTensor, x: SymmetricTensor) -> SymmetricTensor:
    """Q-perp(x) = x - Q(x)"""
    projected = q_project(a_ref, x)
    return SymmetricTensor(x.values - projected.values, symmetric=False, verify=False)


def q_symmetric_expansion(partition: Partition, x: SymmetricTensor) -> SymmetricTensor:
    """Q_{Y*}(x) through the expanded form for a symmetric reference.

    With the common span projector P, Q equals the sum over modes j of
    (P x .. x I_j x .. x P) minus (m - 1) times P x .. x P.
    """
    if partition.n != x.dim:
        raise DimensionError(f"Partition has {partition.n} vertices, tensor dim is {x.dim}")
    p = agreement_projector(partition).matrix
    m = x.order
    total = np.zeros_like(x.values)
    for j in range(m):
        matrices = [p] * m
        matrices[j] = None
        total += apply_modes(x.values, matrices)
    total -= (m - 1) * apply_modes(x.values, [p] * m)
    return SymmetricTensor(total, symmetric=False, verify=False)
