"""Spectral-norm estimation and nuclear-norm bounds for symmetric tensors.

The spectral norm is sup over unit u of |<A, u^{(x)m}>|. Every estimate here
carries the unit vector achieving its value, so each value is a certified
lower bound; upper bounds on the spectral norm are heuristic (safety factor
times the best value found). Nuclear norms are only bracketed: a rank-one
decomposition gives an upper bound, a witness of spectral norm <= 1 gives a
lower bound.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from models import NuclearBounds, Partition, RankOneAtom, SpectralEstimate, SymmetricTensor
from services.tensor_core import inner_product, outer_power, zeros_tensor
from utils.errors import NumericalError, ParameterError
from utils.helpers import derive_seed, make_rng
from utils.validators import require_unit

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 64
DEFAULT_MAX_ITERS = 500
DEFAULT_TOL = 1e-10
HEURISTIC_RESTARTS = 256
ORACLE_MAX_N = 6
# shift floor, relative to ||A||_F
SHIFT_TAU = 1e-6


def _contract(values: np.ndarray, vectors: np.ndarray, times: int) -> np.ndarray:
    """Contract the last `times` modes of values with each column of vectors.

    values has shape (n,)*m and vectors (n, c); the result has shape
    (n,)*(m - times) + (c,).
    """
    if times == 0:
        return np.broadcast_to(values[..., None], values.shape + (vectors.shape[1],))
    out = np.tensordot(values, vectors, axes=([values.ndim - 1], [0]))
    for _ in range(times - 1):
        out = np.einsum('...jc,jc->...c', out, vectors)
    return out


def _values_at(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """<A, u^{(x)m}> for every column u"""
    return _contract(values, vectors, values.ndim)


def _initial_vectors(n: int, restarts: int, seed: int) -> np.ndarray:
    columns = []
    for restart in range(restarts):
        u = make_rng(derive_seed(seed, restart)).standard_normal(n)
        columns.append(u / np.linalg.norm(u))
    return np.stack(columns, axis=1)


def _ascend(values: np.ndarray, start: np.ndarray, signs: np.ndarray, max_iters: int, tol: float):
    """Shifted symmetric power iteration, one chain per column.

    Column c maximizes signs[c] * <A, u^{(x)m}> with the update
    u <- normalize(s A u^{m-1} + alpha u), where the shift alpha makes the
    local model convex (adaptive shift from the smallest eigenvalue of
    (m - 1) s A u^{m-2}). Returns the best |value| per column, the vectors
    achieving them, the per-column convergence flags and the iteration count.
    """
    m = values.ndim
    n, chains = start.shape
    tau = SHIFT_TAU * float(np.linalg.norm(values))
    u = start.copy()
    current = signs * _values_at(values, u)
    best_value = np.abs(current)
    best_vectors = u.copy()
    converged = np.zeros(chains, dtype=bool)
    iterations = 0

    for iterations in range(1, max_iters + 1):
        hessians = _contract(values, u, m - 2) * signs
        gradient = np.einsum('ijc,jc->ic', hessians, u)
        smallest = np.linalg.eigvalsh(np.moveaxis(hessians, 2, 0))[:, 0]
        alpha = np.maximum(0.0, tau - (m - 1) * smallest)
        step = gradient + alpha * u
        norms = np.linalg.norm(step, axis=0)
        if not np.all(np.isfinite(step)):
            raise NumericalError("Non-finite value in power iteration")
        moving = norms > 0
        u[:, moving] = step[:, moving] / norms[moving]

        updated = signs * _values_at(values, u)
        change = np.abs(updated - current)
        converged |= change <= tol * np.maximum(1.0, np.abs(updated))
        current = updated

        improved = np.abs(current) > best_value
        best_value[improved] = np.abs(current[improved])
        best_vectors[:, improved] = u[:, improved]
        if np.all(converged):
            break

    return best_value, best_vectors, converged, iterations


def _finish(a: SymmetricTensor, value: float, witness: np.ndarray) -> Tuple[float, np.ndarray]:
    witness = witness / np.linalg.norm(witness) if np.linalg.norm(witness) > 0 else witness
    signed = float(_values_at(a.values, witness[:, None])[0])
    if a.order % 2 == 1 and signed < 0:
        witness = -witness
    return abs(signed), witness


def power_iteration(a: SymmetricTensor, restarts: int = DEFAULT_RESTARTS, max_iters: int = DEFAULT_MAX_ITERS,
                    tol: float = DEFAULT_TOL, seed: int = 0) -> SpectralEstimate:
    """Best |<A, u^{(x)m}>| over random restarts of the symmetric power method.

    Restart r starts from a Gaussian vector drawn with seed derive(seed, r) and
    runs two chains, one ascending <A, u^m> and one ascending -<A, u^m>. For odd
    m the second chain is the -u branch of the first.
    """
    if restarts < 1:
        raise ParameterError(f"restarts must be at least 1, got {restarts}")
    start = _initial_vectors(a.dim, restarts, seed)
    signs = np.concatenate([np.ones(restarts), -np.ones(restarts)])
    values, vectors, converged, iterations = _ascend(
        a.values, np.concatenate([start, start], axis=1), signs, max_iters, tol)

    # ties go to the lowest chain index
    best = int(np.argmax(values))
    value, witness = _finish(a, float(values[best]), vectors[:, best])
    chain_converged = converged[:restarts] & converged[restarts:]
    logger.debug(f"power iteration: value={value:.10g} after {iterations} iterations, "
                 f"{int(chain_converged.sum())}/{restarts} restarts converged")
    return SpectralEstimate(
        value=value,
        witness=witness,
        restarts=restarts,
        method='power-iteration',
        converged=bool(converged[best]),
        converged_restarts=int(chain_converged.sum()),
        iterations=iterations,
    )


def _sphere_grid(n: int, grid: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, grid)
    points = np.stack(np.meshgrid(*[axis] * n, indexing='ij'), axis=-1).reshape(-1, n)
    norms = np.linalg.norm(points, axis=1)
    points = points[norms > 0]
    return points / norms[norms > 0, None]


def spectral_oracle(a: SymmetricTensor, restarts: int = DEFAULT_RESTARTS, grid: int = 9, seed: int = 0,
                    refine: int = 8, chunk: int = 4096) -> SpectralEstimate:
    """Brute-force spectral norm for small n: dense sphere sampling, then local refinement.

    The value is certified as a lower bound by its witness; it is the maximum
    up to the resolution of the sampling.
    """
    n, m = a.dim, a.order
    if n > ORACLE_MAX_N:
        logger.warning(f"spectral oracle on n={n}: sampling cost grows as grid^n, recommended n <= {ORACLE_MAX_N}")

    candidates = np.concatenate([_sphere_grid(n, grid), _initial_vectors(n, restarts, seed).T], axis=0)
    scores = np.concatenate([
        np.abs(_values_at(a.values, candidates[start:start + chunk].T))
        for start in range(0, len(candidates), chunk)
    ])
    order = np.argsort(-scores, kind='stable')[:refine]

    def objective(v, sign):
        norm = np.linalg.norm(v)
        u = v / norm
        grad_u = m * _contract(a.values, u[:, None], m - 1)[:, 0]
        value = float(u @ grad_u) / m
        grad_v = (grad_u - (u @ grad_u) * u) / norm
        return -sign * value, -sign * grad_v

    best_value, best_witness, best_success = -1.0, candidates[order[0]], False
    for index in order:
        start = candidates[index]
        sign = 1.0 if _values_at(a.values, start[:, None])[0] >= 0 else -1.0
        result = minimize(objective, start, args=(sign,), jac=True, method='BFGS',
                          options={'gtol': 1e-12, 'maxiter': 1000})
        refined = result.x / np.linalg.norm(result.x)
        value = abs(float(_values_at(a.values, refined[:, None])[0]))
        if value < scores[index]:
            refined, value = start, float(scores[index])
        if value > best_value:
            best_value, best_witness, best_success = value, refined, bool(result.success)

    value, witness = _finish(a, best_value, best_witness)
    logger.debug(f"spectral oracle: value={value:.10g} from {len(candidates)} samples")
    return SpectralEstimate(value=value, witness=witness, restarts=restarts, method='oracle',
                            converged=best_success)


def spectral_upper_heuristic(a: SymmetricTensor, safety: float = 1.25, restarts: int = HEURISTIC_RESTARTS,
                             max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL, seed: int = 0) -> float:
    """safety x (best power-iteration value). Heuristic, not a proof of an upper bound."""
    if safety < 1.0:
        raise ParameterError(f"safety factor must be at least 1, got {safety}")
    return safety * power_iteration(a, restarts=restarts, max_iters=max_iters, tol=tol, seed=seed).value


def nuclear_upper_from_decomposition(atoms: Sequence[RankOneAtom], order: int,
                                     dim: int = None) -> Tuple[float, SymmetricTensor]:
    """(sum |weights|, reconstructed tensor) for unit-vector atoms"""
    if order < 2:
        raise ParameterError(f"Order must be at least 2, got {order}")
    if not atoms:
        if dim is None:
            raise ParameterError("An empty decomposition needs an explicit dim")
        return 0.0, zeros_tensor(dim, order)

    total = 0.0
    values = None
    for weight, vector in atoms:
        vector = np.asarray(vector, dtype=np.float64)
        require_unit(vector)
        term = float(weight) * outer_power(vector, order).values
        values = term if values is None else values + term
        total += abs(float(weight))
    return total, SymmetricTensor(values, verify=False)


def nuclear_lower_from_witness(a: SymmetricTensor, w: SymmetricTensor, restarts: int = 128,
                               tol: float = 1e-6, seed: int = 0) -> float:
    """<w, a>, a lower bound on ||a||_* when ||w|| <= 1 (checked by power iteration)"""
    estimate = power_iteration(w, restarts=restarts, seed=seed)
    if estimate.value > 1.0 + tol:
        raise ParameterError(f"Witness spectral norm {estimate.value:.8g} exceeds 1")
    return inner_product(w, a)


def agreement_decomposition(partition: Partition, m: int) -> List[RankOneAtom]:
    """Atoms (k^{m/2}, y^(i)/sqrt(k)) reconstructing the agreement tensor"""
    k = partition.k
    return [RankOneAtom(k ** (m / 2.0), y / np.sqrt(k)) for y in partition.membership_vectors()]


def nuclear_bounds(a: SymmetricTensor, atoms: Sequence[RankOneAtom], witness: SymmetricTensor,
                   restarts: int = 128, seed: int = 0) -> NuclearBounds:
    """Bracket ||a||_* between a witness lower bound and a decomposition upper bound"""
    upper, reconstructed = nuclear_upper_from_decomposition(atoms, a.order, dim=a.dim)
    if not reconstructed.allclose(a, atol=1e-8):
        raise ParameterError("Decomposition does not reconstruct the tensor")
    lower = nuclear_lower_from_witness(a, witness, restarts=restarts, seed=seed)
    if lower > upper + 1e-8:
        raise NumericalError(f"Nuclear lower bound {lower:.10g} exceeds upper bound {upper:.10g}")
    return NuclearBounds(lower=lower, upper=upper, lower_witness=witness, upper_decomposition=list(atoms))
