"""Solvers for maximize <A, Y> over agreement tensors of r equal clusters of size k.

Three methods share one result type:

- exhaustive: enumerates every partition (exact, small n only),
- local-search: best-improvement vertex swaps from random starts,
- conditional-gradient: Frank-Wolfe on the relaxation with the nuclear-ball
  constraint kept by construction and quadratic penalties for the affine and
  box constraints. A heuristic with no optimality claim.

Ties are broken lexicographically on vertex indices everywhere.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from models import FeasibilityReport, Partition, RankOneAtom, SolveResult, SymmetricTensor
from schemas.configs import SolverConfig
from services.planted_model import agreement_tensor
from services.spectral_nuclear import agreement_decomposition, nuclear_upper_from_decomposition, power_iteration
from services.tensor_core import inner_product, outer_power
from utils.errors import BudgetExceededError, DimensionError, NumericalError, ParameterError
from utils.helpers import count_equal_partitions, derive_seed, make_rng, presence_matrix

logger = logging.getLogger(__name__)

TIE_TOL = 1e-9


def _check_sizes(a: SymmetricTensor, r: int, k: int) -> None:
    if r < 1 or k < 1:
        raise ParameterError(f"r and k must be positive, got r={r}, k={k}")
    if r * k > a.dim:
        raise ParameterError(f"r*k = {r * k} exceeds the number of vertices n = {a.dim}")


class _ClusterScores:
    """Memoized <A, y^{(x)m}> for vertex sets"""

    def __init__(self, a: SymmetricTensor):
        self.values = a.values
        self.order = a.order
        self._cache: Dict[Tuple[int, ...], float] = {}

    def __call__(self, members: Sequence[int]) -> float:
        key = tuple(sorted(members))
        score = self._cache.get(key)
        if score is None:
            score = float(self.values[np.ix_(*[list(key)] * self.order)].sum())
            self._cache[key] = score
        return score

    def total(self, clusters: Sequence[Sequence[int]]) -> float:
        return sum(self(c) for c in clusters)


def solver_feasibility(y: SymmetricTensor, atoms: Sequence[RankOneAtom], r: int, k: int) -> FeasibilityReport:
    """Feasibility of Y for the relaxation, recomputed from Y and its atoms"""
    m = y.order
    upper, _ = nuclear_upper_from_decomposition(atoms, m, dim=y.dim)
    target = float(r * k ** m)
    total = float(y.values.sum())
    box = max(0.0, -float(y.values.min()), float(y.values.max()) - 1.0)
    return FeasibilityReport(
        nuclear_upper=upper,
        nuclear_radius=r * k ** (m / 2.0),
        affine_sum=total,
        affine_target=target,
        affine_violation=abs(total - target),
        box_violation=box,
    )


def _integral_result(a: SymmetricTensor, partition: Partition, method: str, converged: bool = True,
                     iterations: int = 0, history: Optional[List[float]] = None) -> SolveResult:
    y = agreement_tensor(partition, a.order)
    return SolveResult(
        y=y,
        partition=partition,
        objective=inner_product(a, y),
        feasibility=solver_feasibility(y, agreement_decomposition(partition, a.order), partition.r, partition.k),
        method=method,
        converged=converged,
        iterations=iterations,
        history=history or [],
    )


def _equal_partitions(n: int, r: int, k: int) -> Iterator[List[Tuple[int, ...]]]:
    """Every set of r disjoint k-subsets of range(n), clusters ordered by smallest vertex"""
    def split(pool: Tuple[int, ...], remaining: int):
        if remaining == 0:
            yield []
            return
        first, rest = pool[0], pool[1:]
        for others in combinations(rest, k - 1):
            cluster = (first,) + others
            left = tuple(v for v in rest if v not in others)
            for tail in split(left, remaining - 1):
                yield [cluster] + tail

    for chosen in combinations(range(n), r * k):
        yield from split(chosen, r)


def _assignment(clusters: Sequence[Sequence[int]], n: int) -> Tuple[int, ...]:
    labels = [-1] * n
    for label, members in enumerate(clusters):
        for v in members:
            labels[v] = label
    return tuple(labels)


def exhaustive_search(a: SymmetricTensor, r: int, k: int, config: Optional[SolverConfig] = None) -> SolveResult:
    """Exact maximizer of <A, Y> over agreement tensors of equal-size partitions"""
    config = config or SolverConfig()
    _check_sizes(a, r, k)
    n = a.dim
    count = count_equal_partitions(n, r, k)
    if count > config.budget:
        raise BudgetExceededError(f"{count} partitions of {n} vertices into {r} clusters of size {k} exceed the "
                                  f"budget of {config.budget}; use method 'local-search'")

    logger.info(f"Exhaustive search over {count} partitions (n={n}, r={r}, k={k})")
    scores = _ClusterScores(a)
    best_value, best = -np.inf, None
    for clusters in _equal_partitions(n, r, k):
        value = scores.total(clusters)
        if value > best_value + TIE_TOL:
            best_value, best = value, clusters
        elif value >= best_value - TIE_TOL and _assignment(clusters, n) < _assignment(best, n):
            best = clusters

    partition = Partition.from_clusters(best, n)
    return _integral_result(a, partition, 'exhaustive', iterations=count)


def _random_clusters(n: int, r: int, k: int, seed: int) -> List[List[int]]:
    order = make_rng(seed).permutation(n)
    return [sorted(order[label * k:(label + 1) * k].tolist()) for label in range(r)]


def _swap_search(a: SymmetricTensor, r: int, k: int, config: SolverConfig, restart: int,
                 scores: _ClusterScores) -> Tuple[float, List[List[int]], List[float], bool, int]:
    """Best-improvement swaps from one random start"""
    n = a.dim
    clusters = _random_clusters(n, r, k, derive_seed(config.seed, restart))
    labels = np.full(n, -1, dtype=np.int64)
    for label, members in enumerate(clusters):
        labels[members] = label
    current = scores.total(clusters)
    history = [current]

    for step in range(1, config.max_iters + 1):
        best_gain, best_move = TIE_TOL * max(1.0, abs(current)), None
        for u in range(n):
            for v in range(u + 1, n):
                lu, lv = labels[u], labels[v]
                if lu == lv:
                    continue
                gain = 0.0
                if lu >= 0:
                    moved = [v if x == u else x for x in clusters[lu]]
                    gain += scores(moved) - scores(clusters[lu])
                if lv >= 0:
                    moved = [u if x == v else x for x in clusters[lv]]
                    gain += scores(moved) - scores(clusters[lv])
                if gain > best_gain:
                    best_gain, best_move = gain, (u, v)
        if best_move is None:
            return current, clusters, history, True, step - 1

        u, v = best_move
        lu, lv = labels[u], labels[v]
        if lu >= 0:
            clusters[lu] = sorted(v if x == u else x for x in clusters[lu])
        if lv >= 0:
            clusters[lv] = sorted(u if x == v else x for x in clusters[lv])
        labels[u], labels[v] = lv, lu
        updated = scores.total(clusters)
        if updated < current - TIE_TOL * max(1.0, abs(current)):
            raise NumericalError(f"Swap ({u}, {v}) decreased the objective from {current} to {updated}")
        logger.debug(f"restart {restart} step {step}: swap ({u}, {v}) objective {updated:.10g}")
        current = updated
        history.append(current)

    return current, clusters, history, False, config.max_iters


def local_search(a: SymmetricTensor, r: int, k: int, config: Optional[SolverConfig] = None,
                 threads: int = 1) -> SolveResult:
    """Swap-based ascent over integral partitions, best over config.restarts random starts.

    A swap exchanges two vertices with different labels; one of them may be
    unclustered. Restarts use seeds derived from config.seed and merge by
    objective, ties going to the lower restart index.
    """
    config = config or SolverConfig()
    _check_sizes(a, r, k)
    scores = _ClusterScores(a)

    def run(restart: int):
        return _swap_search(a, r, k, config, restart, scores)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, range(config.restarts)))
    else:
        outcomes = [run(restart) for restart in range(config.restarts)]

    winner = 0
    for index, outcome in enumerate(outcomes):
        if outcome[0] > outcomes[winner][0] + TIE_TOL * max(1.0, abs(outcomes[winner][0])):
            winner = index
    value, clusters, history, converged, steps = outcomes[winner]
    logger.info(f"Local search: best objective {value:.10g} from restart {winner} of {config.restarts}")
    partition = Partition.from_clusters(clusters, a.dim)
    return _integral_result(a, partition, 'local-search', converged=converged, iterations=steps, history=history)


def _penalized(a_values: np.ndarray, target: float, affine_weight: float, box_weight: float):
    """Objective <A, Y> - affine/2 (<1, Y> - target)^2 - box/2 ||box excess||^2 and its gradient"""
    def value(y: np.ndarray) -> float:
        excess = np.minimum(y, 0.0) + np.maximum(y - 1.0, 0.0)
        drift = y.sum() - target
        return float(np.vdot(a_values, y) - 0.5 * affine_weight * drift ** 2
                     - 0.5 * box_weight * np.vdot(excess, excess))

    def gradient(y: np.ndarray) -> np.ndarray:
        excess = np.minimum(y, 0.0) + np.maximum(y - 1.0, 0.0)
        return a_values - affine_weight * (y.sum() - target) - box_weight * excess

    return value, gradient


def _improves(candidate: np.ndarray, incumbent: Optional[np.ndarray], value) -> bool:
    """Whether candidate beats incumbent, both scored with the same penalty weights"""
    return incumbent is None or value(candidate) > value(incumbent)


def conditional_gradient(a: SymmetricTensor, r: int, k: int, config: Optional[SolverConfig] = None) -> SolveResult:
    """Frank-Wolfe over the nuclear ball of radius r k^{m/2}.

    The iterate is kept as an atom list whose weights are a sub-convex
    combination of +-R u^{(x)m}, so sum |weights| <= R at every iteration.
    The linear oracle is power iteration on the penalized gradient.
    The returned iterate is the best one seen, each comparison made under
    the penalty weights of the current iteration.
    """
    config = config or SolverConfig()
    _check_sizes(a, r, k)
    n, m = a.dim, a.order
    radius = r * k ** (m / 2.0)
    target = float(r * k ** m)
    affine_weight, box_weight = config.penalty_affine, config.penalty_box

    y = np.zeros(a.shape)
    atoms: List[RankOneAtom] = []
    best_y, best_atoms = None, []
    history: List[float] = []
    nuclear_history: List[float] = []
    converged = False
    iteration = 0

    for iteration in range(1, config.max_iters + 1):
        if iteration > 1 and (iteration - 1) % config.penalty_interval == 0:
            affine_weight = min(affine_weight * config.penalty_growth, config.penalty_cap)
            box_weight = min(box_weight * config.penalty_growth, config.penalty_cap)
        if not (np.isfinite(affine_weight) and np.isfinite(box_weight)):
            raise NumericalError("Penalty weight is not finite")
        value, gradient = _penalized(a.values, target, affine_weight, box_weight)

        grad = gradient(y)
        oracle = power_iteration(SymmetricTensor(grad, verify=False), restarts=config.oracle_restarts,
                                 seed=derive_seed(config.seed, iteration))
        u = oracle.witness
        atom = outer_power(u, m).values
        sign = 1.0 if np.vdot(grad, atom) >= 0 else -1.0
        vertex = sign * radius * atom
        direction = vertex - y
        gap = float(np.vdot(grad, direction))

        line = minimize_scalar(lambda gamma: -value(y + gamma * direction), bounds=(0.0, 1.0), method='bounded',
                               options={'xatol': 1e-10})
        gamma = float(line.x)
        if value(y + gamma * direction) < value(y):
            gamma = 0.0
        y = y + gamma * direction
        atoms = [RankOneAtom(w * (1.0 - gamma), v) for w, v in atoms]
        if gamma > 0.0:
            atoms.append(RankOneAtom(gamma * sign * radius, u))
        if not np.all(np.isfinite(y)):
            raise NumericalError("Non-finite iterate in conditional gradient")

        current = value(y)
        history.append(current)
        nuclear_history.append(sum(abs(w) for w, _ in atoms))
        if _improves(y, best_y, value):
            best_y, best_atoms = y.copy(), list(atoms)
        logger.debug(f"conditional gradient {iteration}: objective {current:.8g} gap {gap:.3g} step {gamma:.3g}")

        violation = abs(y.sum() - target) / target
        if gap <= config.tolerance * max(1.0, abs(current)) and violation <= config.tolerance:
            converged = True
            best_y, best_atoms = y.copy(), list(atoms)
            break

    if not converged:
        logger.info(f"Conditional gradient stopped after {iteration} iterations without converging")

    iterate = SymmetricTensor(best_y, verify=False)
    partition = round_to_partition(iterate, r, k)
    return SolveResult(
        y=iterate,
        partition=partition,
        objective=inner_product(a, iterate),
        feasibility=solver_feasibility(iterate, best_atoms, r, k),
        method='conditional-gradient',
        converged=converged,
        iterations=iteration,
        history=history,
        nuclear_history=nuclear_history,
    )


def pair_scores(y: SymmetricTensor) -> np.ndarray:
    """(n, n) average of Y over the index tuples containing both vertices"""
    presence = presence_matrix(y.dim, y.order)
    totals = (presence * y.flat[:, None]).T @ presence
    counts = presence.T @ presence
    return totals / counts


def round_to_partition(y: SymmetricTensor, r: int, k: int) -> Partition:
    """Grow r clusters of size k greedily from the highest-scoring pairs"""
    _check_sizes(y, r, k)
    n = y.dim
    scores = pair_scores(y)
    available = np.ones(n, dtype=bool)
    clusters = []
    for _ in range(r):
        if k == 1:
            diagonal = np.where(available, np.diag(scores), -np.inf)
            members = [int(np.argmax(diagonal))]
        else:
            mask = np.triu(np.outer(available, available), 1)
            masked = np.where(mask, scores, -np.inf)
            # argmax returns the first maximum in row-major order, the lexicographically smallest pair
            i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
            members = [int(i), int(j)]
        available[members] = False
        while len(members) < k:
            gains = np.where(available, scores[:, members].sum(axis=1), -np.inf)
            best = int(np.argmax(gains))
            members.append(best)
            available[best] = False
        clusters.append(sorted(members))
    return Partition.from_clusters(clusters, n)


def exactness(found: Partition, truth: Partition) -> bool:
    """True iff both partitions have the same clusters up to relabelling"""
    if found.n != truth.n:
        raise DimensionError(f"Partitions cover {found.n} and {truth.n} vertices")
    return found.canonical() == truth.canonical()


class PartitionSolver:
    """Dispatches on config.method and scores the result against a known truth"""

    def __init__(self, config: Optional[SolverConfig] = None, threads: int = 1):
        self.config = config or SolverConfig()
        self.threads = threads

    def solve(self, a: SymmetricTensor, r: int, k: int, truth: Optional[Partition] = None,
              method: Optional[str] = None) -> SolveResult:
        method = method or self.config.method
        logger.info(f"Solving with {method} (n={a.dim}, m={a.order}, r={r}, k={k})")
        if method == 'exhaustive':
            result = exhaustive_search(a, r, k, self.config)
        elif method == 'local-search':
            result = local_search(a, r, k, self.config, threads=self.threads)
        elif method == 'conditional-gradient':
            result = conditional_gradient(a, r, k, self.config)
        else:
            raise ParameterError(f"Unknown solver method '{method}'")

        if truth is not None:
            result.exact = exactness(result.partition, truth)
        logger.info(f"{method}: objective {result.objective:.10g}"
                    + ('' if result.exact is None else f", exact={result.exact}"))
        return result
