from dataclasses import dataclass, field, InitVar
from typing import Any, Dict, FrozenSet, List, NamedTuple, Optional, Tuple

import numpy as np

from schemas.model_params import ModelParams
from utils.errors import DimensionError, InvariantError, ParameterError, SymmetryError
from utils.validators import is_symmetric_array, validate_cubical


@dataclass(frozen=True, eq=False)
class SymmetricTensor:
    """Dense m-order cubical tensor stored as an (n,)*m float64 array.

    Flattening is C order, i.e. lexicographic with the last index fastest.
    ``symmetric`` records whether the tensor is known to be symmetric; it is
    verified on construction unless ``verify`` is False. Intermediate results
    of mode products are stored with ``symmetric=False``.
    """
    values: np.ndarray
    symmetric: bool = True
    verify: InitVar[bool] = True

    def __post_init__(self, verify: bool):
        values = np.array(self.values, dtype=np.float64)
        validate_cubical(values)
        if verify and self.symmetric and not is_symmetric_array(values):
            raise SymmetryError("Tensor is not symmetric")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def entry(self, index) -> float:
        index = tuple(int(i) for i in index)
        if len(index) != self.order:
            raise DimensionError(f"Index tuple has length {len(index)}, tensor order is {self.order}")
        for i in index:
            if not 0 <= i < self.dim:
                raise DimensionError(f"Index {i} out of range [0, {self.dim})")
        return float(self.values[index])

    def is_symmetric(self) -> bool:
        return is_symmetric_array(self.values)

    def allclose(self, other: 'SymmetricTensor', atol: float = 1e-9) -> bool:
        return self.shape == other.shape and bool(np.allclose(self.values, other.values, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"SymmetricTensor(order={self.order}, dim={self.dim}, symmetric={self.symmetric})"


@dataclass(frozen=True, eq=False)
class ModeProjector:
    """Orthogonal projector acting on one mode (symmetric, idempotent n x n)"""
    matrix: np.ndarray
    verify: InitVar[bool] = True

    def __post_init__(self, verify: bool):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"Projector must be square, got shape {matrix.shape}")
        if verify:
            if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-10):
                raise ParameterError("Projector is not symmetric")
            if not np.allclose(matrix @ matrix, matrix, rtol=0.0, atol=1e-10):
                raise ParameterError("Projector is not idempotent")
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return int(round(float(np.trace(self.matrix))))

    def complement(self) -> 'ModeProjector':
        return ModeProjector(np.eye(self.dim) - self.matrix, verify=False)

    @classmethod
    def identity(cls, n: int) -> 'ModeProjector':
        return cls(np.eye(n), verify=False)

    @classmethod
    def zero(cls, n: int) -> 'ModeProjector':
        return cls(np.zeros((n, n)), verify=False)

    def __str__(self) -> str:
        return f"ModeProjector(dim={self.dim}, rank={self.rank})\n{np.array2string(self.matrix, precision=4)}"


class RankOneAtom(NamedTuple):
    """weight * vector^{(x)m} with a unit vector"""
    weight: float
    vector: np.ndarray


@dataclass
class SpectralEstimate:
    """Best value of |<A, u^{(x)m}>| found, with the unit vector achieving it"""
    value: float
    witness: np.ndarray
    restarts: int
    method: str
    converged: bool
    converged_restarts: int = 0
    iterations: int = 0


@dataclass
class NuclearBounds:
    """lower <= ||A||_* <= upper, each with its certificate"""
    lower: float
    upper: float
    lower_witness: SymmetricTensor
    upper_decomposition: List[RankOneAtom]

    def is_tight(self, tol: float = 1e-8) -> bool:
        return self.upper - self.lower <= tol


@dataclass(frozen=True, eq=False)
class Partition:
    """Cluster assignment of n vertices: label in [0, r) or -1 for unclustered"""
    assignment: np.ndarray
    r: Optional[int] = None

    def __post_init__(self):
        assignment = np.array(self.assignment, dtype=np.int64).reshape(-1)
        if assignment.size == 0:
            raise DimensionError("Partition needs at least one vertex")
        r = self.r if self.r is not None else int(assignment.max()) + 1
        if r < 1:
            raise ParameterError("Partition needs at least one cluster")
        if assignment.min() < -1 or assignment.max() >= r:
            raise ParameterError(f"Cluster labels must lie in [-1, {r})")
        sizes = np.bincount(assignment[assignment >= 0], minlength=r)
        if np.any(sizes == 0):
            raise ParameterError("Every cluster label must have at least one member")
        assignment.setflags(write=False)
        object.__setattr__(self, 'assignment', assignment)
        object.__setattr__(self, 'r', r)

    @classmethod
    def from_clusters(cls, clusters, n: int) -> 'Partition':
        assignment = np.full(n, -1, dtype=np.int64)
        for label, members in enumerate(clusters):
            for v in members:
                if assignment[v] != -1:
                    raise InvariantError(f"Vertex {v} appears in two clusters")
                assignment[v] = label
        return cls(assignment, r=len(clusters))

    @property
    def n(self) -> int:
        return self.assignment.size

    def sizes(self) -> List[int]:
        return np.bincount(self.assignment[self.assignment >= 0], minlength=self.r).tolist()

    @property
    def k(self) -> int:
        sizes = self.sizes()
        if len(set(sizes)) != 1:
            raise ParameterError(f"Clusters have unequal sizes {sizes}")
        return sizes[0]

    def membership_vectors(self) -> np.ndarray:
        """(r, n) 0/1 matrix whose rows are the membership vectors y^(i)"""
        vectors = np.zeros((self.r, self.n))
        clustered = self.assignment >= 0
        vectors[self.assignment[clustered], np.flatnonzero(clustered)] = 1.0
        return vectors

    def clusters(self) -> List[Tuple[int, ...]]:
        return [tuple(np.flatnonzero(self.assignment == label).tolist()) for label in range(self.r)]

    def unassigned(self) -> Tuple[int, ...]:
        return tuple(np.flatnonzero(self.assignment == -1).tolist())

    def canonical(self) -> FrozenSet[FrozenSet[int]]:
        """Label-free form: the set of clusters"""
        return frozenset(frozenset(c) for c in self.clusters())

    def canonical_assignment(self) -> Tuple[int, ...]:
        """Assignment relabelled so clusters are numbered by their smallest vertex"""
        relabel = {}
        out = []
        for label in self.assignment.tolist():
            if label < 0:
                out.append(-1)
                continue
            if label not in relabel:
                relabel[label] = len(relabel)
            out.append(relabel[label])
        return tuple(out)

    def neighborhood(self, i: int) -> Tuple[int, ...]:
        """N(i): vertices sharing i's cluster, i included; empty if i is unclustered"""
        if not 0 <= i < self.n:
            raise DimensionError(f"Vertex {i} out of range [0, {self.n})")
        label = self.assignment[i]
        if label < 0:
            return ()
        return tuple(np.flatnonzero(self.assignment == label).tolist())

    def __repr__(self) -> str:
        return f"Partition(n={self.n}, r={self.r}, sizes={self.sizes()})"


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """One sampled hypergraph with its ground truth"""
    params: ModelParams
    truth: Partition
    adjacency: SymmetricTensor
    agreement: SymmetricTensor
    seed: int


@dataclass
class SubCheck:
    """One named verdict of the certificate"""
    name: str
    passed: bool
    value: float
    threshold: Optional[float] = None
    detail: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': self.passed, 'value': self.value,
                'threshold': self.threshold, 'detail': self.detail}


@dataclass
class ProjectedNoise:
    """||Q_{Y*}(lambda Z)||_inf computed exactly, next to its symmetric bound"""
    exact: float
    abar_linf: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.exact <= self.bound + 1e-9


@dataclass
class CertificateReport:
    """All quantities of the optimality argument for one instance"""
    lam: float
    z_spectral_bound: float
    lemma1_rhs: float
    linf_projected: float
    margin: float
    passes: bool
    spectral_method: str
    sub_checks: List[SubCheck] = field(default_factory=list)
    lambda_mode: str = 'measured'
    noise_spectral: float = 0.0
    noise_spectral_upper: float = 0.0
    abar_linf: float = 0.0
    projected_bound: float = 0.0
    seed: Optional[int] = None

    def failed_checks(self) -> List[str]:
        return [c.name for c in self.sub_checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda': self.lam,
            'lambda_mode': self.lambda_mode,
            'z_spectral_bound': self.z_spectral_bound,
            'lemma1_rhs': self.lemma1_rhs,
            'noise_spectral': self.noise_spectral,
            'noise_spectral_upper': self.noise_spectral_upper,
            'linf_projected': self.linf_projected,
            'abar_linf': self.abar_linf,
            'projected_bound': self.projected_bound,
            'margin': self.margin,
            'passes': self.passes,
            'spectral_method': self.spectral_method,
            'seed': self.seed,
            'sub_checks': [c.to_dict() for c in self.sub_checks],
        }


@dataclass
class Lemma1Report:
    """Empirical check of the spectral concentration bound"""
    c: float
    trials: int
    norms: List[float]
    rhs_unit: float
    bound: float
    pass_fraction: float
    empirical_c: float


@dataclass
class TailReport:
    """Monte Carlo frequency of the fiber-sum tail event"""
    threshold: float
    frequency: float
    bound: float
    samples: int
    exceedances: int
    sigma: float
    max_sum: float

    @property
    def within_bound(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.sigma


@dataclass
class ThresholdReport:
    """Both sides of the explicit recovery condition and its side condition"""
    lhs: float
    rhs: float
    ratio: float
    side_condition: bool
    predicate: bool


@dataclass
class FeasibilityReport:
    """Constraint check of a candidate Y, recomputed from Y and its atoms"""
    nuclear_upper: float
    nuclear_radius: float
    affine_sum: float
    affine_target: float
    affine_violation: float
    box_violation: float

    @property
    def nuclear_ok(self) -> bool:
        return self.nuclear_upper <= self.nuclear_radius + 1e-9

    def to_dict(self) -> Dict[str, Any]:
        return {
            'nuclear_upper': self.nuclear_upper,
            'nuclear_radius': self.nuclear_radius,
            'nuclear_ok': self.nuclear_ok,
            'affine_sum': self.affine_sum,
            'affine_target': self.affine_target,
            'affine_violation': self.affine_violation,
            'box_violation': self.box_violation,
        }


@dataclass
class SolveResult:
    """Outcome of one solver run"""
    y: SymmetricTensor
    partition: Partition
    objective: float
    feasibility: FeasibilityReport
    method: str
    converged: bool = True
    iterations: int = 0
    exact: Optional[bool] = None
    history: List[float] = field(default_factory=list)
    # sum of |atom weights| after each conditional-gradient step
    nuclear_history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method,
            'objective': self.objective,
            'partition': self.partition.assignment.tolist(),
            'exact': self.exact,
            'converged': self.converged,
            'iterations': self.iterations,
            'feasibility': self.feasibility.to_dict(),
        }


@dataclass
class TrialRecord:
    """Outcome of one Monte Carlo trial of an experiment cell"""
    cell_id: int
    trial: int
    seed: int
    cell: Dict[str, Any]
    status: str = 'ok'
    reason: str = ''
    cert_pass: Optional[bool] = None
    margin: Optional[float] = None
    lam: Optional[float] = None
    z_spectral_bound: Optional[float] = None
    linf_projected: Optional[float] = None
    spectral_method: Optional[str] = None
    exact: Dict[str, bool] = field(default_factory=dict)
    lemma1_norm: Optional[float] = None
    lemma1_pass: Optional[bool] = None
    tail_exceedances: Optional[int] = None
    tail_samples: Optional[int] = None
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.status == 'ok'


@dataclass
class PhaseCell:
    """One grid cell of a phase report: theory next to the observed success rate"""
    cell_id: int
    n: int
    m: int
    r: int
    k: int
    p: float
    q: float
    trials: int
    success_rate: float
    standard_error: float
    constant: float
    lhs: float = 0.0
    rhs: float = 0.0
    predicate: bool = False
    flagged: bool = False

    @property
    def gap(self) -> float:
        return self.p - self.q
