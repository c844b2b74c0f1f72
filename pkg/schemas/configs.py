from pathlib import Path
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from schemas.model_params import DiagonalPolicy

SolverMethod = Literal['exhaustive', 'local-search', 'conditional-gradient']
LambdaMode = Literal['measured', 'constant']
Task = Literal['certify', 'solve', 'lemma1', 'bernstein']


class SolverConfig(BaseModel):
    """Settings shared by the partition solvers"""
    model_config = ConfigDict(frozen=True)

    method: SolverMethod = 'local-search'
    max_iters: int = Field(default=500, gt=0)
    restarts: int = Field(default=16, gt=0)
    tolerance: float = Field(default=1e-6, gt=0.0)
    # conditional-gradient penalties: weight *= growth every interval iterations, up to cap
    penalty_affine: float = Field(default=1.0, gt=0.0)
    penalty_box: float = Field(default=1.0, gt=0.0)
    penalty_growth: float = Field(default=2.0, ge=1.0)
    penalty_interval: int = Field(default=50, gt=0)
    penalty_cap: float = Field(default=1e6, gt=0.0)
    oracle_restarts: int = Field(default=8, gt=0)
    budget: int = Field(default=1_000_000, gt=0)
    seed: int = Field(default=0, ge=0)


class CertifyOptions(BaseModel):
    """Settings of the optimality certificate"""
    model_config = ConfigDict(frozen=True)

    lambda_mode: LambdaMode = 'measured'
    constant_c: float = Field(default=1.0, gt=0.0)
    safety: float = Field(default=1.25, ge=1.0)
    restarts: int = Field(default=64, gt=0)
    heuristic_restarts: int = Field(default=256, gt=0)
    max_iters: int = Field(default=500, gt=0)
    tol: float = Field(default=1e-10, gt=0.0)
    oracle_max_n: int = Field(default=5, ge=0)
    oracle_grid: int = Field(default=9, ge=3)
    witness_tol: float = Field(default=1e-6, gt=0.0)
    seed: int = Field(default=0, ge=0)


class ExperimentGrid(BaseModel):
    """A Monte Carlo parameter grid.

    Cells are the cartesian product of the value lists. When ``gap`` is
    given, p is derived as q + gap and the ``p`` list is ignored. An empty
    ``n`` list (or ``auto_n``) sets n = r*k for each cell.
    """
    n: List[int] = Field(default_factory=list)
    m: List[int] = Field(default_factory=lambda: [3])
    r: List[int] = Field(default_factory=lambda: [2])
    k: List[int] = Field(default_factory=lambda: [3])
    p: List[float] = Field(default_factory=lambda: [0.9])
    q: List[float] = Field(default_factory=lambda: [0.1])
    gap: List[float] = Field(default_factory=list)
    auto_n: bool = False
    diagonal_policy: DiagonalPolicy = DiagonalPolicy.BERNOULLI

    trials: int = Field(default=10, ge=1)
    base_seed: int = Field(default=0, ge=0)
    tasks: List[Task] = Field(default_factory=lambda: ['certify'])
    methods: List[SolverMethod] = Field(default_factory=lambda: ['exhaustive'])
    solver: SolverConfig = Field(default_factory=SolverConfig)
    certify: CertifyOptions = Field(default_factory=CertifyOptions)
    lemma1_c: float = Field(default=3.0, gt=0.0)
    trial_timeout: float = Field(default=30.0, gt=0.0)
    output: Path = Path('results.csv')

    @field_validator('m', 'r', 'k', 'q')
    @classmethod
    def not_empty(cls, v):
        if not v:
            raise ValueError('value list must not be empty')
        return v

    @model_validator(mode='after')
    def check_p_source(self):
        if not self.gap and not self.p:
            raise ValueError('either p or gap values are required')
        return self
