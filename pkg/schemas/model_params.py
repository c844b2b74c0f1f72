from enum import Enum
from typing import Any, Dict, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from utils.errors import ParameterError

SchemaT = TypeVar('SchemaT', bound=BaseModel)


class DiagonalPolicy(str, Enum):
    """How entries with a repeated index are drawn"""
    BERNOULLI = 'bernoulli'
    ZEROED = 'zeroed'


class ModelParams(BaseModel):
    """Parameters of a planted model M(n, m, r, k, p, q)"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1, description='number of vertices')
    m: int = Field(ge=2, description='tensor order')
    r: int = Field(ge=1, description='number of clusters')
    k: int = Field(ge=1, description='cluster size')
    p: float = Field(ge=0.0, le=1.0, description='edge probability inside a cluster')
    q: float = Field(ge=0.0, le=1.0, description='edge probability elsewhere')
    diagonal_policy: DiagonalPolicy = DiagonalPolicy.BERNOULLI

    @model_validator(mode='after')
    def check_model(self):
        if self.r * self.k > self.n:
            raise ValueError(f"r*k = {self.r * self.k} exceeds n = {self.n}")
        if not self.q < self.p:
            raise ValueError(f"need q < p, got p={self.p}, q={self.q}")
        return self

    @property
    def clustered(self) -> int:
        return self.r * self.k

    def describe(self) -> str:
        return (f"M(n={self.n}, m={self.m}, r={self.r}, k={self.k}, p={self.p:g}, q={self.q:g}, "
                f"diagonal={self.diagonal_policy.value})")


def validated(schema: Type[SchemaT], data: Dict[str, Any]) -> SchemaT:
    """Build a schema object, turning validation failures into ParameterError"""
    try:
        return schema(**data)
    except ValidationError as e:
        messages = '; '.join(
            f"{'.'.join(str(part) for part in err['loc']) or schema.__name__}: {err['msg']}"
            for err in e.errors()
        )
        raise ParameterError(messages) from e
