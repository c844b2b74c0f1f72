from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

from schemas.configs import CertifyOptions, SolverConfig
from schemas.model_params import ModelParams


class TensorPayload(BaseModel):
    """Nested list of numbers with order m and equal dims n"""
    values: list

    @field_validator('values')
    @classmethod
    def not_empty(cls, v):
        if not v:
            raise ValueError('tensor values must not be empty')
        return v


class GenerateRequest(BaseModel):
    params: Optional[ModelParams] = None
    preset: Optional[str] = None
    seed: int = Field(default=0, ge=0)
    include_tensor: bool = True


class NormsRequest(BaseModel):
    tensor: TensorPayload
    restarts: int = Field(default=64, gt=0)
    seed: int = Field(default=0, ge=0)
    oracle: bool = False


class CertifyRequest(BaseModel):
    """Either a seed to sample from params, or a tensor with its partition"""
    params: Optional[ModelParams] = None
    seed: Optional[int] = Field(default=None, ge=0)
    tensor: Optional[TensorPayload] = None
    partition: Optional[List[int]] = None
    audit: bool = False
    options: CertifyOptions = Field(default_factory=CertifyOptions)


class SolveRequest(BaseModel):
    params: Optional[ModelParams] = None
    seed: Optional[int] = Field(default=None, ge=0)
    tensor: Optional[TensorPayload] = None
    r: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    truth: Optional[List[int]] = None
    config: SolverConfig = Field(default_factory=SolverConfig)


class ThresholdRequest(BaseModel):
    n: int = Field(ge=1)
    m: int = Field(ge=2)
    k: int = Field(ge=1)
    p: float = Field(ge=0.0, le=1.0)
    q: float = Field(ge=0.0, le=1.0)
    c: float = Field(default=1.0, gt=0.0)
