"""Pydantic request/response models for the service."""
from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import ExperimentConfig

__all__ = [
    "ExperimentConfig",
    "RunRequest",
    "RunResponse",
    "CheckModel",
    "HealthResponse",
    "SpecInfo",
    "SpecListResponse",
    "ExperimentInfo",
    "RhoSigmaRequest",
    "RhoSigmaResponse",
    "MertensRequest",
    "MertensResponse",
    "T0Request",
    "T0Response",
    "ErrorBody",
]


class RunRequest(BaseModel):
    config: ExperimentConfig
    strict: bool = False


class CheckModel(BaseModel):
    name: str
    tag: str = ""
    status: str
    value: object | None = None
    bound: object | None = None
    envelope: float | None = None
    exceeded: bool | None = None
    note: str = ""


class RunResponse(BaseModel):
    manifest: dict
    checks: list[CheckModel]
    results: dict
    files: list[str]
    exit_code: int


class HealthResponse(BaseModel):
    status: str
    version: str


class SpecInfo(BaseModel):
    name: str
    bound_k: int
    real: bool | None
    kind: str


class SpecListResponse(BaseModel):
    forms: list[str]
    examples: list[SpecInfo]


class ExperimentInfo(BaseModel):
    name: str
    description: str


class RhoSigmaRequest(BaseModel):
    k: int = Field(ge=1)
    alpha: float = Field(gt=0, le=1)


class RhoSigmaResponse(BaseModel):
    rho: float
    sigma: float


class MertensRequest(BaseModel):
    spec_name: str
    x: int = Field(ge=2, le=10**8)


class MertensResponse(BaseModel):
    spec_name: str
    x: int
    value: float


class T0Request(BaseModel):
    spec_name: str
    X: int = Field(ge=16, le=10**7)
    window: tuple[float, float] | None = None
    coarse_step: float | None = Field(default=None, gt=0)


class T0Response(BaseModel):
    spec_name: str
    X: int
    t0: float
    d2_at_t0: float
    reason: str
    boundary_attained: bool
    final_step: float
    ties: list[float]


class ErrorBody(BaseModel):
    kind: str  # usage | verification | accuracy | internal
    message: str
