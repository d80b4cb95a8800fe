"""Request and response models for capacity, driving and fitting results."""

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.config import get_settings
from app.models.run import Method
from app.models.slit import MultiSlitPayload, SlitPayload
from app.services.capacity import HcapEstimate
from app.services.fitter import FitResult
from app.services.forward import DrivingRecord
from app.services.geometry import WeightVector


class HcapRequest(BaseModel):
    """Payload to estimate the half-plane capacity of a multi-slit."""
    multislit: MultiSlitPayload
    walkers: Optional[int] = Field(default=None, ge=1000)
    seed: Optional[int] = None


class Estimate(BaseModel):
    """One capacity estimate."""
    value: float
    method: str
    stderr: float = 0.0
    diagnostics: Dict[str, Any] = {}

    class Config:
        from_attributes = True

    @classmethod
    def from_domain(cls, est: HcapEstimate) -> "Estimate":
        return cls(value=est.value, method=est.method, stderr=est.stderr, diagnostics=est.diagnostics)


class HcapResponse(BaseModel):
    """Chain capacity with an optional Monte Carlo cross-check."""
    chain: Estimate
    montecarlo: Optional[Estimate] = None


class DrivingRequest(BaseModel):
    """Payload to compute the driving function of one slit."""
    slit: SlitPayload
    grid: int = Field(default_factory=lambda: get_settings().default_grid, ge=16)


class DrivingResponse(BaseModel):
    """Driving functions sampled on a uniform grid over [0, T]."""
    T: float
    times: List[float]
    U: List[List[float]]
    weights: List[List[float]]
    interpolation: str = "linear"

    @classmethod
    def from_domain(cls, d: DrivingRecord) -> "DrivingResponse":
        return cls(
            T=d.T,
            times=d.times.tolist(),
            U=d.U.tolist(),
            weights=d.weight_rows.tolist(),
            interpolation=d.interpolation,
        )


class TraceRequest(BaseModel):
    """Driving functions to trace back into slits.

    ``weights`` is either one constant vector or one row per sample.
    """
    T: float = Field(gt=0)
    U: List[List[float]]
    weights: Optional[List[float]] = None
    weight_rows: Optional[List[List[float]]] = None
    interpolation: str = "linear"

    @field_validator("U")
    @classmethod
    def rectangular(cls, v: List[List[float]]) -> List[List[float]]:
        if not v or len({len(row) for row in v}) != 1 or len(v[0]) < 2:
            raise ValueError("U must be n rows of equal length with at least two samples")
        return v

    def to_domain(self) -> DrivingRecord:
        U = np.asarray(self.U, dtype=float)
        if self.weight_rows is not None:
            weights = np.asarray(self.weight_rows, dtype=float)
        elif self.weights is not None:
            weights = WeightVector(np.asarray(self.weights, dtype=float))
        else:
            weights = WeightVector(np.full(len(U), 1.0 / len(U)))
        return DrivingRecord.from_arrays(self.T, U, weights, self.interpolation)


class FitRequest(BaseModel):
    """Payload to fit Loewner weights and driving functions to a multi-slit."""
    multislit: MultiSlitPayload
    method: Method = Method.BANGBANG
    levels: Optional[int] = Field(default=None, ge=1, le=12)
    tol: Optional[float] = Field(default=None, gt=0)
    grid: Optional[int] = Field(default=None, ge=16)


class FitResponse(BaseModel):
    """Fitted weights, driving functions and diagnostics."""
    model_config = ConfigDict(populate_by_name=True)

    lam: List[float] = Field(alias="lambda")
    T: float
    grid: List[float]
    U: List[List[float]]
    progress: List[List[float]]
    method: str
    experimental: bool = False
    residuals: List[float]
    diagnostics: Dict[str, Any] = {}

    @classmethod
    def from_domain(cls, r: FitResult) -> "FitResponse":
        return cls(
            lam=r.lam.weights.tolist(),
            T=r.driving.T,
            grid=r.driving.times.tolist(),
            U=r.driving.U.tolist(),
            progress=r.parametrization.values.tolist(),
            method=r.method,
            experimental=r.experimental,
            residuals=np.asarray(r.residuals).tolist(),
            diagnostics=r.diagnostics,
        )


class FitSummary(BaseModel):
    """All fits of one request; ``agreement`` is set when both methods ran."""
    fits: List[FitResponse]
    agreement: Optional[Dict[str, Any]] = None


class CheckResult(BaseModel):
    """One property check: passes when ``value`` meets ``threshold``."""
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: Optional[str] = None


class VerifyReport(BaseModel):
    """Property-suite report over the bundled fixtures."""
    checks: List[CheckResult]
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {"checks": [c.model_dump(mode="json") for c in self.checks], "passed": self.passed, "seed": self.seed}
