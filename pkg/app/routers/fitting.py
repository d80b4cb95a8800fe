"""Fitting router."""

from fastapi import APIRouter

from app.models.results import FitRequest, FitResponse, FitSummary
from app.routers.common import loewner_errors
from app.services.fitter import agreement, fit

router = APIRouter(prefix="/fit", tags=["Fitting"])


@router.post("", response_model=FitSummary, response_model_by_alias=True)
def fit_multislit(data: FitRequest):
    """Loewner weights and driving functions of a multi-slit."""
    with loewner_errors():
        results = fit(data.multislit.to_domain(), data.method.value, data.levels, data.tol, data.grid)
        summary = FitSummary(fits=[FitResponse.from_domain(r) for r in results])
        if len(results) == 2:
            summary.agreement = agreement(*results)
    return summary
