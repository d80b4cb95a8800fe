"""Driving function router."""

from fastapi import APIRouter

from app.models.results import DrivingRequest, DrivingResponse, TraceRequest
from app.models.slit import MultiSlitPayload
from app.routers.common import loewner_errors
from app.services.forward import trace_hulls
from app.services.inverse import drive_single

router = APIRouter(prefix="/driving", tags=["Driving"])


@router.post("/single", response_model=DrivingResponse)
def single_slit(data: DrivingRequest):
    """Driving function of one slit."""
    with loewner_errors():
        record, _, _ = drive_single(data.slit.to_domain(), data.grid)
    return DrivingResponse.from_domain(record)


@router.post("/trace", response_model=MultiSlitPayload)
def trace(data: TraceRequest):
    """Slits generated by the given driving functions and weights."""
    with loewner_errors():
        hulls = trace_hulls(data.to_domain())
    return MultiSlitPayload.from_domain(hulls)
