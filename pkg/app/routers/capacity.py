"""Capacity router."""

from fastapi import APIRouter

from app.models.results import Estimate, HcapRequest, HcapResponse
from app.routers.common import loewner_errors
from app.services.capacity import hcap_chain, hcap_mc

router = APIRouter(prefix="/capacity", tags=["Capacity"])


@router.post("/chain", response_model=HcapResponse)
def chain_capacity(data: HcapRequest):
    """Half-plane capacity from the conformal chain."""
    with loewner_errors():
        est = hcap_chain(data.multislit.to_domain())
    return HcapResponse(chain=Estimate.from_domain(est))


@router.post("/montecarlo", response_model=HcapResponse)
def montecarlo_capacity(data: HcapRequest):
    """Chain capacity cross-checked by the Brownian-motion estimator."""
    with loewner_errors():
        m = data.multislit.to_domain()
        chain = hcap_chain(m)
        mc = hcap_mc(m, data.walkers, data.seed)
    return HcapResponse(chain=Estimate.from_domain(chain), montecarlo=Estimate.from_domain(mc))
