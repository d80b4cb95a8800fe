"""
Loewner Toolkit - FastAPI Application

HTTP front end for the multi-slit chordal Loewner toolkit.
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.config import configure_logging, get_settings
from app.routers import capacity, driving, fitting

log = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan manager."""
    configure_logging()
    log.info("Loewner toolkit API starting up")
    yield
    log.info("Loewner toolkit API shutting down")


app = FastAPI(
    title="Loewner Toolkit API",
    description="""
    Numerical toolkit for chordal Loewner evolution of several slits.

    ## Features
    - Half-plane capacity of multi-slits (conformal chain and Monte Carlo)
    - Driving functions of single slits and slits traced from driving data
    - Constant Loewner weights and driving functions fitted to multi-slits
    """,
    version="1.0.0",
    lifespan=lifespan
)

# CORS configuration
app.add_middleware(
    CORSMiddleware,
    allow_origins=[
        "http://localhost:3000",
        "http://127.0.0.1:3000",
    ],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Register routers
app.include_router(capacity.router)
app.include_router(driving.router)
app.include_router(fitting.router)


@app.get("/")
async def root():
    """Health check endpoint."""
    return {
        "status": "healthy",
        "service": "Loewner Toolkit API",
        "version": "1.0.0"
    }


@app.get("/health")
async def health_check():
    """Detailed health check."""
    settings = get_settings()

    return {
        "status": "healthy",
        "threads": settings.threads,
        "default_grid": settings.default_grid,
        "default_levels": settings.default_levels,
        "tilted_steps": settings.tilted_steps
    }
