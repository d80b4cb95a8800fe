"""Configuration settings for the Loewner toolkit."""

import logging
from functools import lru_cache

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Numerical defaults loaded from environment variables (prefix LOEWNER_)."""

    # Discretization
    peel_points: int = 256  # vertices per slit after arclength resampling
    tilted_steps: bool = False
    newton_max_iter: int = 50
    tip_residual: float = 1e-10  # relative to slit diameter

    # Boundary evaluation (relative to hull scale)
    boundary_eps: float = 1e-9
    fd_step: float = 1e-4
    fd_min_step: float = 1e-9

    # Forward solver
    escape_eps: float = 1e-6  # relative to hull scale
    step_safety: float = 0.05
    max_flow_steps: int = 200_000
    trace_substeps: int = 2048

    # Monte Carlo
    mc_walkers: int = 100_000
    mc_block: int = 4096
    mc_hit_eps: float = 1e-4  # fraction of hull diameter
    mc_launch_factor: float = 50.0
    mc_kill_factor: float = 1e3
    mc_max_steps: int = 4000
    mc_richardson: bool = False

    # Fitter
    default_grid: int = 129
    default_levels: int = 8
    default_tol: float = 1e-3
    shooting_rtol: float = 1e-8
    extension_slack: float = 1e-6
    bangbang_palindromic: bool = True  # alternate slit order between dyadic intervals
    multi_levels: int = 6  # bang-bang level for three or more slits
    cfactor_refine: int = 1  # extra halvings of the C-factor lattice spacing

    # Runtime
    threads: int = 4
    default_seed: int = 20240501
    log_level: str = "INFO"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "LOEWNER_"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def configure_logging(level: str | None = None) -> None:
    """Install a single stream handler on the root logger."""
    level = level or get_settings().log_level
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
