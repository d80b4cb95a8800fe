"""Run configuration shared by the CLI and the HTTP endpoints."""

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from app.config import get_settings


class Command(str, Enum):
    """CLI subcommands."""
    HCAP = "hcap"
    DRIVE = "drive"
    TRACE = "trace"
    FIT = "fit"
    VERIFY = "verify"


class Method(str, Enum):
    """Fitting method."""
    BANGBANG = "bangbang"
    SHOOTING = "shooting"
    BOTH = "both"


class RunConfig(BaseModel):
    """One command invocation; unset numerical fields fall back to settings."""
    command: Command
    input: Optional[Path] = None
    out: Optional[Path] = None
    grid: int = Field(default_factory=lambda: get_settings().default_grid)
    levels: int = Field(default_factory=lambda: get_settings().default_levels)
    tol: float = Field(default_factory=lambda: get_settings().default_tol)
    seed: int = Field(default_factory=lambda: get_settings().default_seed)
    mc_samples: int = 0  # 0 skips the Monte Carlo estimate
    method: Method = Method.BANGBANG
    threads: Optional[int] = None

    @field_validator("tol")
    @classmethod
    def positive_tol(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("tol must be positive")
        return v

    @field_validator("grid")
    @classmethod
    def fine_grid(cls, v: int) -> int:
        if v < 16:
            raise ValueError("grid must have at least 16 samples")
        return v

    @field_validator("levels")
    @classmethod
    def level_range(cls, v: int) -> int:
        if not 1 <= v <= 12:
            raise ValueError("levels must lie in [1, 12]")
        return v

    @field_validator("mc_samples")
    @classmethod
    def enough_walkers(cls, v: int) -> int:
        if v and v < 1000:
            raise ValueError("mc_samples must be 0 or at least 1000")
        return v
