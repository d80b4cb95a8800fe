"""Shared router helpers."""

from contextlib import contextmanager
from typing import Iterator

from fastapi import HTTPException

from app.errors import LoewnerError


@contextmanager
def loewner_errors() -> Iterator[None]:
    """Turn toolkit errors into HTTP errors carrying the diagnostics."""
    try:
        yield
    except LoewnerError as exc:
        raise HTTPException(status_code=exc.status_code, detail=exc.to_dict()) from exc
