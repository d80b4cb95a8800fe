"""Multi-slit payloads."""

from typing import List

from pydantic import BaseModel, field_validator

from app.services.geometry import MultiSlit, SlitCurve


class SlitPayload(BaseModel):
    """One slit as a list of [x, y] vertices, base point first."""
    vertices: List[List[float]]

    @field_validator("vertices")
    @classmethod
    def pairs_only(cls, v: List[List[float]]) -> List[List[float]]:
        for k, pair in enumerate(v):
            if len(pair) != 2:
                raise ValueError(f"vertex {k} must be [x, y], got {len(pair)} numbers")
        return v

    def to_domain(self) -> SlitCurve:
        return SlitCurve.from_vertices(self.vertices)

    @classmethod
    def from_domain(cls, s: SlitCurve) -> "SlitPayload":
        return cls(vertices=s.vertices.tolist())


class MultiSlitPayload(BaseModel):
    """{"slits": [{"vertices": [[x, y], ...]}, ...]}"""
    slits: List[SlitPayload]

    @field_validator("slits")
    @classmethod
    def at_least_one(cls, v: List[SlitPayload]) -> List[SlitPayload]:
        if not v:
            raise ValueError("at least one slit is required")
        return v

    def to_domain(self) -> MultiSlit:
        return MultiSlit(tuple(s.to_domain() for s in self.slits))

    @classmethod
    def from_domain(cls, m: MultiSlit) -> "MultiSlitPayload":
        return cls(slits=[SlitPayload.from_domain(s) for s in m.slits])
