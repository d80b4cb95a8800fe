"""Driving functions from slits.

A single slit is peeled from its base with the growth engine; the tip images
after each absorbed micro-arc are the driving values at Loewner time
t = capacity/2. For several slits grown along a given Loewner
parametrization every grid time gets its own engine that grows each slit to
its prescribed own capacity and reads off the tip images.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.config import get_settings
from app.errors import IncompatibleInputsError, InvalidCapacityError, RefineNeededError
from app.services.forward import DrivingRecord
from app.services.geometry import SampledFunction, SlitCurve, WeightVector, densify
from app.services.growth import GrowthEngine, solo_capacities
from app.services.slitmaps import ConformalChain
from app.utils.parallel import parallel_map

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CapacityParametrization:
    """A slit together with the hcap of its initial sub-polyline at each vertex."""

    curve: SlitCurve
    cap_of_vertex: np.ndarray

    def __post_init__(self):
        caps = np.asarray(self.cap_of_vertex, dtype=float).ravel()
        if len(caps) != len(self.curve):
            raise IncompatibleInputsError("one capacity per vertex is required")
        if caps[0] != 0.0:
            raise InvalidCapacityError(f"capacity at the base must be 0, got {caps[0]!r}")
        if np.any(np.diff(caps) <= 0):
            raise InvalidCapacityError("capacity must increase strictly along the slit")
        caps.setflags(write=False)
        object.__setattr__(self, "cap_of_vertex", caps)

    @property
    def hcap(self) -> float:
        return float(self.cap_of_vertex[-1])

    @property
    def T(self) -> float:
        return 0.5 * self.hcap

    def _locate(self, x: float) -> tuple[int, float]:
        caps = self.cap_of_vertex
        x = min(max(float(x), 0.0), self.hcap)
        k = int(np.clip(np.searchsorted(caps, x, side="left"), 1, len(caps) - 1))
        frac = (x - caps[k - 1]) / (caps[k] - caps[k - 1])
        return k, frac

    def point_at(self, x: float) -> complex:
        """Point of the slit where the initial piece has capacity ``x``."""
        k, frac = self._locate(x)
        p = self.curve.points
        return complex(p[k - 1] + frac * (p[k] - p[k - 1]))

    def subslit(self, x: float) -> SlitCurve:
        """Initial piece of the slit with capacity ``x`` (> 0)."""
        if not x > 0:
            raise InvalidCapacityError(f"a sub-slit needs positive capacity, got {x!r}")
        k, frac = self._locate(x)
        p = self.curve.points
        head = p[:k]
        if frac > 0:
            head = np.append(head, p[k - 1] + frac * (p[k] - p[k - 1]))
        return SlitCurve(head)

    def scaled(self, r: float, c: float) -> "CapacityParametrization":
        return CapacityParametrization(SlitCurve(r * self.curve.points + c), self.cap_of_vertex * r**2)


@dataclass(frozen=True, eq=False)
class LoewnerParametrization:
    """Own-capacity progress x_j(t) of each slit on a uniform grid over [0, T].

    Each x_j runs along ``curves[j]``; the joint capacity of the generated
    portions at time t is 2t.
    """

    curves: tuple[CapacityParametrization, ...]
    progress: tuple[SampledFunction, ...]
    weights: Optional[WeightVector] = None

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))
        object.__setattr__(self, "progress", tuple(self.progress))
        if len(self.curves) != len(self.progress) or not self.curves:
            raise IncompatibleInputsError("one progress function per slit is required")
        first = self.progress[0]
        if first.t0 != 0.0 or any((x.t1, len(x.values)) != (first.t1, len(first.values)) for x in self.progress):
            raise IncompatibleInputsError("progress functions must share one grid starting at 0")
        for j, (c, x) in enumerate(zip(self.curves, self.progress)):
            v = x.values
            slack = 1e-9 * max(c.hcap, 1e-300)
            if abs(v[0]) > slack or np.any(np.diff(v) < -slack) or v[-1] > c.hcap + slack:
                raise InvalidCapacityError(
                    f"progress of slit {j} must rise from 0 and stay within the slit",
                    {"slit": j, "start": float(v[0]), "end": float(v[-1]), "hcap": c.hcap},
                )

    @property
    def n(self) -> int:
        return len(self.curves)

    @property
    def T(self) -> float:
        return self.progress[0].t1

    @property
    def times(self) -> np.ndarray:
        return self.progress[0].times

    @property
    def values(self) -> np.ndarray:
        return np.vstack([x.values for x in self.progress])

    def at(self, t: float) -> np.ndarray:
        return np.array([float(x(t)) for x in self.progress])

    def engine(self) -> GrowthEngine:
        """Fresh growth engine over the curves with own capacities attached."""
        return GrowthEngine(
            [c.curve.points for c in self.curves],
            own_caps=[c.cap_of_vertex for c in self.curves],
        )

    def grown(self, t: float) -> GrowthEngine:
        """Engine after every slit has been grown to x_j(t)."""
        engine = self.engine()
        for j, x in enumerate(self.at(t)):
            if x > 0:
                engine.advance_to(j, x)
        return engine

    def scaled(self, r: float, c: float) -> "LoewnerParametrization":
        """The parametrization of r·Γ + c (times and capacities scale by r²)."""
        curves = tuple(cp.scaled(r, c) for cp in self.curves)
        progress = tuple(SampledFunction(0.0, x.t1 * r**2, x.values * r**2) for x in self.progress)
        return LoewnerParametrization(curves, progress, self.weights)


def peel_points(s: SlitCurve, points: Optional[int] = None) -> np.ndarray:
    """Vertices used for peeling: the input vertices plus evenly spaced fill-in."""
    target = points or get_settings().peel_points
    if len(s) >= target:
        return s.points.copy()
    return densify(s.points, s.length / (target - 1))


def capacity_parametrization(s: SlitCurve, points: Optional[int] = None) -> tuple[CapacityParametrization, GrowthEngine]:
    """Peel ``s`` alone and attach the capacity of every initial sub-polyline."""
    caps, engine = solo_capacities(peel_points(s, points))
    pts = engine.points[0]
    keep = np.concatenate([[True], np.diff(caps) > 0])
    if not keep.all():
        log.warning("dropping %d vertices that carry no capacity", int((~keep).sum()))
    return CapacityParametrization(SlitCurve(pts[keep]), caps[keep]), engine


def _history(engine: GrowthEngine) -> tuple[np.ndarray, np.ndarray]:
    caps = np.array([h[0] for h in engine.history])
    tips = np.vstack([h[1] for h in engine.history])
    return 0.5 * caps, tips


def resample_history(times: np.ndarray, tips: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Driving values on ``grid`` by linear interpolation of the recorded tips."""
    return np.vstack([np.interp(grid, times, tips[:, j]) for j in range(tips.shape[1])])


def drive_single(
    s: SlitCurve, grid_size: Optional[int] = None, points: Optional[int] = None
) -> tuple[DrivingRecord, ConformalChain, CapacityParametrization]:
    """Driving function of one slit on a uniform grid over [0, hcap(s)/2]."""
    grid_size = grid_size or get_settings().default_grid
    param, engine = capacity_parametrization(s, points)
    times, tips = _history(engine)
    grid = np.linspace(0.0, param.T, grid_size)
    U = resample_history(times, tips, grid)
    U[0, 0] = s.base
    record = DrivingRecord.from_arrays(param.T, U, [1.0])
    chain = engine.chain()
    log.info("peeled slit at %.6g: %d steps, T=%.9g", s.base, len(chain), param.T)
    return record, chain, param


def refinement_sweep(
    s: SlitCurve, resolutions: Sequence[int] = (64, 128, 256, 512), grid_size: Optional[int] = None
) -> list[float]:
    """Sup distance between driving functions peeled at consecutive resolutions.

    Polyline input perturbs U by an amount tied to the peel spacing; the sweep
    reports it empirically.
    """
    records = [drive_single(s, grid_size, points)[0] for points in resolutions]
    gaps = [float(np.abs(a.U - b.U).max()) for a, b in zip(records, records[1:])]
    log.info("refinement sweep at %s: %s", list(resolutions), np.round(gaps, 9).tolist())
    return gaps


def drive_multi(p: LoewnerParametrization, weights: Optional[WeightVector] = None) -> DrivingRecord:
    """U_j(t) = g_t(γ_j(t)) for the given Loewner parametrization.

    The weights of the returned record default to the parametrization's.
    """
    weights = weights or p.weights
    if weights is None:
        raise IncompatibleInputsError("drive_multi needs the weights of the parametrization")
    times = p.times
    scale = max(np.sqrt(p.T), 1e-300)

    def tips_at(t: float) -> np.ndarray:
        engine = p.grown(t)
        tips = engine.tips.copy()
        gaps = np.diff(np.sort(tips))
        if len(gaps) and t > 0 and gaps.min() < 1e-12 * scale:
            raise RefineNeededError(
                "two driving values collapsed",
                {"t": float(t), "tips": tips.tolist()},
            )
        return tips

    U = np.column_stack(parallel_map(tips_at, times))
    return DrivingRecord.from_arrays(p.T, U, weights)
