"""Slits, multi-slits and sampled functions.

Points in the closed upper half-plane are stored as complex numbers x + iy.
All domain values are immutable after construction: arrays are copied and
flagged read-only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import shapely

from app.errors import InvalidScaleError, InvalidWeightsError

log = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SlitCurve:
    """Polyline from a real base point into the upper half-plane."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(np.asarray(self.points, dtype=complex).ravel()))

    @classmethod
    def from_vertices(cls, vertices: Iterable[Sequence[float]]) -> "SlitCurve":
        pts = [complex(float(x), float(y)) for x, y in vertices]
        return cls(np.array(pts, dtype=complex))

    @property
    def vertices(self) -> np.ndarray:
        return np.column_stack([self.points.real, self.points.imag])

    @property
    def base(self) -> float:
        return float(self.points[0].real)

    @property
    def tip(self) -> complex:
        return complex(self.points[-1])

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.abs(np.diff(self.points))

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def diameter(self) -> float:
        p = self.points
        return float(np.abs(p[:, None] - p[None, :]).max()) if len(p) > 1 else 0.0

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class MultiSlit:
    """Finite family of slits; ``separation`` is computed on construction."""

    slits: tuple[SlitCurve, ...]
    separation: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "slits", tuple(self.slits))
        object.__setattr__(self, "separation", _min_pairwise_distance(self.slits))

    @classmethod
    def of(cls, *slits: SlitCurve) -> "MultiSlit":
        return cls(tuple(slits))

    @property
    def n(self) -> int:
        return len(self.slits)

    @property
    def bases(self) -> np.ndarray:
        return np.array([s.base for s in self.slits])

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([s.points for s in self.slits])

    @property
    def diameter(self) -> float:
        p = self.points
        return float(np.abs(p[:, None] - p[None, :]).max()) if len(p) > 1 else 0.0

    @property
    def top(self) -> float:
        return float(self.points.imag.max())

    @property
    def centre(self) -> float:
        p = self.points.real
        return 0.5 * float(p.min() + p.max())


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Real function sampled on a uniform grid over [t0, t1]."""

    t0: float
    t1: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if len(values) < 2:
            raise ValueError("a sampled function needs at least two samples")
        if not self.t1 > self.t0:
            raise ValueError(f"empty interval [{self.t0}, {self.t1}]")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, len(self.values))

    @property
    def spacing(self) -> float:
        return (self.t1 - self.t0) / (len(self.values) - 1)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Constant weights λ_k in [0, 1] summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise InvalidWeightsError(f"weights outside [0, 1]: {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidWeightsError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def completing(cls, leading: Sequence[float]) -> "WeightVector":
        """Weights whose last entry is one minus the sum of ``leading``."""
        leading = [float(v) for v in leading]
        return cls(np.array(leading + [1.0 - sum(leading)]))

    @property
    def n(self) -> int:
        return len(self.weights)

    def __getitem__(self, k: int) -> float:
        return float(self.weights[k])


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


# ---------------------------------------------------------------------------
# shapely adapters


def _xy(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=complex).ravel()
    return np.column_stack([p.real, p.imag])


def as_geometry(points: np.ndarray) -> shapely.Geometry:
    """LineString through the points; a single point stays a Point."""
    xy = _xy(points)
    return shapely.Point(xy[0]) if len(xy) == 1 else shapely.LineString(xy)


def hull_geometry(m: MultiSlit) -> shapely.Geometry:
    return shapely.MultiLineString([_xy(s.points) for s in m.slits])


def nearest_on_hull(points: np.ndarray, hull: shapely.Geometry) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to ``hull`` and the nearest hull point, shaped like ``points``."""
    points = np.asarray(points, dtype=complex)
    flat = points.ravel()
    lines = shapely.shortest_line(shapely.points(flat.real, flat.imag), hull)
    ends = shapely.get_coordinates(lines).reshape(-1, 2, 2)[:, 1]
    nearest = ends[:, 0] + 1j * ends[:, 1]
    return shapely.length(lines).reshape(points.shape), nearest.reshape(points.shape)


def polyline_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Minimum distance between two polylines (0 if they meet)."""
    return float(as_geometry(p).distance(as_geometry(q)))


def _min_pairwise_distance(slits: Sequence[SlitCurve]) -> float:
    best = np.inf
    for i in range(len(slits)):
        for j in range(i + 1, len(slits)):
            best = min(best, polyline_distance(slits[i].points, slits[j].points))
    return float(best)


def _self_intersections(points: np.ndarray) -> list[tuple[int, int]]:
    """Pairs of segments that meet other than at a shared vertex."""
    if len(points) < 3 or as_geometry(points).is_simple:
        return []
    xy = _xy(points)
    segs = shapely.linestrings(np.stack([xy[:-1], xy[1:]], axis=1))
    cross = shapely.intersects(segs[:, None], segs[None, :])
    hits = [(int(i), int(j)) for i, j in np.argwhere(np.triu(cross, k=2))]
    # adjacent segments share a vertex; only a fold-back overlaps
    fold = shapely.length(shapely.intersection(segs[:-1], segs[1:])) > 0
    hits.extend((int(i), int(i) + 1) for i in np.flatnonzero(fold))
    return sorted(hits)


# ---------------------------------------------------------------------------
# operations


def validate_multislit(m: MultiSlit) -> ValidationReport:
    """Check every slit and pairwise invariant, collecting all violations."""
    violations: list[str] = []
    for j, s in enumerate(m.slits):
        p = s.points
        if len(p) < 2:
            violations.append(f"slit {j}: fewer than 2 vertices")
            continue
        for k in np.flatnonzero(np.diff(p) == 0):
            violations.append(f"slit {j}: vertices {k} and {k + 1} coincide")
        if p[0].imag != 0.0:
            violations.append(f"slit {j}: base point off ℝ (y={p[0].imag!r})")
        for k in np.flatnonzero(p[1:].imag <= 0.0):
            violations.append(f"slit {j}: vertex {k + 1} not in the upper half-plane")
        for a, b in _self_intersections(p):
            violations.append(f"slit {j}: segments {a} and {b} intersect")
    for i in range(m.n):
        for j in range(i + 1, m.n):
            si, sj = m.slits[i], m.slits[j]
            if len(si) and len(sj) and si.points[0] == sj.points[0]:
                violations.append(f"slits {i} and {j}: base points coincide")
            if polyline_distance(si.points, sj.points) <= 0.0:
                violations.append(f"slits {i} and {j}: closures intersect")
    return ValidationReport(tuple(violations))


def affine_map(m: MultiSlit, r: float, c: float) -> MultiSlit:
    """Replace every vertex z by r·z + c."""
    if not r > 0:
        raise InvalidScaleError(f"scale must be positive, got {r!r}")
    return MultiSlit(tuple(SlitCurve(r * s.points + c) for s in m.slits))


def resample_by_arclength(s: SlitCurve, n_points: int) -> SlitCurve:
    """Vertices equally spaced in arclength; base and tip kept exactly."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    line = as_geometry(s.points)
    at = shapely.line_interpolate_point(line, np.linspace(0.0, line.length, n_points))
    xy = shapely.get_coordinates(at)
    out = xy[:, 0] + 1j * xy[:, 1]
    out[0], out[-1] = s.points[0], s.points[-1]
    return SlitCurve(out)


def densify(points: np.ndarray, spacing: float) -> np.ndarray:
    """Insert points so that consecutive samples are at most ``spacing`` apart; vertices are kept."""
    points = np.asarray(points, dtype=complex)
    if len(points) < 2:
        return points.copy()
    xy = shapely.get_coordinates(shapely.segmentize(as_geometry(points), spacing))
    out = xy[:, 0] + 1j * xy[:, 1]
    out[0], out[-1] = points[0], points[-1]
    return out


def hausdorff_distance(p: np.ndarray, q: np.ndarray, samples: int = 100) -> float:
    """Hausdorff distance between two polylines, each segment split into ``samples`` pieces."""
    return float(shapely.hausdorff_distance(as_geometry(p), as_geometry(q), densify=1.0 / samples))


def multislit_hausdorff(a: MultiSlit, b: MultiSlit) -> float:
    """Largest per-slit Hausdorff distance between matching slits."""
    if a.n != b.n:
        return float("inf")
    return max(hausdorff_distance(x.points, y.points) for x, y in zip(a.slits, b.slits))


def vertical_slit(base: float, height: float, points: Optional[int] = None) -> SlitCurve:
    """Segment from ``base`` straight up to ``base + i·height``."""
    k = points or 2
    return SlitCurve(base + 1j * np.linspace(0.0, height, k))


def slit_from_points(points: Iterable[complex]) -> SlitCurve:
    return SlitCurve(np.array(list(points), dtype=complex))
