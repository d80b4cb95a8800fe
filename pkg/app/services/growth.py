"""Incremental zipper over several slits at once.

The engine keeps the current image of every unabsorbed vertex of every slit
under the map-out built so far. Growing slit j absorbs its next micro-arc by
one elementary step anchored under the arc's mapped end point, and maps every
other pending vertex, every other slit's tip and any watched real points
along. A capacity budget can end in the middle of a micro-arc; the arc is
then absorbed partially, splitting it linearly in capacity.

Everything downstream (single-slit driving functions, multi-slit driving
functions, bang-bang growth and the C-factor) is a particular schedule of
calls into this engine.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from app.config import get_settings
from app.errors import ExtensionError, FitFailureError
from app.services.slitmaps import ConformalChain, ElementaryStep, Foothold, tilted_capacity

log = logging.getLogger(__name__)

# tilts outside this window fall back to vertical steps
_TILT_WINDOW = (0.02, 0.98)


class GrowthEngine:
    """Mutable zipper state for a family of polylines sharing one map-out."""

    def __init__(
        self,
        slits: Sequence[np.ndarray],
        own_caps: Optional[Sequence[np.ndarray]] = None,
        tilted: Optional[bool] = None,
    ):
        settings = get_settings()
        self.tilted = settings.tilted_steps if tilted is None else tilted
        self.points = [np.asarray(p, dtype=complex) for p in slits]
        self.images = [p.copy() for p in self.points]
        self.own_caps = [np.asarray(c, dtype=float) for c in own_caps] if own_caps is not None else None
        n = len(self.points)
        self.next = [1] * n
        self.phi = np.zeros(n)
        self.tips = np.array([p[0].real for p in self.points])
        self.steps: list[ElementaryStep] = []
        self.owners: list[int] = []
        self.footholds: list[Foothold] = []
        self._started: set[int] = set()
        self.capacity = 0.0
        self.watch_x = np.zeros(0)
        self.watch_d = np.zeros(0)
        # cutoffs follow each slit's own arcs, never the spread between slits
        self._arc_eps = [1e-15 * np.abs(np.diff(p, prepend=p[:1])) ** 2 for p in self.points]
        self._slit_eps = [float(e[1:].min()) if len(e) > 1 else 0.0 for e in self._arc_eps]
        self._tip_tol = [settings.tip_residual * (float(np.abs(p - p[0]).max()) or 1.0) for p in self.points]
        self.fallbacks = 0
        self.history: list[tuple[float, np.ndarray, np.ndarray]] = []
        self._record()

    # -- state -------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.points)

    def exhausted(self, j: int) -> bool:
        return self.next[j] >= len(self.points[j])

    def progress(self) -> np.ndarray:
        """Own-capacity progress of each slit (requires ``own_caps``)."""
        out = np.full(self.n, np.nan)
        if self.own_caps is None:
            return out
        for j, caps in enumerate(self.own_caps):
            k = self.next[j]
            if k >= len(caps):
                out[j] = caps[-1]
            else:
                out[j] = caps[k - 1] + self.phi[j] * (caps[k] - caps[k - 1])
        return out

    def chain(self) -> ConformalChain:
        return ConformalChain(tuple(self.steps), tuple(self.footholds))

    def watch(self, x: float) -> int:
        """Track a real point (and the derivative of the map at it) from now on."""
        self.watch_x = np.append(self.watch_x, float(x))
        self.watch_d = np.append(self.watch_d, 1.0)
        return len(self.watch_x) - 1

    def _record(self):
        self.history.append((self.capacity, self.tips.copy(), self.progress()))

    # -- micro-steps ---------------------------------------------------------

    def _tilt_of(self, j: int, p: complex) -> Optional[float]:
        if not self.tilted:
            return None
        v = p - self.tips[j]
        tilt = float(np.angle(v) / np.pi)
        if _TILT_WINDOW[0] < tilt < _TILT_WINDOW[1]:
            return tilt
        return None

    def micro_capacity(self, j: int) -> float:
        """Capacity needed to absorb the rest of slit j's current micro-arc."""
        p = self.images[j][self.next[j]]
        tilt = self._tilt_of(j, p)
        if tilt is None:
            return 0.5 * p.imag**2
        return tilted_capacity(abs(p - self.tips[j]), tilt)

    def _make_step(self, j: int, p: complex, dcap: float, vertical: bool) -> ElementaryStep:
        tilt = None if vertical else self._tilt_of(j, p)
        if tilt is None:
            return ElementaryStep(float(p.real), float(dcap))
        return ElementaryStep(float(self.tips[j]), float(dcap), tilt)

    def _mapped(self, step: ElementaryStep, j: int, complete: bool):
        k = self.next[j]
        new_images = []
        for i, imgs in enumerate(self.images):
            lo = self.next[i] + (1 if (i == j and complete) else 0)
            new = imgs.copy()
            if lo < len(imgs):
                new[lo:] = step.forward(imgs[lo:])
            new_images.append(new)
        others = np.array([i != j for i in range(self.n)])
        tips = self.tips.copy()
        if others.any():
            tips[others] = step.forward(tips[others] + 0j).real
        tips[j] = step.tip_image
        wx, wd = self.watch_x, self.watch_d
        if len(wx):
            wd = wd * step.derivative(wx + 0j).real
            wx = step.forward(wx + 0j).real
        if complete and not step.vertical:
            residual = abs(complex(step.forward(np.array([self.images[j][k]]))[0]) - step.tip_image)
            if residual > self._tip_tol[j]:
                raise FitFailureError(
                    f"tip of slit {j} missed its anchor at vertex {k}",
                    {"slit": j, "vertex": k, "residual": residual},
                )
        return new_images, tips, wx, wd

    def _absorb(self, j: int, dcap: float, complete: bool, full: float):
        k = self.next[j]
        p = self.images[j][k]
        try:
            step = self._make_step(j, p, dcap, vertical=False)
            new_images, tips, wx, wd = self._mapped(step, j, complete)
        except FitFailureError as exc:
            self.fallbacks += 1
            log.debug("tilted step fell back to vertical: %s", exc.message)
            full = 0.5 * p.imag**2
            dcap = full if complete else min(dcap, full)
            step = self._make_step(j, p, dcap, vertical=True)
            new_images, tips, wx, wd = self._mapped(step, j, complete)
        if j not in self._started:
            self._started.add(j)
            self.footholds.append(Foothold(j, float(self.points[j][0].real), len(self.steps)))
        self.steps.append(step)
        self.owners.append(j)
        self.images, self.tips, self.watch_x, self.watch_d = new_images, tips, wx, wd
        self.capacity += step.dcap
        if complete:
            self.next[j] += 1
            self.phi[j] = 0.0
        else:
            self.phi[j] += (1.0 - self.phi[j]) * dcap / full
        self._record()
        return step.dcap

    def absorb_next(self, j: int) -> float:
        """Absorb slit j's current micro-arc completely; returns its capacity."""
        if self.exhausted(j):
            raise ExtensionError(f"slit {j} has no vertices left", {"slit": j})
        full = self.micro_capacity(j)
        if full <= self._arc_eps[j][self.next[j]]:
            log.warning("slit %d: vertex %d carries no capacity; skipped", j, self.next[j])
            self.next[j] += 1
            self.phi[j] = 0.0
            return 0.0
        return self._absorb(j, full, True, full)

    def grow(self, j: int, budget: float) -> None:
        """Grow slit j until the joint capacity has increased by ``budget``."""
        remaining = float(budget)
        floor = max(self._slit_eps[j], 1e-13 * remaining)
        while remaining > floor:
            if self.exhausted(j):
                raise ExtensionError(
                    f"slit {j} exhausted with {remaining:.3e} capacity still to place",
                    {"slit": j, "remaining": remaining, "capacity": self.capacity},
                )
            full = self.micro_capacity(j)
            if full <= remaining * (1 + 1e-12):
                remaining -= self.absorb_next(j)
            else:
                self._absorb(j, remaining, False, full)
                remaining = 0.0

    def advance_to(self, j: int, own_target: float) -> None:
        """Grow slit j until its own-capacity progress reaches ``own_target``."""
        caps = self.own_caps[j]
        own_target = min(float(own_target), float(caps[-1]))
        while not self.exhausted(j):
            k = self.next[j]
            if caps[k] <= own_target:
                self.absorb_next(j)
                continue
            span = caps[k] - caps[k - 1]
            frac = (own_target - caps[k - 1]) / span if span > 0 else 0.0
            if frac > self.phi[j] + 1e-14:
                full = self.micro_capacity(j)
                share = (frac - self.phi[j]) / (1.0 - self.phi[j])
                if full > self._arc_eps[j][k]:
                    self._absorb(j, share * full, False, full)
            break


def solo_capacities(points: np.ndarray, tilted: Optional[bool] = None) -> tuple[np.ndarray, GrowthEngine]:
    """Peel one polyline alone; capacity of each initial sub-polyline by vertex."""
    engine = GrowthEngine([points], tilted=tilted)
    caps = np.zeros(len(points))
    for k in range(1, len(points)):
        engine.absorb_next(0)
        caps[k] = engine.capacity
    if engine.fallbacks:
        log.info("%d tilted steps fell back to vertical", engine.fallbacks)
    return caps, engine
