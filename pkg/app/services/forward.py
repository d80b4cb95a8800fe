"""Forward Loewner flow, hull tracing and the Carathéodory proxy.

The multi-slit chordal Loewner equation

    dg/dt = Σ_k 2·λ_k(t) / (g − U_k(t)),   g_0(z) = z,

is integrated per probe point up to time T, so that hcap of the final hull is
2T. Step records whose weight rows are one-hot are solved exactly with
vertical elementary steps; everything else goes through an explicit RK4 with
per-probe step control keyed to the distance to the driving points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from app.config import get_settings
from app.errors import (
    IncompatibleInputsError,
    IntegrationFailureError,
    InvalidWeightsError,
    RefineNeededError,
)
from app.services.geometry import MultiSlit, SampledFunction, SlitCurve, WeightVector
from app.services.slitmaps import ConformalChain, ElementaryStep

log = logging.getLogger(__name__)

INTERPOLATIONS = ("linear", "step")


@dataclass(frozen=True, eq=False)
class DrivingRecord:
    """Driving functions U_j on a shared uniform grid over [0, T] plus weights.

    ``weights`` is either a WeightVector (constant weights) or an array of
    per-sample rows. With ``interpolation="step"`` both U and the weights are
    held at their left sample on each grid cell.
    """

    drivers: tuple[SampledFunction, ...]
    weights: Union[WeightVector, np.ndarray]
    interpolation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "drivers", tuple(self.drivers))
        if not self.drivers:
            raise IncompatibleInputsError("a driving record needs at least one driver")
        first = self.drivers[0]
        for d in self.drivers[1:]:
            if (d.t0, d.t1, len(d.values)) != (first.t0, first.t1, len(first.values)):
                raise IncompatibleInputsError("driving functions must share one grid")
        if first.t0 != 0.0:
            raise IncompatibleInputsError("driving functions must start at t = 0")
        if any(np.isnan(d.values).any() for d in self.drivers):
            raise IncompatibleInputsError("driving functions contain NaN")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        if isinstance(self.weights, WeightVector):
            if self.weights.n != self.n:
                raise IncompatibleInputsError("weight vector length differs from driver count")
        else:
            rows = np.array(self.weights, dtype=float)
            if rows.shape != (len(first.values), self.n):
                raise IncompatibleInputsError(f"weight rows must have shape {(len(first.values), self.n)}")
            if np.any(rows < 0) or np.any(rows > 1) or np.any(np.abs(rows.sum(axis=1) - 1) > 1e-12):
                raise InvalidWeightsError("each weight row must lie in [0, 1] and sum to 1")
            rows.setflags(write=False)
            object.__setattr__(self, "weights", rows)

    @classmethod
    def from_arrays(
        cls,
        T: float,
        values: np.ndarray,
        weights: Union[WeightVector, Sequence[float], np.ndarray],
        interpolation: str = "linear",
    ) -> "DrivingRecord":
        """Build from an (n, samples) array of U values on a uniform grid over [0, T]."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        drivers = tuple(SampledFunction(0.0, float(T), row) for row in values)
        if not isinstance(weights, WeightVector):
            w = np.asarray(weights, dtype=float)
            weights = WeightVector(w) if w.ndim == 1 else w
        return cls(drivers, weights, interpolation)

    @classmethod
    def from_chain(cls, chain: ConformalChain) -> "DrivingRecord":
        """Step record reproducing a vertical chain with equal capacity increments."""
        dcaps = chain.dcaps
        if not len(dcaps) or np.ptp(dcaps) > 1e-9 * dcaps.max():
            raise IncompatibleInputsError("chain steps must share one capacity increment")
        if any(not s.vertical for s in chain.steps):
            raise IncompatibleInputsError("only vertical chains have a step record")
        anchors = chain.anchors
        T = 0.5 * chain.total_hcap
        return cls.from_arrays(T, np.append(anchors, anchors[-1]), [1.0], "step")

    @property
    def n(self) -> int:
        return len(self.drivers)

    @property
    def T(self) -> float:
        return self.drivers[0].t1

    @property
    def times(self) -> np.ndarray:
        return self.drivers[0].times

    @property
    def U(self) -> np.ndarray:
        return np.vstack([d.values for d in self.drivers])

    @property
    def constant_weights(self) -> bool:
        return isinstance(self.weights, WeightVector)

    @property
    def weight_rows(self) -> np.ndarray:
        if self.constant_weights:
            return np.tile(self.weights.weights, (len(self.times), 1))
        return self.weights

    @property
    def one_hot(self) -> bool:
        rows = self.weight_rows
        return bool(np.all((rows == 0) | (rows == 1)))

    @property
    def scale(self) -> float:
        return float(max(np.sqrt(self.T), np.ptp(self.U))) or 1.0

    def _cell(self, t: np.ndarray) -> np.ndarray:
        k = np.floor(np.asarray(t) / self.drivers[0].spacing).astype(int)
        return np.clip(k, 0, len(self.times) - 2)

    def drivers_at(self, t: np.ndarray) -> np.ndarray:
        """U_j(t) as an array of shape (len(t), n)."""
        t = np.atleast_1d(t)
        if self.interpolation == "step":
            return self.U[:, self._cell(t)].T
        return np.column_stack([np.interp(t, self.times, d.values) for d in self.drivers])

    def weights_at(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(t)
        if self.constant_weights:
            return np.tile(self.weights.weights, (len(t), 1))
        if self.interpolation == "step":
            return self.weights[self._cell(t)]
        return np.column_stack([np.interp(t, self.times, col) for col in self.weights.T])

    def with_weights(self, weights, interpolation: Optional[str] = None) -> "DrivingRecord":
        return DrivingRecord(self.drivers, weights, interpolation or self.interpolation)

    def shifted(self, delta: float) -> "DrivingRecord":
        """Every U_j moved by ``delta``."""
        drivers = tuple(SampledFunction(d.t0, d.t1, d.values + delta) for d in self.drivers)
        return DrivingRecord(drivers, self.weights, self.interpolation)


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Probe images at T, escape times and trajectories at the record times."""

    probe_inputs: np.ndarray
    probe_outputs: np.ndarray
    escaped: np.ndarray  # T_z, NaN where the probe survives to T
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trajectories: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=complex))

    @property
    def survived(self) -> np.ndarray:
        return np.isnan(self.escaped)


def far_probes(diameter: float, centre: float = 0.0) -> np.ndarray:
    """32 probes on two open semicircles of radius 2× and 4× the hull diameter."""
    angles = (np.arange(16) + 0.5) * np.pi / 16
    rings = [centre + r * diameter * np.exp(1j * angles) for r in (2.0, 4.0)]
    return np.concatenate(rings)


def oscillating_weights(times: np.ndarray, period: float, duty: float = 0.5) -> np.ndarray:
    """Two-slit bang-bang rows: slit 1 on the first ``duty`` of every period."""
    phase = np.mod(np.asarray(times) / period, 1.0)
    first = (phase < duty - 1e-12).astype(float)
    return np.column_stack([first, 1.0 - first])


# ---------------------------------------------------------------------------
# forward flow


def _rhs(d: DrivingRecord, t: np.ndarray, z: np.ndarray) -> np.ndarray:
    U = d.drivers_at(t)
    lam = d.weights_at(t)
    return np.sum(2.0 * lam / (z[:, None] - U), axis=1)


def _rk4(d: DrivingRecord, t: np.ndarray, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    k1 = _rhs(d, t, z)
    k2 = _rhs(d, t + h / 2, z + h / 2 * k1)
    k3 = _rhs(d, t + h / 2, z + h / 2 * k2)
    k4 = _rhs(d, t + h, z + h * k3)
    return z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _distance(d: DrivingRecord, t: np.ndarray, z: np.ndarray) -> np.ndarray:
    U = d.drivers_at(t)
    active = d.weights_at(t) > 0
    dist = np.where(active, np.abs(z[:, None] - U), np.inf)
    return dist.min(axis=1)


def _solve_exact(d: DrivingRecord, probes: np.ndarray) -> FlowResult:
    """One vertical step per grid cell, anchored at the active driver."""
    times = d.times
    dt = times[1] - times[0]
    rows = d.weight_rows
    U = d.U
    z = probes.astype(complex).copy()
    traj = np.full((len(probes), len(times)), np.nan + 0j)
    traj[:, 0] = z
    escaped = np.full(len(probes), np.nan)
    alive = np.ones(len(probes), dtype=bool)
    for i in range(len(times) - 1):
        j = int(np.argmax(rows[i]))
        step = ElementaryStep(float(U[j, i]), 2.0 * dt)
        hit = alive & step.on_locus(z) & (z.imag > 0)
        if hit.any():
            # the slit tip sits at height 2·sqrt(s) after s units of time
            escaped[hit] = times[i] + (z[hit].imag ** 2) / 4.0
            alive &= ~hit
        z[alive] = step.forward(z[alive])
        traj[alive, i + 1] = z[alive]
    z[~alive] = np.nan
    return FlowResult(probes, z, escaped, times, traj)


def solve_forward(d: DrivingRecord, probes: Sequence[complex]) -> FlowResult:
    """Integrate the Loewner flow from g_0(z) = z to t = T for each probe."""
    settings = get_settings()
    probes = np.asarray(probes, dtype=complex).ravel()
    if np.any(probes.imag < 0):
        raise IncompatibleInputsError("probes must lie in the closed upper half-plane")
    if d.interpolation == "step" and d.one_hot:
        return _solve_exact(d, probes)

    times = d.times
    T = d.T
    eps = settings.escape_eps * d.scale
    # stability: the driving must not jump by more than half the probe clearance per cell
    jump = float(np.abs(np.diff(d.U, axis=1)).max()) if len(times) > 1 else 0.0
    clearance = _distance(d, np.zeros(len(probes)), probes)
    interior = probes.imag > 0
    if interior.any() and jump > 0.5 * clearance[interior].min():
        raise RefineNeededError(
            "driving grid too coarse for the probe set",
            {"max_jump": jump, "min_clearance": float(clearance[interior].min())},
        )

    n = len(probes)
    z = probes.copy()
    t = np.zeros(n)
    nxt = np.ones(n, dtype=int)
    traj = np.full((n, len(times)), np.nan + 0j)
    traj[:, 0] = z
    escaped = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    start_hit = clearance < eps
    escaped[start_hit] = 0.0
    alive &= ~start_hit
    h_fail = np.full(n, np.inf)

    for _ in range(settings.max_flow_steps):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        ti, zi = t[idx], z[idx]
        dist = _distance(d, ti, zi)
        target = times[nxt[idx]]
        h = np.minimum(settings.step_safety * dist**2, target - ti)
        h = np.minimum(h, h_fail[idx])
        znew = _rk4(d, ti, zi, h)
        dnew = _distance(d, ti + h, znew)
        bad = (znew.imag < -1e-12 * d.scale) | ~np.isfinite(znew) | (dnew < 0.25 * dist) & (dnew >= eps)
        h_fail[idx] = np.where(bad, h / 2, np.inf)
        ok = ~bad
        esc = ok & (dnew < eps)
        if esc.any():
            escaped[idx[esc]] = _escape_time(d, ti[esc], zi[esc], h[esc], eps)
            alive[idx[esc]] = False
        keep = ok & ~esc
        ids = idx[keep]
        t[ids] = ti[keep] + h[keep]
        z[ids] = np.where(znew[keep].imag < 0, znew[keep].real + 0j, znew[keep])
        arrived = np.abs(t[ids] - times[nxt[ids]]) <= 1e-12 * max(T, 1.0)
        if arrived.any():
            done = ids[arrived]
            t[done] = times[nxt[done]]
            traj[done, nxt[done]] = z[done]
            nxt[done] += 1
            alive[done[nxt[done] >= len(times)]] = False
    else:
        raise IntegrationFailureError(
            "forward flow did not reach T within the step budget",
            {"max_steps": settings.max_flow_steps, "unfinished": int(alive.sum())},
        )
    out = np.where(np.isnan(escaped), z, np.nan + 0j)
    return FlowResult(probes, out, escaped, times, traj)


def _escape_time(d, t, z, h, eps) -> np.ndarray:
    """Bisect within the step for the first time the clearance drops below eps."""
    lo = np.zeros(len(t))
    hi = np.ones(len(t))
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        zm = _rk4(d, t, z, mid * h)
        inside = (_distance(d, t + mid * h, zm) < eps) | ~np.isfinite(zm)
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return t + hi * h


# ---------------------------------------------------------------------------
# hull tracing


@dataclass(frozen=True, eq=False)
class TraceResult:
    times: np.ndarray
    tips: np.ndarray  # (n, len(times)) complex
    tolerance: float


def _trace_exact(d: DrivingRecord) -> np.ndarray:
    times = d.times
    dt = times[1] - times[0]
    rows = d.weight_rows
    U = d.U
    steps = [ElementaryStep(float(U[int(np.argmax(rows[i])), i]), 2.0 * dt) for i in range(len(times) - 1)]
    chain = ConformalChain(tuple(steps))
    tips = np.empty((d.n, len(times)), dtype=complex)
    tips[:, 0] = U[:, 0]
    owner = np.argmax(rows[:-1], axis=1)
    for j in range(d.n):
        last = None
        for i in range(1, len(times)):
            if owner[i - 1] == j:
                last = i - 1
            if last is None:
                tips[j, i] = U[j, 0]
            else:
                top = chain.steps[last].anchor + 1j * np.sqrt(2 * chain.steps[last].dcap)
                tips[j, i] = chain.prefix(last).invert(top)
    return tips


def _backward_tips(d: DrivingRecord, t_end: np.ndarray, slit: np.ndarray, substeps: int) -> np.ndarray:
    """RK4 for the backward flow in the variable σ with s = t·σ².

    In σ the solution leaves the driving point linearly, so the square-root
    singularity at s = 0 disappears. The first stretch [0, σ₀] uses the
    one-slit closed form.
    """
    sigma0 = 1.0 / substeps
    u0 = d.drivers_at(t_end)[np.arange(len(t_end)), slit]
    lam0 = d.weights_at(t_end)[np.arange(len(t_end)), slit]
    h = u0 + 2j * sigma0 * np.sqrt(lam0 * t_end)
    dsig = (1.0 - sigma0) / substeps

    def f(sig, h):
        tau = t_end * (1.0 - sig**2)
        U = d.drivers_at(tau)
        lam = d.weights_at(tau)
        drift = -np.sum(2.0 * lam / (h[:, None] - U), axis=1)
        return 2.0 * sig * t_end * drift

    sig = sigma0
    for _ in range(substeps):
        k1 = f(sig, h)
        k2 = f(sig + dsig / 2, h + dsig / 2 * k1)
        k3 = f(sig + dsig / 2, h + dsig / 2 * k2)
        k4 = f(sig + dsig, h + dsig * k3)
        h = h + dsig / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        sig += dsig
    return h


def trace_tips(d: DrivingRecord) -> TraceResult:
    """Tip positions γ_j(t) at every grid time, with a tip-path tolerance."""
    settings = get_settings()
    times = d.times
    if d.interpolation == "step" and d.one_hot:
        return TraceResult(times, _trace_exact(d), 0.0)

    rows = d.weight_rows
    U = d.U
    tips = np.empty((d.n, len(times)), dtype=complex)
    tips[:, 0] = U[:, 0]
    # an idle slit keeps the tip it had when its weight last was positive
    source = np.full((d.n, len(times)), -1)
    for j in range(d.n):
        last = -1
        for i in range(1, len(times)):
            if rows[i, j] > 0:
                last = i
            source[j, i] = last
    pairs = sorted({(j, int(s)) for j in range(d.n) for s in source[j] if s > 0})
    tol = 0.0
    solved: dict[tuple[int, int], complex] = {}
    if pairs:
        slit = np.array([p[0] for p in pairs])
        t_end = times[np.array([p[1] for p in pairs])]
        fine = _backward_tips(d, t_end, slit, settings.trace_substeps)
        coarse = _backward_tips(d, t_end, slit, settings.trace_substeps // 2)
        if not np.all(np.isfinite(fine)):
            raise IntegrationFailureError(
                "backward flow blew up",
                {"times": t_end[~np.isfinite(fine)].tolist()[:5]},
            )
        tol = float(np.abs(fine - coarse).max())
        solved = {p: complex(v) for p, v in zip(pairs, fine)}
    for j in range(d.n):
        for i in range(1, len(times)):
            s = int(source[j, i])
            tips[j, i] = solved[(j, s)] if s > 0 else U[j, 0]
    eps = settings.escape_eps * d.scale
    for i in range(1, len(times)):
        for a in range(d.n):
            for b in range(a + 1, d.n):
                if abs(tips[a, i] - tips[b, i]) < eps:
                    log.warning("traced tips %d and %d collide at t=%.6g; output is not a slit union", a, b, times[i])
    log.debug("traced %d tips, tolerance %.3e", len(pairs), tol)
    return TraceResult(times, tips, tol)


def trace_hulls(d: DrivingRecord) -> MultiSlit:
    """Polyline slits through the traced tip sequences."""
    result = trace_tips(d)
    slits = []
    for j in range(d.n):
        pts = result.tips[j]
        keep = np.concatenate([[True], np.abs(np.diff(pts)) > 0])
        pts = pts[keep]
        pts[0] = pts[0].real + 0j
        slits.append(SlitCurve(pts))
    return MultiSlit(tuple(slits))


# ---------------------------------------------------------------------------
# Carathéodory proxy


def caratheodory_distance(f1: FlowResult, f2: FlowResult) -> float:
    """sup over probes and recorded times of |g¹_t(z) − g²_t(z)|."""
    if f1.probe_inputs.shape != f2.probe_inputs.shape or not np.array_equal(f1.probe_inputs, f2.probe_inputs):
        raise IncompatibleInputsError("flow results were computed on different probe sets")
    if f1.trajectories.shape != f2.trajectories.shape or not np.allclose(f1.times, f2.times):
        raise IncompatibleInputsError("flow results were recorded at different times")
    a, b = f1.trajectories, f2.trajectories
    if not np.array_equal(np.isnan(a), np.isnan(b)):
        return float("inf")
    diff = np.abs(a - b)
    return float(np.nanmax(diff)) if np.isfinite(diff).any() else 0.0
