"""Constant Loewner weights and driving functions of a multi-slit.

Two independent routes to the weights λ and the driving functions:

* bang-bang: on every dyadic interval of [0, 1] slit 1 grows for a fraction
  μ of the interval and slit 2 for the rest; μ is bisected per level until
  slit 1 ends with its own capacity, and λ is read off the finest level;
* shooting: the own capacity x(t) of slit 1 solves ẋ = 2λ/C(x, t), where C
  is the squared boundary derivative of the map removing slit 2's portion at
  the image of slit 1's tip; λ is bisected on x(1).

Both work on the multi-slit rescaled to hcap 2 (so T = 1) and map their
results back. Slits are first extended to capacity 2 so that any schedule
can run to the end.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from app.config import get_settings
from app.errors import (
    BracketError,
    ExtensionError,
    FitFailureError,
    IncompatibleInputsError,
    IntegrationFailureError,
    InvalidMultiSlitError,
)
from app.services.capacity import hcap_chain, separation_bound
from app.services.forward import DrivingRecord, oscillating_weights, trace_tips
from app.services.geometry import (
    MultiSlit,
    SampledFunction,
    SlitCurve,
    WeightVector,
    affine_map,
    polyline_distance,
    validate_multislit,
)
from app.services.growth import GrowthEngine, solo_capacities
from app.services.inverse import (
    CapacityParametrization,
    LoewnerParametrization,
    capacity_parametrization,
    drive_multi,
    drive_single,
    resample_history,
)
from app.services.slitmaps import ConformalChain
from app.utils.parallel import parallel_map

log = logging.getLogger(__name__)

METHODS = ("bangbang", "shooting", "both")


# ---------------------------------------------------------------------------
# setup: normalization and extensions


def extend_to_capacity(
    slit: SlitCurve, others: Sequence[SlitCurve], target: float, min_gap: float
) -> SlitCurve:
    """Prolong ``slit`` from its tip by one straight segment until hcap = ``target``.

    Tries the direction of the last segment, then that direction bent upward,
    then straight up; a direction is usable if the segment stays in ℍ, misses
    the slit itself and keeps ``min_gap`` from every other slit.
    """
    own, _ = capacity_parametrization(slit)
    if own.hcap >= target:
        return slit
    pts = slit.points
    tip = pts[-1]
    d = (pts[-1] - pts[-2]) / abs(pts[-1] - pts[-2])
    candidates = [d]
    if abs(d + 1j) > 1e-12:
        candidates.append((d + 1j) / abs(d + 1j))
    candidates.append(1j)

    def extended(length: float, u: complex) -> SlitCurve:
        return SlitCurve(np.append(pts, tip + length * u))

    def shortfall(length: float, u: complex) -> float:
        if length <= 0:
            return own.hcap - target
        return capacity_parametrization(extended(length, u))[0].hcap - target

    def usable(length: float, u: complex) -> bool:
        seg = np.array([tip, tip + length * u])
        if seg[1].imag <= 0:
            return False
        if len(pts) > 2 and polyline_distance(seg, pts[:-1]) <= 0:
            return False
        return all(polyline_distance(seg, o.points) >= min_gap for o in others)

    tried = []
    for u in candidates:
        length = np.sqrt(2 * target)
        for _ in range(20):
            if not usable(length, u) or shortfall(length, u) > 0:
                break
            length *= 2
        if not usable(length, u):
            tried.append(complex(u))
            continue
        best = brentq(shortfall, 0.0, length, args=(u,), xtol=1e-13 * length, rtol=4 * np.finfo(float).eps)
        # brentq lands within xtol of the root; step just past it
        while shortfall(best, u) < 0:
            best += 1e-12 * length
        log.debug("extended slit at %.6g by %.6g along %s", slit.base, best, u)
        return extended(best, u)
    raise ExtensionError(
        f"cannot extend the slit at {slit.base:.6g} to capacity {target:.6g}",
        {"base": slit.base, "target": target, "directions": [str(u) for u in tried], "min_gap": min_gap},
    )


@dataclass(frozen=True, eq=False)
class FitSetup:
    """A multi-slit rescaled to hcap 2, with extended slits and own-capacity targets.

    Normalized coordinates are w = scale·z + shift; normalized time is
    original time times scale².
    """

    original: MultiSlit
    scale: float
    shift: float
    curves: tuple[CapacityParametrization, ...]
    targets: np.ndarray
    hcap: float

    @property
    def n(self) -> int:
        return len(self.curves)

    @property
    def T(self) -> float:
        return 0.5 * self.hcap

    def engine(self) -> GrowthEngine:
        return GrowthEngine(
            [c.curve.points for c in self.curves],
            own_caps=[c.cap_of_vertex for c in self.curves],
        )

    def record(self, U: np.ndarray, weights) -> DrivingRecord:
        """Normalized driving values on a grid over [0, 1] as an original-units record."""
        return DrivingRecord.from_arrays(self.T, (np.asarray(U) - self.shift) / self.scale, weights)

    def parametrization(self, progress: np.ndarray, weights: Optional[WeightVector]) -> LoewnerParametrization:
        r2 = self.scale**2
        curves = tuple(c.scaled(1.0 / self.scale, -self.shift / self.scale) for c in self.curves)
        funcs = tuple(SampledFunction(0.0, self.T, np.maximum.accumulate(row) / r2) for row in progress)
        return LoewnerParametrization(curves, funcs, weights)


def prepare(m: MultiSlit) -> FitSetup:
    """Validate, rescale to hcap 2 and extend every slit to capacity 2."""
    report = validate_multislit(m)
    if not report.ok:
        raise InvalidMultiSlitError(list(report.violations))
    settings = get_settings()
    h = hcap_chain(m).value
    r = float(np.sqrt(2.0 / h))
    c = -r * m.centre
    norm = affine_map(m, r, c)
    target = 2.0 * (1.0 + settings.extension_slack)
    thetas: list[SlitCurve] = []
    for j, s in enumerate(norm.slits):
        others = thetas + list(norm.slits[j + 1:])
        thetas.append(extend_to_capacity(s, others, target, 0.5 * norm.separation))
    curves, targets = [], []
    for s, theta in zip(norm.slits, thetas):
        param, _ = capacity_parametrization(theta)
        k = int(np.argmin(np.abs(param.curve.points - s.tip)))
        curves.append(param)
        targets.append(float(param.cap_of_vertex[k]))
    log.info("normalized by r=%.6g; own targets %s", r, np.round(targets, 6).tolist())
    return FitSetup(m, r, c, tuple(curves), np.array(targets), h)


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True, eq=False)
class FitContext:
    """Normalized-coordinate handles kept for the dynamics checks."""

    setup: FitSetup
    x_path: Callable[[float], float]
    y_path: Callable[[float], float]
    rate: Optional[Callable[[float], float]] = None
    cell: float = 0.0  # bang-bang interval width; probes snap to whole intervals


@dataclass(frozen=True, eq=False)
class FitResult:
    lam: WeightVector
    driving: DrivingRecord
    parametrization: LoewnerParametrization
    method: str
    diagnostics: dict
    residuals: np.ndarray
    experimental: bool = False
    context: Optional[FitContext] = field(default=None, repr=False)


@dataclass(frozen=True)
class Bisection:
    root: float
    residual: float
    history: tuple[tuple[float, float], ...]
    bracket: tuple[float, float] = (0.0, 1.0)
    monotone: bool = True


def _sweep(fn: Callable[[float], float], lo: float, hi: float, points: int = 21) -> list[list[float]]:
    return [[float(v), float(fn(v))] for v in np.linspace(lo, hi, points)]


def _bisect(
    fn: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    width: float,
    label: str,
    strict: bool = True,
) -> Bisection:
    """Bisection for fn(v) = target with fn nondecreasing on [lo, hi].

    The root is interpolated linearly inside the final bracket when fn is
    known at both of its ends, otherwise it is the bracket midpoint. A
    non-monotone response raises BracketError, or only logs a warning when
    ``strict`` is off.
    """
    lo0, hi0 = lo, hi
    f_lo: Optional[float] = None
    f_hi: Optional[float] = None
    history: list[tuple[float, float]] = []
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        value = float(fn(mid))
        history.append((mid, value))
        if value < target:
            lo, f_lo = mid, value
        else:
            hi, f_hi = mid, value
    root = 0.5 * (lo + hi)
    if f_lo is not None and f_hi is not None and f_hi > f_lo:
        root = float(np.clip(lo + (target - f_lo) * (hi - lo) / (f_hi - f_lo), lo, hi))
    value = float(fn(root))
    history.append((root, value))
    ordered = sorted(history)
    values = np.array([v for _, v in ordered])
    monotone = not (len(values) > 1 and np.diff(values).min() < -width)
    if not monotone:
        if strict:
            raise BracketError(
                f"{label}: response is not monotone in the control variable",
                {"history": [list(h) for h in history], "sweep": _sweep(fn, lo0, hi0)},
            )
        log.warning("%s: response is not monotone in the control variable; keeping %.6g", label, root)
    return Bisection(root, abs(value - target), tuple(history), (float(lo), float(hi)), monotone)


def _history_arrays(engine: GrowthEngine) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    caps = np.array([h[0] for h in engine.history])
    tips = np.vstack([h[1] for h in engine.history])
    progress = np.vstack([h[2] for h in engine.history])
    return 0.5 * caps, tips, progress


def agreement(a: FitResult, b: FitResult) -> dict:
    """λ difference and sup distance between the driving records of two fits.

    The final bisection brackets are reported alongside; a λ difference
    smaller than their width is not resolved by either fit.
    """
    if a.driving.n != b.driving.n or len(a.driving.times) != len(b.driving.times):
        raise IncompatibleInputsError("fits differ in slit count or grid")
    brackets = [r.diagnostics.get("bracket") for r in (a, b)]
    widths = [hi - lo for lo, hi in filter(None, brackets)]
    return {
        "lambda_difference": float(np.abs(a.lam.weights - b.lam.weights).max()),
        "driving_distance": float(np.abs(a.driving.U - b.driving.U).max()),
        "brackets": brackets,
        "resolution": float(max(widths)) if widths else None,
    }


# ---------------------------------------------------------------------------
# bang-bang


@dataclass(frozen=True, eq=False)
class BangBangLevel:
    """One bang-bang run in normalized coordinates (T = 1)."""

    x1: float
    driving: DrivingRecord
    chain: ConformalChain
    engine: GrowthEngine = field(repr=False)


def _schedule(setup: FitSetup, level: int, shares: Sequence[float], palindromic: bool) -> GrowthEngine:
    engine = setup.engine()
    cells = 2**level
    order = list(range(setup.n))
    for k in range(cells):
        for j in (order[::-1] if palindromic and k % 2 else order):
            budget = 2.0 * shares[j] / cells
            if budget > 0:
                engine.grow(j, budget)
    return engine


def _setup_of(m) -> FitSetup:
    return m if isinstance(m, FitSetup) else prepare(m)


def bang_bang_level(
    m, level: int, mu: float, grid: Optional[int] = None, palindromic: bool = False
) -> BangBangLevel:
    """Alternating growth of two slits at one dyadic level; normalized output.

    ``m`` is a two-slit MultiSlit or a prepared FitSetup.
    """
    setup = _setup_of(m)
    if setup.n != 2:
        raise IncompatibleInputsError("bang-bang levels are defined for two slits")
    if not 0.0 <= mu <= 1.0:
        raise IncompatibleInputsError(f"mu must lie in [0, 1], got {mu!r}")
    engine = _schedule(setup, level, (mu, 1.0 - mu), palindromic)
    times, tips, _ = _history_arrays(engine)
    grid = grid or get_settings().default_grid
    t = np.linspace(0.0, 1.0, grid)
    rows = oscillating_weights(t, 2.0**-level, mu)
    driving = DrivingRecord.from_arrays(1.0, resample_history(times, tips, t), rows)
    return BangBangLevel(float(engine.progress()[0]), driving, engine.chain(), engine)


def sweep_mu(m, level: int, points: int = 21) -> np.ndarray:
    """x₁(1) on an even grid of μ in [0, 1]; rows of (μ, x₁)."""
    setup = _setup_of(m)
    mus = np.linspace(0.0, 1.0, points)
    xs = parallel_map(lambda mu: bang_bang_level(setup, level, mu).x1, mus)
    return np.column_stack([mus, xs])


def richardson_lambda(mu_levels: Sequence[float]) -> Optional[float]:
    """2μ_L − μ_{L−1}; the finest-level bias is taken to halve per level."""
    if len(mu_levels) < 2:
        return None
    return float(2 * mu_levels[-1] - mu_levels[-2])


def fit_bang_bang(
    m: MultiSlit,
    levels: Optional[int] = None,
    tol: Optional[float] = None,
    grid: Optional[int] = None,
    setup: Optional[FitSetup] = None,
) -> FitResult:
    settings = get_settings()
    levels = levels or settings.default_levels
    tol = tol or settings.default_tol
    grid = grid or settings.default_grid
    setup = setup or prepare(m)
    if setup.n != 2:
        raise IncompatibleInputsError("fit_bang_bang needs exactly two slits")
    palindromic = settings.bangbang_palindromic
    target = setup.targets[0]

    def solve(level: int) -> Bisection:
        fn = lambda mu: _schedule(setup, level, (mu, 1.0 - mu), palindromic).progress()[0]
        found = _bisect(fn, target, 0.0, 1.0, tol / 4, f"bang-bang level {level}")
        log.info("level %d: mu=%.6f (residual %.2e)", level, found.root, found.residual)
        return found

    found = parallel_map(solve, range(1, levels + 1))
    mus = [f.root for f in found]
    lam = mus[-1]
    if found[-1].residual > tol:
        raise FitFailureError(
            f"bang-bang residual {found[-1].residual:.3e} exceeds tolerance {tol:.1e}",
            {"mu_levels": mus, "residual": found[-1].residual},
        )

    engine = _schedule(setup, levels, (lam, 1.0 - lam), palindromic)
    times, tips, progress = _history_arrays(engine)
    t = np.linspace(0.0, 1.0, grid)
    weights = WeightVector.completing([lam])
    driving = setup.record(resample_history(times, tips, t), weights)
    x_grid = resample_history(times, progress, t)
    parametrization = setup.parametrization(x_grid, weights)
    end = engine.progress()
    residuals = np.abs(end - setup.targets) / setup.scale**2
    diagnostics = {
        "mu_levels": mus,
        "increments": np.abs(np.diff(mus)).tolist(),
        "richardson": richardson_lambda(mus),
        "residual_levels": [f.residual for f in found],
        "bracket": list(found[-1].bracket),
        "bisection": [[list(h) for h in f.history] for f in found],
        "palindromic": palindromic,
        "tilt_fallbacks": engine.fallbacks,
    }

    def x_path(s: float) -> float:
        return float(np.interp(s, times, progress[:, 0]))

    def y_path(s: float) -> float:
        return float(np.interp(s, times, progress[:, 1]))

    context = FitContext(setup, x_path, y_path, cell=2.0**-levels)
    return FitResult(weights, driving, parametrization, "bangbang", diagnostics, residuals, False, context)


# ---------------------------------------------------------------------------
# C-factor and shooting


def _pair_state(setup: FitSetup, x0: float, t: float, watch: bool = False) -> tuple[GrowthEngine, int]:
    """Slit 1 grown alone to own capacity x0, then slit 2 until joint capacity 2t."""
    engine = setup.engine()
    if x0 > 0:
        engine.advance_to(0, x0)
    w = engine.watch(engine.tips[0]) if watch else -1
    budget = 2.0 * t - engine.capacity
    if budget > 0:
        engine.grow(1, budget)
    return engine, w


def _c_exact(setup: FitSetup, x0: float, t: float) -> float:
    engine, w = _pair_state(setup, x0, t, watch=True)
    c = float(engine.watch_d[w] ** 2)
    if not 0.0 < c <= 1.0:
        log.warning("C(%.6g, %.6g) = %.9g outside (0, 1]; clamped", x0, t, c)
        c = min(max(c, np.finfo(float).tiny), 1.0)
    return c


def c_factor(m: MultiSlit, x0: float, t: float, setup: Optional[FitSetup] = None) -> float:
    """C(x0, t) for a two-slit hull, in the hull's own units of capacity and time."""
    setup = setup or prepare(m)
    if setup.n != 2:
        raise IncompatibleInputsError("c_factor needs exactly two slits")
    r2 = setup.scale**2
    x0n, tn = x0 * r2, t * r2
    slack = 1e-12 * max(1.0, 2 * tn)
    if x0n < 0 or x0n > 2 * tn + slack or 2 * tn > 2.0 + slack:
        raise IncompatibleInputsError(
            "c_factor needs 0 ≤ x0 ≤ 2t ≤ hcap",
            {"x0": x0, "t": t, "hcap": setup.hcap},
        )
    return _c_exact(setup, min(x0n, 2 * tn), tn)


@dataclass(frozen=True, eq=False)
class _Column:
    x0: float
    joint: np.ndarray
    values: np.ndarray

    def __call__(self, t: float) -> float:
        if 2 * t <= self.x0:
            return 1.0
        return float(np.interp(2 * t, self.joint, self.values))


class CFactorTable:
    """C on a lattice of x0 columns over [0, 2], filled on first use.

    Each column is a single engine pass: grow slit 1 to x0, then absorb slit 2
    vertex by vertex while recording the joint capacity and C.
    """

    def __init__(self, setup: FitSetup, tol: float):
        settings = get_settings()
        self.setup = setup
        power = int(np.ceil(np.log2(1.0 / np.sqrt(tol)))) + settings.cfactor_refine
        self.nx = 2**max(power, 2) + 1
        self.x0 = np.linspace(0.0, 2.0, self.nx)
        self._columns: dict[int, _Column] = {}
        self._lock = threading.Lock()

    def _build(self, i: int) -> _Column:
        engine = self.setup.engine()
        x0 = float(self.x0[i])
        if x0 > 0:
            engine.advance_to(0, x0)
        w = engine.watch(engine.tips[0])
        joint = [engine.capacity]
        values = [1.0]
        while not engine.exhausted(1) and engine.capacity < 2.0:
            engine.absorb_next(1)
            joint.append(engine.capacity)
            values.append(float(engine.watch_d[w] ** 2))
        return _Column(x0, np.array(joint), np.clip(values, np.finfo(float).tiny, 1.0))

    def column(self, i: int) -> _Column:
        col = self._columns.get(i)
        if col is None:
            col = self._build(i)
            with self._lock:
                col = self._columns.setdefault(i, col)
        return col

    @property
    def filled(self) -> int:
        return len(self._columns)

    def __call__(self, x: float, t: float) -> float:
        x = min(max(float(x), 0.0), 2.0 * t, 2.0)
        pos = x / (self.x0[1] - self.x0[0])
        i = min(int(pos), self.nx - 2)
        frac = pos - i
        return (1 - frac) * self.column(i)(t) + frac * self.column(i + 1)(t)


def _integrate(table: CFactorTable, lam: float):
    settings = get_settings()

    def rhs(t, x):
        return [2.0 * lam / table(x[0], t)]

    sol = solve_ivp(rhs, (0.0, 1.0), [0.0], method="RK45", rtol=settings.shooting_rtol, atol=1e-12, dense_output=True)
    if not sol.success:
        raise IntegrationFailureError(f"shooting ODE failed for λ={lam:.6g}: {sol.message}", {"lambda": lam})
    return sol


def fit_shooting(
    m: MultiSlit,
    tol: Optional[float] = None,
    grid: Optional[int] = None,
    setup: Optional[FitSetup] = None,
) -> FitResult:
    settings = get_settings()
    tol = tol or settings.default_tol
    grid = grid or settings.default_grid
    setup = setup or prepare(m)
    if setup.n != 2:
        raise IncompatibleInputsError("fit_shooting needs exactly two slits")
    table = CFactorTable(setup, tol)
    target = setup.targets[0]

    found = _bisect(lambda lam: _integrate(table, lam).y[0, -1], target, 0.0, 1.0, tol / 4, "shooting")
    lam = found.root
    if found.residual > tol:
        raise FitFailureError(
            f"shooting residual {found.residual:.3e} exceeds tolerance {tol:.1e}",
            {"lambda": lam, "residual": found.residual},
        )
    log.info("shooting: lambda=%.6f with %d C columns", lam, table.filled)
    sol = _integrate(table, lam)
    t = np.linspace(0.0, 1.0, grid)
    x = np.clip(sol.sol(t)[0], 0.0, 2.0 * t)
    x = np.maximum.accumulate(x)
    y = np.array(parallel_map(lambda k: _pair_state(setup, x[k], t[k])[0].progress()[1], range(grid)))
    y[0] = 0.0
    weights = WeightVector.completing([lam])
    normalized = LoewnerParametrization(
        setup.curves,
        (SampledFunction(0.0, 1.0, x), SampledFunction(0.0, 1.0, np.maximum.accumulate(y))),
        weights,
    )
    U = drive_multi(normalized).U
    driving = setup.record(U, weights)
    parametrization = setup.parametrization(np.vstack([x, y]), weights)
    residuals = np.abs(np.array([x[-1], y[-1]]) - setup.targets) / setup.scale**2
    diagnostics = {
        "lambda_history": [list(h) for h in found.history],
        "residual": found.residual,
        "bracket": list(found.bracket),
        "columns": table.filled,
        "lattice": table.nx,
    }

    def x_path(s: float) -> float:
        return float(min(max(sol.sol(s)[0], 0.0), 2.0 * s))

    def y_path(s: float) -> float:
        return float(_pair_state(setup, x_path(s), s)[0].progress()[1])

    def rate(s: float) -> float:
        return 2.0 * lam / _c_exact(setup, x_path(s), s)

    context = FitContext(setup, x_path, y_path, rate)
    return FitResult(weights, driving, parametrization, "shooting", diagnostics, residuals, False, context)


# ---------------------------------------------------------------------------
# three or more slits


def fit_multi(
    m: MultiSlit,
    tol: Optional[float] = None,
    levels: Optional[int] = None,
    grid: Optional[int] = None,
    setup: Optional[FitSetup] = None,
) -> FitResult:
    """Experimental: bang-bang over n ≥ 3 slits with nested bisection of the shares.

    The share of slit k is bisected with the shares of slits k+1, … solved
    inside every trial; the last share is whatever is left.
    """
    settings = get_settings()
    tol = tol or settings.default_tol
    levels = levels or settings.multi_levels
    grid = grid or settings.default_grid
    setup = setup or prepare(m)
    n = setup.n
    if n < 3:
        raise IncompatibleInputsError("fit_multi is for three or more slits")

    def run(shares: Sequence[float]) -> GrowthEngine:
        return _schedule(setup, levels, shares, True)

    irregular: set[int] = set()

    def solve(k: int, mass: float, fixed: list[float]) -> list[float]:
        if k == n - 1:
            return [mass]

        def own(s: float) -> float:
            rest = solve(k + 1, mass - s, fixed + [s])
            return run(fixed + [s] + rest).progress()[k]

        found = _bisect(own, setup.targets[k], 0.0, mass, tol / 4, f"share of slit {k}", strict=False)
        if not found.monotone:
            irregular.add(k)
        return [found.root] + solve(k + 1, mass - found.root, fixed + [found.root])

    shares = solve(0, 1.0, [])
    leading = list(shares[:-1])
    excess = sum(leading) - 1.0
    if excess > 0:
        leading[-1] -= excess
    weights = WeightVector.completing(leading)
    engine = run(weights.weights)
    end = engine.progress()
    residuals = np.abs(end - setup.targets) / setup.scale**2
    times, tips, progress = _history_arrays(engine)
    t = np.linspace(0.0, 1.0, grid)
    driving = setup.record(resample_history(times, tips, t), weights)
    parametrization = setup.parametrization(resample_history(times, progress, t), weights)
    diagnostics = {
        "level": levels,
        "shares": weights.weights.tolist(),
        "non_monotone_shares": sorted(irregular),
        "experimental": True,
    }
    log.info("fit_multi (experimental): lambda=%s", np.round(weights.weights, 6).tolist())
    return FitResult(weights, driving, parametrization, "bangbang-multi", diagnostics, residuals, True)


def fit_single(s: SlitCurve, grid: Optional[int] = None) -> FitResult:
    """The one-slit case: λ = 1 and the driving function of the slit."""
    driving, _, param = drive_single(s, grid)
    weights = WeightVector(np.array([1.0]))
    x = SampledFunction(0.0, param.T, 2.0 * driving.times)
    parametrization = LoewnerParametrization((param,), (x,), weights)
    return FitResult(weights, driving, parametrization, "single", {}, np.zeros(1))


def fit(
    m: MultiSlit,
    method: str = "bangbang",
    levels: Optional[int] = None,
    tol: Optional[float] = None,
    grid: Optional[int] = None,
) -> list[FitResult]:
    """Dispatch on slit count and method; ``both`` returns the two fits in order."""
    if method not in METHODS:
        raise IncompatibleInputsError(f"method must be one of {METHODS}, got {method!r}")
    report = validate_multislit(m)
    if not report.ok:
        raise InvalidMultiSlitError(list(report.violations))
    if m.n == 1:
        return [fit_single(m.slits[0], grid)]
    setup = prepare(m)
    if m.n >= 3:
        return [fit_multi(m, tol, grid=grid, setup=setup)]
    out = []
    if method in ("bangbang", "both"):
        out.append(fit_bang_bang(m, levels, tol, grid, setup))
    if method in ("shooting", "both"):
        out.append(fit_shooting(m, tol, grid, setup))
    return out


# ---------------------------------------------------------------------------
# dynamics


# re-peeled traces resolve ẋ/2λ to about this
_MEASURED_RATE_TOL = 1e-2


@dataclass(frozen=True)
class DynamicsReport:
    tip_margin: float
    excess: tuple[float, ...]
    slope: float
    slope_error: float
    lower_margin: float
    min_rate_ratio: Optional[float] = None
    measured: bool = False

    @property
    def excess_decreasing(self) -> bool:
        return all(a > b for a, b in zip(self.excess, self.excess[1:]))

    @property
    def rate_tolerance(self) -> float:
        return _MEASURED_RATE_TOL if self.measured else 1e-6

    @property
    def passed(self) -> bool:
        rate_ok = self.min_rate_ratio is None or self.min_rate_ratio > 1 - self.rate_tolerance
        return (
            self.tip_margin >= 0
            and self.excess_decreasing
            and self.slope_error <= 5e-2
            and self.lower_margin >= -1e-9
            and rate_ok
        )


def measured_progress(d: DrivingRecord) -> np.ndarray:
    """Own capacity of each slit at every grid time, from a zipper peel of the traced tips."""
    traced = trace_tips(d)
    return np.vstack([solo_capacities(row)[0] for row in traced.tips])


def dynamics_report(result: FitResult, samples: int = 16) -> DynamicsReport:
    """Small-time behaviour of a two-slit fit.

    Tip heights obey Im γ_j(t) ≤ 2√t; (x + y − 2t)/t decreases towards 0 as
    t → 0; x has slope 2λ at the origin, ẋ ≥ 2λ and x(t) ≥ 2λt.

    Shooting fits carry ẋ = 2λ/C and are checked against it directly. For
    bang-bang fits the slope and rate come from the hulls the fitted driving
    record generates: slit 1's traced tips are peeled alone and ẋ is averaged
    over ``samples`` blocks of grid cells.
    """
    ctx = result.context
    if ctx is None or result.lam.n != 2:
        raise IncompatibleInputsError("dynamics are checked for two-slit fits with a context")
    lam = result.lam[0]
    p = result.parametrization
    times = p.times
    values = p.values
    margin = np.inf
    for j, curve in enumerate(p.curves):
        heights = np.array([curve.point_at(x).imag for x in values[j]])
        margin = min(margin, float(np.min(2 * np.sqrt(times) + 1e-6 - heights)))

    def snap(t: float) -> float:
        return float(np.ceil(t / ctx.cell - 1e-9) * ctx.cell) if ctx.cell else t

    excess = tuple((ctx.x_path(s) + ctx.y_path(s) - 2 * s) / s for s in map(snap, (1e-1, 1e-2, 1e-3)))
    probe = [snap(t) for t in np.linspace(0.0, 1.0, samples + 1)[1:]]
    lower = min(ctx.x_path(t) - 2 * lam * t for t in probe)
    ratio = None
    measured = ctx.rate is None
    if measured:
        t = result.driving.times
        x = measured_progress(result.driving)[0]
        slope = x[1] / t[1]
        block = max(1, (len(t) - 1) // samples)
        idx = np.arange(0, len(t), block)
        if lam > 0:
            rates = np.diff(x[idx]) / np.diff(t[idx])
            ratio = float(rates.min() / (2 * lam))
    else:
        delta = 1e-3
        slope = ctx.x_path(delta) / delta
        if lam > 0:
            ratio = min(ctx.rate(t) / (2 * lam) for t in probe)
    slope_error = abs(slope - 2 * lam) / (2 * lam) if lam > 0 else abs(slope)
    return DynamicsReport(margin, excess, float(slope), float(slope_error), float(lower), ratio, measured)


def driving_bounds(setup: FitSetup) -> tuple[float, float]:
    """[g⁻(p₁), g⁺(p₂)] for the union of the extended slits, normalized coordinates."""
    union = MultiSlit(tuple(c.curve for c in setup.curves))
    bound = separation_bound(union)
    return bound.lower, bound.upper
