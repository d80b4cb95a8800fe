"""Property suite run by ``verify`` on the bundled fixtures.

Every check reports the measured value next to its threshold; a suite that
raises is recorded as a single failed check carrying the error message.
"""

import logging
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from app.config import get_settings
from app.errors import LoewnerError
from app.models.results import CheckResult, VerifyReport
from app.services.capacity import (
    c_constant_ratios,
    check_boundary_expansion,
    check_capacity_inequalities,
    hcap_chain,
    hcap_mc,
    separation_bound,
)
from app.services.fitter import dynamics_report, fit_bang_bang
from app.services.forward import DrivingRecord, solve_forward, trace_hulls
from app.services.geometry import MultiSlit, SlitCurve, multislit_hausdorff, vertical_slit
from app.services.inverse import drive_single
from app.utils.serialization import read_multislit

log = logging.getLogger(__name__)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load_fixture(name: str) -> MultiSlit:
    return read_multislit(FIXTURES / f"{name}.json")


def random_slit(rng: np.random.Generator, base: float, vertices: int = 4) -> SlitCurve:
    """Polyline rising strictly in height from ``base`` with small sideways drift."""
    dy = rng.uniform(0.15, 0.5, vertices - 1)
    dx = rng.uniform(-0.1, 0.1, vertices - 1)
    steps = np.concatenate([[0.0], np.cumsum(dx + 1j * dy)])
    return SlitCurve(base + steps)


def random_slit_pair(rng: np.random.Generator, vertices: int = 4) -> MultiSlit:
    """Two slits with bases in [-2, -0.6] and [0.6, 2]; their closures never meet."""
    return MultiSlit.of(
        random_slit(rng, rng.uniform(-2.0, -0.6), vertices),
        random_slit(rng, rng.uniform(0.6, 2.0), vertices),
    )


def _at_most(name: str, value: float, threshold: float) -> CheckResult:
    return CheckResult(name=name, passed=bool(value <= threshold), value=float(value), threshold=threshold)


def _at_least(name: str, value: float, threshold: float) -> CheckResult:
    return CheckResult(name=name, passed=bool(value >= threshold), value=float(value), threshold=threshold)


def forward_closed_form() -> list[CheckResult]:
    """U ≡ 0 up to T = 1 against g(z) = sqrt(z² + 4) at probes off the hull [0, 2i]."""
    record = DrivingRecord.from_arrays(1.0, np.zeros((1, 1001)), [1.0])
    probes = np.array([3j, 4j, 1 + 1j])
    out = solve_forward(record, probes).probe_outputs
    err = float(np.abs(out - probes * np.sqrt(1 + 4 / probes**2)).max())
    return [_at_most("forward_closed_form", err, 1e-6)]


def vertical_capacity() -> list[CheckResult]:
    errs = [abs(hcap_chain(MultiSlit.of(vertical_slit(0.0, h))).value / (h * h / 2) - 1) for h in (0.5, 1.0, 2.0)]
    return [_at_most("hcap_vertical", max(errs), 1e-6)]


def vertical_driving(pair: MultiSlit) -> list[CheckResult]:
    slit = pair.slits[0]
    record, _, _ = drive_single(slit, 1000)
    height = slit.tip.imag
    return [
        _at_most("drive_vertical_T", abs(record.T - height**2 / 4), 1e-6),
        _at_most("drive_vertical_U", float(np.abs(record.U - slit.base).max()), 1e-4),
    ]


def bent_closed_loop(bent: MultiSlit) -> list[CheckResult]:
    record, _, _ = drive_single(bent.slits[0])
    traced = trace_hulls(record)
    return [_at_most("closed_loop_single", multislit_hausdorff(traced, bent) / bent.diameter, 1e-2)]


def capacity_properties(rng: np.random.Generator, pairs: int, probes: int) -> list[CheckResult]:
    slack = np.inf
    for _ in range(pairs):
        s, t = random_slit_pair(rng).slits
        k = int(rng.integers(2, len(s)))
        s_k, t_k = SlitCurve(s.points[:k]), SlitCurve(t.points[:k])
        for a1, a2 in (
            (MultiSlit.of(s), MultiSlit.of(t)),
            (MultiSlit.of(s_k), MultiSlit.of(s)),
            (MultiSlit.of(s, t_k), MultiSlit.of(s_k, t)),
        ):
            slack = min(slack, check_capacity_inequalities(a1, a2).min_slack)
    low, high = np.inf, -np.inf
    for _ in range(probes):
        s, t = random_slit_pair(rng).slits
        ratios = c_constant_ratios(s, t, trials=50, seed=int(rng.integers(2**31)))
        low, high = min(low, ratios.min()), max(high, ratios.max())
    return [
        _at_least("capacity_inequalities", slack, -1e-8),
        CheckResult(name="c_constant_positive", passed=bool(low > 0), value=float(low), threshold=0.0),
        _at_most("c_constant_at_most_one", high, 1 + 1e-8),
    ]


def boundary_behaviour(pair: MultiSlit) -> list[CheckResult]:
    report = check_boundary_expansion(pair)
    bound = separation_bound(pair)
    return [
        _at_least("boundary_expansion", report.min_slack, -1e-8),
        CheckResult(name="separation_gap", passed=bool(bound.gap > 0), value=bound.gap, threshold=0.0),
    ]


def mirror_fit(mirror: MultiSlit, levels: Optional[int], tol: Optional[float], grid: Optional[int]) -> list[CheckResult]:
    result = fit_bang_bang(mirror, levels, tol, grid)
    diam = mirror.diameter
    U = result.driving.U
    dyn = dynamics_report(result)
    traced = trace_hulls(result.driving)
    return [
        _at_most("symmetric_lambda", abs(result.lam[0] - 0.5), 1e-3),
        _at_most("symmetric_driving", float(np.abs(U[0] + U[1]).max()) / diam, 1e-2),
        CheckResult(name="dynamics", passed=dyn.passed, value=dyn.slope_error, threshold=5e-2),
        _at_most("closed_loop_pair", multislit_hausdorff(traced, mirror) / diam, 1e-2),
    ]


def montecarlo_capacity(walkers: int, seed: int) -> list[CheckResult]:
    est = hcap_mc(MultiSlit.of(vertical_slit(0.0, 1.0)), walkers, seed)
    return [
        _at_most("hcap_mc_zscore", abs(est.value - 0.5) / est.stderr, 3.0),
        _at_most("hcap_mc_stderr", est.stderr, 0.02),
    ]


def _guarded(name: str, suite: Callable[[], list[CheckResult]]) -> list[CheckResult]:
    try:
        return suite()
    except LoewnerError as exc:
        log.warning("verify suite %s failed: %s", name, exc.message)
        return [CheckResult(name=name, passed=False, detail=f"{type(exc).__name__}: {exc.message}")]


def run_verify(
    seed: Optional[int] = None,
    levels: Optional[int] = None,
    tol: Optional[float] = None,
    grid: Optional[int] = None,
    mc_samples: int = 0,
    pairs: int = 20,
    probes: int = 5,
) -> VerifyReport:
    """Run every suite; the Monte Carlo suite only when ``mc_samples`` is set."""
    seed = get_settings().default_seed if seed is None else seed
    rng = np.random.default_rng(seed)
    pair = load_fixture("vertical_pair")
    mirror = load_fixture("mirror_pair")
    bent = load_fixture("bent_slit")
    suites: list[tuple[str, Callable[[], list[CheckResult]]]] = [
        ("forward", forward_closed_form),
        ("capacity", vertical_capacity),
        ("driving", lambda: vertical_driving(pair)),
        ("closed_loop_single", lambda: bent_closed_loop(bent)),
        ("capacity_properties", lambda: capacity_properties(rng, pairs, probes)),
        ("boundary", lambda: boundary_behaviour(pair)),
        ("mirror_fit", lambda: mirror_fit(mirror, levels, tol, grid)),
    ]
    if mc_samples:
        suites.append(("montecarlo", lambda: montecarlo_capacity(mc_samples, seed)))
    checks: list[CheckResult] = []
    for name, suite in suites:
        checks.extend(_guarded(name, suite))
        log.info("verify: %s done", name)
    report = VerifyReport(checks=checks, seed=seed)
    log.info("verify: %d/%d checks passed", sum(c.passed for c in checks), len(checks))
    return report
