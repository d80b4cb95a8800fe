"""Half-plane capacity: conformal chain and Brownian Monte Carlo, plus checks.

The chain value is the total capacity of a full zipper peel of the hull. The
Monte Carlo value uses hcap(A) = lim y·E^{iy}[Im B_τ], where B is Brownian
motion stopped on ℝ ∪ A. Walkers are launched high above the hull, brought
down to the line just above it with the exact Cauchy first-passage law and
then run by walk-on-spheres until they come within ε of ℝ or the hull.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from app.config import get_settings
from app.errors import HypothesisNotMetError, IncompatibleInputsError
from app.services.geometry import MultiSlit, SlitCurve, hull_geometry, nearest_on_hull, polyline_distance
from app.services.growth import GrowthEngine
from app.services.inverse import peel_points
from app.services.slitmaps import ConformalChain, boundary_images
from app.utils.parallel import parallel_map

log = logging.getLogger(__name__)

METHODS = ("chain", "montecarlo")


@dataclass(frozen=True)
class HcapEstimate:
    value: float
    method: str
    stderr: float = 0.0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


# ---------------------------------------------------------------------------
# chain


def peel_hull(slits: Sequence[SlitCurve]) -> GrowthEngine:
    """Growth engine after peeling every slit completely, in the given order."""
    engine = GrowthEngine([peel_points(s) for s in slits])
    for j in range(engine.n):
        while not engine.exhausted(j):
            engine.absorb_next(j)
    return engine


def hull_chain(m: MultiSlit) -> ConformalChain:
    return peel_hull(m.slits).chain()


def hcap_chain(m: MultiSlit) -> HcapEstimate:
    engine = peel_hull(m.slits)
    return HcapEstimate(engine.capacity, "chain", 0.0, {"steps": len(engine.steps)})


# ---------------------------------------------------------------------------
# Monte Carlo


def _walk_block(
    m: MultiSlit, size: int, seed: int, block: int, launch: float, hit_eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """Scores Im B_τ for one block of walkers started at centre + i·launch.

    Returns the scores for the stopping distance ``hit_eps`` and for twice
    that distance. A walk stopped at 2ε is a prefix of the same walk stopped
    at ε, so both come from one pass.
    """
    settings = get_settings()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    hull = hull_geometry(m)
    diam = max(m.diameter, m.top)
    centre = m.centre
    line = m.top + 0.05 * diam
    kill = settings.mc_kill_factor * diam

    # first passage from centre + i·launch to the line Im z = line is Cauchy distributed
    z = centre + (launch - line) * rng.standard_cauchy(size) + 1j * line
    score = np.zeros(size)
    coarse = np.zeros(size)
    alive = np.ones(size, dtype=bool)
    coarse_open = np.ones(size, dtype=bool)
    for _ in range(settings.mc_max_steps):
        idx = np.flatnonzero(alive)
        if not len(idx):
            break
        zi = z[idx]
        far = np.abs(zi - centre) > kill
        alive[idx[far]] = False
        coarse_open[idx[far]] = False
        idx, zi = idx[~far], zi[~far]
        d_hull, nearest = nearest_on_hull(zi, hull)
        d_line = zi.imag
        hull_side = d_hull <= d_line

        first = coarse_open[idx] & (np.minimum(d_hull, d_line) < 2 * hit_eps)
        coarse[idx[first & hull_side]] = nearest[first & hull_side].imag
        coarse_open[idx[first]] = False

        stopped = np.minimum(d_hull, d_line) < hit_eps
        hit = stopped & hull_side
        score[idx[hit]] = nearest[hit].imag
        alive[idx[stopped]] = False
        move = ~stopped
        theta = rng.uniform(0.0, 2 * np.pi, int(move.sum()))
        z[idx[move]] = zi[move] + np.minimum(d_hull, d_line)[move] * np.exp(1j * theta)
    if alive.any():
        log.debug("block %d: %d walkers hit the step limit", block, int(alive.sum()))
    return score, coarse


def _mc_run(m: MultiSlit, walkers: int, seed: int, launch: float, hit_eps: float) -> tuple[float, float, float]:
    """Mean, standard error and paired 2ε shift of launch·Im B_τ."""
    settings = get_settings()
    size = settings.mc_block
    counts = [min(size, walkers - k) for k in range(0, walkers, size)]
    blocks = parallel_map(
        lambda item: _walk_block(m, item[1], seed, item[0], launch, hit_eps),
        list(enumerate(counts)),
    )
    fine = launch * np.concatenate([s for s, _ in blocks])
    coarse = launch * np.concatenate([c for _, c in blocks])
    shift = float(np.mean(coarse - fine))
    return float(fine.mean()), float(fine.std(ddof=1) / np.sqrt(len(fine))), shift


def hcap_mc(m: MultiSlit, walkers: Optional[int] = None, seed: Optional[int] = None) -> HcapEstimate:
    """Monte Carlo hcap with a standard error that includes the ε_hit sensitivity."""
    settings = get_settings()
    walkers = walkers or settings.mc_walkers
    seed = settings.default_seed if seed is None else seed
    if walkers < 1000:
        raise IncompatibleInputsError(f"at least 1000 walkers are required, got {walkers}")
    diam = max(m.diameter, m.top)
    launch = m.top + settings.mc_launch_factor * diam
    eps = settings.mc_hit_eps * diam

    value, stderr, eps_shift = _mc_run(m, walkers, seed, launch, eps)
    diagnostics = {"launch": launch, "hit_eps": eps, "eps_sensitivity": eps_shift, "walkers": walkers, "seed": seed}
    if settings.mc_richardson:
        # the y·E bias decays like 1/y², so heights y and 2y combine as (4v₂ − v₁)/3
        high, high_err, _ = _mc_run(m, walkers, seed + 1, 2 * launch, eps)
        diagnostics["single_height"] = value
        value = (4 * high - value) / 3
        stderr = float(np.hypot(4 * high_err, stderr) / 3)
    else:
        # the 1/y² term is c/y² with |c| ≤ hcap·R² for a hull within radius R of the centre
        radius = float(np.abs(m.points - m.centre).max())
        bias = abs(value) * (radius / launch) ** 2
        diagnostics["height_bias"] = bias
        stderr = float(np.hypot(stderr, bias))
    stderr = float(np.hypot(stderr, eps_shift))
    log.info("hcap_mc: %.6g ± %.2g (%d walkers)", value, stderr, walkers)
    return HcapEstimate(value, "montecarlo", max(stderr, np.finfo(float).tiny), diagnostics)


# ---------------------------------------------------------------------------
# capacity inequalities


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    slack: Optional[float]
    skipped: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.skipped is not None or self.slack >= -1e-8


@dataclass(frozen=True)
class CapacityReport:
    relation: str
    checks: tuple[InequalityCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def min_slack(self) -> float:
        slacks = [c.slack for c in self.checks if c.slack is not None]
        return min(slacks) if slacks else float("inf")


def _is_prefix(inner: SlitCurve, outer: SlitCurve) -> bool:
    k = len(inner)
    return k <= len(outer) and np.allclose(inner.points, outer.points[:k], rtol=0, atol=1e-12 * max(outer.diameter, 1.0))


@dataclass(frozen=True)
class PrefixFamily:
    """Two hulls written as vertex prefixes of shared, pairwise disjoint parent curves.

    ``counts1[g]`` is the number of densified vertices of parent g used by the
    first hull (0 or 1 when it has no slit on that parent), likewise ``counts2``.
    """

    parents: tuple[np.ndarray, ...]
    counts1: tuple[int, ...]
    counts2: tuple[int, ...]

    @property
    def union(self) -> tuple[int, ...]:
        return tuple(max(a, b) for a, b in zip(self.counts1, self.counts2))

    @property
    def intersection(self) -> tuple[int, ...]:
        return tuple(min(a, b) for a, b in zip(self.counts1, self.counts2))

    def subset(self, first: tuple[int, ...], second: tuple[int, ...]) -> bool:
        return all(a <= b for a, b in zip(first, second))

    def hcap(self, counts: tuple[int, ...]) -> float:
        pieces = [p[:k] for p, k in zip(self.parents, counts) if k > 1]
        if not pieces:
            return 0.0
        engine = GrowthEngine(pieces)
        for j in range(engine.n):
            while not engine.exhausted(j):
                engine.absorb_next(j)
        return engine.capacity


def prefix_family(a1: MultiSlit, a2: MultiSlit) -> Optional[PrefixFamily]:
    """Group the slits of both hulls by shared parent; None when that is impossible.

    Two slits share a parent when one is a vertex prefix of the other. Each
    parent may carry at most one slit of each hull, and distinct parents must
    have disjoint closures.
    """
    groups: list[list[tuple[int, SlitCurve]]] = []
    for side, s in [(0, s) for s in a1.slits] + [(1, t) for t in a2.slits]:
        for g in groups:
            if any(_is_prefix(s, t) or _is_prefix(t, s) for _, t in g):
                g.append((side, s))
                break
        else:
            groups.append([(side, s)])
    if any(sorted(side for side, _ in g) not in ([0], [1], [0, 1]) for g in groups):
        return None
    longest = [max((s for _, s in g), key=len) for g in groups]
    for i in range(len(longest)):
        for j in range(i + 1, len(longest)):
            if polyline_distance(longest[i].points, longest[j].points) <= 0:
                return None

    parents, counts = [], ([], [])
    for g, parent in zip(groups, longest):
        dense = peel_points(parent)
        parents.append(dense)
        used = [0, 0]
        for side, s in g:
            # densifying keeps the original vertices, so every member tip is one of them
            used[side] = len(dense) if s is parent else int(np.argmin(np.abs(dense - s.tip))) + 1
        counts[0].append(used[0])
        counts[1].append(used[1])
    return PrefixFamily(tuple(parents), tuple(counts[0]), tuple(counts[1]))


def check_capacity_inequalities(a1: MultiSlit, a2: MultiSlit) -> CapacityReport:
    """Evaluate subadditivity, monotonicity and mapped-capacity decay.

    Union and intersection are formed parent by parent (longer prefix for the
    union, shorter for the intersection), and every capacity is a fresh peel
    of densified prefixes, so all four hulls share one discretization.
    """
    family = prefix_family(a1, a2)
    if family is None:
        reason = "hulls cannot be written as prefixes of disjoint curves"
        return CapacityReport("overlapping", tuple(InequalityCheck(n, None, reason) for n in ("a", "b", "c")))

    c1, c2 = family.counts1, family.counts2
    union, inter = family.union, family.intersection
    cache: dict[tuple[int, ...], float] = {}

    def hcap(counts):
        if counts not in cache:
            cache[counts] = family.hcap(counts)
        return cache[counts]

    h1, h2 = hcap(c1), hcap(c2)
    nested = family.subset(c1, c2) or family.subset(c2, c1)
    disjoint = all(k <= 1 for k in inter)
    relation = "nested" if nested else "disjoint" if disjoint else "crossed"

    if nested:
        # union and intersection are the two hulls themselves
        a = InequalityCheck("a", None, "holds with equality for nested hulls")
        b = InequalityCheck("b", h2 - h1 if family.subset(c1, c2) else h1 - h2)
    else:
        a = InequalityCheck("a", h1 + h2 - hcap(union) - hcap(inter))
        b = InequalityCheck("b", None, "hulls are not nested")
    if disjoint and not nested:
        # hcap(g_{A1}(A2)) = hcap(A1 ∪ A2) − hcap(A1)
        c = InequalityCheck("c", h2 - (hcap(union) - h1))
    else:
        c = InequalityCheck("c", None, "hulls are not disjoint")
    log.debug("%s hulls: hcap %.6g, %.6g (union %.6g)", relation, h1, h2, cache.get(union, float("nan")))
    return CapacityReport(relation, (a, b, c))


def c_constant_ratios(
    theta1: SlitCurve, theta2: SlitCurve, trials: int = 200, seed: Optional[int] = None
) -> np.ndarray:
    """Sampled ratios of joint to own capacity growth of Θ₁ next to Θ₂.

    Sub-slits are vertex prefixes of Θ₁; a = 0 stands for the empty prefix.
    Samples whose own capacity difference is below 1e-12 are dropped.
    """
    if polyline_distance(theta1.points, theta2.points) <= 0:
        raise HypothesisNotMetError("the two slits must have disjoint closures")
    seed = get_settings().default_seed if seed is None else seed
    pts1 = peel_points(theta1)
    solo = GrowthEngine([pts1])
    joint = GrowthEngine([peel_points(theta2), pts1])
    while not joint.exhausted(0):
        joint.absorb_next(0)
    base = joint.capacity
    own = np.zeros(len(pts1))
    mapped = np.zeros(len(pts1))
    for k in range(1, len(pts1)):
        own[k] = own[k - 1] + solo.absorb_next(0)
        joint.absorb_next(1)
        mapped[k] = joint.capacity - base

    rng = np.random.default_rng(seed)
    pairs = np.sort(np.array([rng.choice(len(pts1), size=2, replace=False) for _ in range(trials)]), axis=1)
    den = own[pairs[:, 1]] - own[pairs[:, 0]]
    keep = den >= 1e-12
    return (mapped[pairs[keep, 1]] - mapped[pairs[keep, 0]]) / den[keep]


def c_constant_probe(
    theta1: SlitCurve, theta2: SlitCurve, trials: int = 200, seed: Optional[int] = None
) -> float:
    """Smallest sampled ratio; a witness from above for the true infimum."""
    ratios = c_constant_ratios(theta1, theta2, trials, seed)
    best = float(ratios.min()) if len(ratios) else float("inf")
    log.info("c_constant_probe: min ratio %.6g over %d pairs", best, len(ratios))
    return best


# ---------------------------------------------------------------------------
# boundary behaviour


def check_boundary_expansion(m: MultiSlit, samples: int = 5) -> CapacityReport:
    """Expansion outside the base-point hull, non-expansion in gaps, monotonicity."""
    chain = hull_chain(m)
    bases = np.sort(m.bases)
    diam = max(m.diameter, m.top)
    offsets = diam * np.geomspace(0.05, 4.0, samples)
    checks = []
    left = bases[0] - offsets
    right = bases[-1] + offsets
    g_left = chain.evaluate(left + 0j, strict=False).real
    g_right = chain.evaluate(right + 0j, strict=False).real
    checks.append(InequalityCheck("expand_left", float(np.min(left - g_left))))
    checks.append(InequalityCheck("expand_right", float(np.min(g_right - right))))
    g_out = np.concatenate([g_left[::-1], g_right])
    checks.append(InequalityCheck("monotone_outside", float(min(np.diff(g_out[:samples]).min(), np.diff(g_out[samples:]).min()))))
    for k, (p, q) in enumerate(zip(bases[:-1], bases[1:])):
        xs = p + (q - p) * np.linspace(0.1, 0.9, samples)
        g = chain.evaluate(xs + 0j, strict=False).real
        gaps = np.diff(xs) - np.diff(g)
        checks.append(InequalityCheck(f"contract_gap_{k}", float(gaps.min())))
        checks.append(InequalityCheck(f"monotone_gap_{k}", float(np.diff(g).min())))
    return CapacityReport("boundary", tuple(checks))


@dataclass(frozen=True)
class SeparationBound:
    gap: float
    lipschitz: float
    lower: float
    upper: float


def separation_bound(m: MultiSlit, chain: Optional[ConformalChain] = None) -> SeparationBound:
    """Image gap g⁻(p₂) − g⁺(p₁) of the two base points and the driving range."""
    if m.n != 2:
        raise IncompatibleInputsError("separation_bound needs exactly two slits")
    chain = chain or hull_chain(m)
    p1, p2 = np.sort(m.bases)
    gap = boundary_images(chain, p2, "left") - boundary_images(chain, p1, "right")
    lower = boundary_images(chain, p1, "left")
    upper = boundary_images(chain, p2, "right")
    return SeparationBound(float(gap), float(1.0 / gap) if gap > 0 else float("inf"), float(lower), float(upper))


def continuity_modulus(values: np.ndarray, dt: float, delta: float) -> float:
    """sup |U(t) − U(s)| over sample pairs with |t − s| ≤ delta, max over rows."""
    values = np.atleast_2d(values)
    lag = int(np.floor(delta / dt + 1e-9))
    best = 0.0
    for k in range(1, min(lag, values.shape[1] - 1) + 1):
        best = max(best, float(np.abs(values[:, k:] - values[:, :-k]).max()))
    return best
