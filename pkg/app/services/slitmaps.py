"""Elementary slit map-outs and their compositions.

An ``ElementaryStep`` removes one straight micro-slit of half-plane capacity
``dcap`` based at ``anchor`` and renormalizes hydrodynamically. A
``ConformalChain`` is the composition step_m ∘ … ∘ step_1 and stands for the
mapping-out function g_A of the union of all micro-slits.

All square roots and logarithms use the principal branch; points are kept in
the closed upper half-plane after every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from app.config import get_settings
from app.errors import (
    AmbiguousBoundaryError,
    FitFailureError,
    InvalidCapacityError,
    NearSingularityError,
    PointSwallowedError,
)

log = logging.getLogger(__name__)

VERTICAL = 0.5


def _upper(z: np.ndarray) -> np.ndarray:
    """Force a +0.0 imaginary part on points at or (by roundoff) below ℝ."""
    im = np.where(z.imag > 0.0, z.imag, 0.0)
    return z.real + 1j * im


def tilted_capacity(length: float, tilt: float) -> float:
    """Half-plane capacity of a straight segment of given length at angle tilt·π."""
    a = tilt
    return 0.5 * length**2 * a ** (1 - 2 * a) * (1 - a) ** (2 * a - 1)


@dataclass(frozen=True)
class ElementaryStep:
    """Map-out of a straight micro-slit from ``anchor`` at angle ``tilt``·π."""

    anchor: float
    dcap: float
    tilt: float = VERTICAL

    def __post_init__(self):
        if not self.dcap > 0:
            raise InvalidCapacityError(f"capacity increment must be positive, got {self.dcap!r}")
        if not 0.0 < self.tilt < 1.0:
            raise InvalidCapacityError(f"tilt must lie in (0, 1), got {self.tilt!r}")

    @property
    def vertical(self) -> bool:
        return abs(self.tilt - VERTICAL) < 1e-12

    @property
    def _ab(self) -> tuple[float, float]:
        t = self.tilt
        return np.sqrt(2 * self.dcap * (1 - t) / t), np.sqrt(2 * self.dcap * t / (1 - t))

    @property
    def length(self) -> float:
        if self.vertical:
            return float(np.sqrt(2 * self.dcap))
        a, _ = self._ab
        t = self.tilt
        return float(a * (t / (1 - t)) ** t)

    @property
    def tip(self) -> complex:
        return self.anchor + self.length * np.exp(1j * np.pi * self.tilt)

    @property
    def tip_image(self) -> float:
        """Where the tip lands; the driving value after this step."""
        if self.vertical:
            return self.anchor
        a, b = self._ab
        return float(self.anchor + (1 - self.tilt) * a - self.tilt * b)

    # -- evaluation ---------------------------------------------------------

    def on_locus(self, z: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
        """Mask of points lying on the removed micro-slit (base included)."""
        zeta = np.asarray(z, dtype=complex) - self.anchor
        direction = np.exp(1j * np.pi * self.tilt)
        along = np.real(zeta * np.conj(direction))
        across = np.imag(zeta * np.conj(direction))
        tol = rtol * self.length
        return (np.abs(across) <= tol) & (along >= -tol) & (along < self.length * (1 - rtol))

    def displacement(self, z: np.ndarray) -> np.ndarray:
        """g(z) − z, evaluated without cancellation for large |z|."""
        z = np.asarray(z, dtype=complex)
        if not self.vertical:
            return self.forward(z) - z
        zeta = z - self.anchor
        with np.errstate(divide="ignore", invalid="ignore"):
            w = (2 * self.dcap) / zeta**2
            d = zeta * w / (1 + np.sqrt(1 + w))
        return d

    def forward(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.vertical:
            zeta = _upper(z - self.anchor)
            with np.errstate(divide="ignore", invalid="ignore"):
                w = (2 * self.dcap) / zeta**2
                g = self.anchor + zeta + zeta * w / (1 + np.sqrt(1 + w))
            return _upper(np.where(zeta == 0, self.anchor, g))
        return self.anchor + _tilted_forward(_upper(z - self.anchor), *self._ab, self.tilt)

    def inverse(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        zeta = _upper(w - self.anchor)
        if self.vertical:
            with np.errstate(divide="ignore", invalid="ignore"):
                v = (2 * self.dcap) / zeta**2
                z = zeta - zeta * v / (1 + np.sqrt(1 - v))
            z = np.where(z.imag < 0, np.conj(z), z)
            z = np.where(zeta == 0, 1j * np.sqrt(2 * self.dcap), z)
            return self.anchor + z
        a, b = self._ab
        t = self.tilt
        z = np.exp(t * np.log(zeta - a) + (1 - t) * np.log(zeta + b))
        return self.anchor + _upper(z)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        zeta = _upper(z - self.anchor)
        if self.vertical:
            with np.errstate(divide="ignore", invalid="ignore"):
                return 1.0 / np.sqrt(1 + (2 * self.dcap) / zeta**2)
        a, b = self._ab
        t = self.tilt
        w = _tilted_forward(zeta, a, b, t)
        # f'(w) = f(w) · (t/(w−a) + (1−t)/(w+b)) and f(w) = zeta
        return 1.0 / (zeta * (t / (w - a) + (1 - t) / (w + b)))


def _tilted_forward(zeta: np.ndarray, a: float, b: float, t: float) -> np.ndarray:
    """Solve (w−a)^t (w+b)^(1−t) = zeta for w in the closed upper half-plane.

    Newton iteration on the logarithm of the equation, started from the
    vertical map of equal capacity and kept in the closed upper half-plane.
    """
    settings = get_settings()
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    c = t * a * a / (2 * (1 - t))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = zeta * np.sqrt(1 + 2 * c / zeta**2)
    w = np.where(zeta == 0, (1 - t) * a - t * b, w)
    real = zeta.imag == 0
    w = np.where(real & (zeta.real > 0), np.maximum(w.real, a * (1 + 1e-9)) + 0j, w)
    w = np.where(real & (zeta.real < 0), np.minimum(w.real, -b * (1 + 1e-9)) + 0j, w)
    done = (zeta == 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        target = np.log(np.where(done, 1.0, zeta))

        def residual(w):
            return t * np.log(w - a) + (1 - t) * np.log(w + b) - target

        r = np.where(done, 0.0, residual(w))
        for _ in range(settings.newton_max_iter):
            active = ~done & (np.abs(r) > 1e-14)
            if not active.any():
                break
            dw = r / (t / (w - a) + (1 - t) / (w + b))
            lam = np.ones(w.shape)
            for _ in range(30):
                trial = _upper(w - lam * dw)
                rt = residual(trial)
                ok = np.abs(rt) < np.abs(r)
                if np.all(ok | ~active):
                    break
                lam = np.where(ok | ~active, lam, lam / 2)
            w = np.where(active, trial, w)
            r = np.where(active, rt, r)
    bad = ~done & ~(np.abs(r) <= 1e-10)
    if bad.any():
        raise FitFailureError(
            "tilted step inversion did not converge",
            {"points": [complex(v) for v in zeta[bad][:5]], "tilt": t},
        )
    return w


def map_out_vertical(u: float, dcap: float) -> ElementaryStep:
    """Vertical micro-slit of height sqrt(2·dcap) at u: z ↦ u + sqrt((z−u)² + 2·dcap)."""
    return ElementaryStep(float(u), float(dcap), VERTICAL)


def map_out_tilted(u: float, dcap: float, tilt: float) -> ElementaryStep:
    return ElementaryStep(float(u), float(dcap), float(tilt))


@dataclass(frozen=True)
class Foothold:
    """Where slit ``slit`` first touches ℝ inside a chain.

    ``base`` is the original base point; ``step`` indexes the first step that
    absorbs part of that slit. Boundary images of the base are taken at that
    step's anchor, in the coordinates the step acts on.
    """

    slit: int
    base: float
    step: int


@dataclass(frozen=True, eq=False)
class ConformalChain:
    """Composition of elementary steps, applied first to last."""

    steps: tuple[ElementaryStep, ...] = ()
    footholds: tuple[Foothold, ...] = ()
    total_hcap: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "footholds", tuple(self.footholds))
        object.__setattr__(self, "total_hcap", float(sum(s.dcap for s in self.steps)))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def scale(self) -> float:
        return float(np.sqrt(2 * self.total_hcap)) if self.steps else 1.0

    @property
    def anchors(self) -> np.ndarray:
        return np.array([s.anchor for s in self.steps])

    @property
    def dcaps(self) -> np.ndarray:
        return np.array([s.dcap for s in self.steps])

    def prefix(self, k: int) -> "ConformalChain":
        return ConformalChain(self.steps[:k], tuple(f for f in self.footholds if f.step < k))

    def then(self, other: "ConformalChain") -> "ConformalChain":
        """This chain followed by ``other``."""
        shift = len(self.steps)
        moved = tuple(Foothold(f.slit, f.base, f.step + shift) for f in other.footholds)
        return ConformalChain(self.steps + other.steps, self.footholds + moved)

    def foothold_at(self, x: float, rtol: float = 1e-9) -> Optional[Foothold]:
        for f in self.footholds:
            if abs(f.base - x) <= rtol * max(1.0, self.scale, abs(x)):
                return f
        return None

    def evaluate(self, z, start: int = 0, stop: Optional[int] = None, strict: bool = True):
        """Apply steps[start:stop] to z (scalar or array)."""
        scalar = np.isscalar(z)
        out = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
        for k, step in enumerate(self.steps[start:stop], start=start):
            if strict:
                hit = step.on_locus(out) & (out.imag > 0)
                if hit.any():
                    raise PointSwallowedError(
                        f"point lies on the hull (step {k})",
                        {"step": k, "anchor": step.anchor, "points": [complex(v) for v in out[hit][:5]]},
                    )
            out = step.forward(out)
        return complex(out[0]) if scalar else out

    def invert(self, w):
        scalar = np.isscalar(w)
        out = np.atleast_1d(np.asarray(w, dtype=complex)).copy()
        for step in reversed(self.steps):
            out = step.inverse(out)
        return complex(out[0]) if scalar else out

    def displacement(self, z):
        """g(z) − z as a sum of per-step displacements."""
        scalar = np.isscalar(z)
        cur = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
        total = np.zeros_like(cur)
        for step in self.steps:
            d = step.displacement(cur)
            total = total + d
            cur = cur + d
        return complex(total[0]) if scalar else total

    def derivative(self, z):
        """g'(z) by the chain rule."""
        scalar = np.isscalar(z)
        cur = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
        prod = np.ones_like(cur)
        for step in self.steps:
            prod = prod * step.derivative(cur)
            cur = step.forward(cur)
        return complex(prod[0]) if scalar else prod

    def real_orbit(self, x: float) -> tuple[np.ndarray, np.ndarray]:
        """Images of a real point before each step and its offsets from the anchors."""
        cur = complex(x)
        images = np.empty(len(self.steps))
        for k, step in enumerate(self.steps):
            images[k] = cur.real
            cur = complex(step.forward(np.array([cur]))[0])
        return images, images - self.anchors if self.steps else images


# ---------------------------------------------------------------------------
# operations


def forward_eval(chain: ConformalChain, z: complex) -> complex:
    """g_A(z); raises PointSwallowedError for points on the hull."""
    return chain.evaluate(z)


def inverse_eval(chain: ConformalChain, w: complex) -> complex:
    """h_A(w) = g_A⁻¹(w)."""
    return chain.invert(w)


def boundary_images(chain: ConformalChain, x: float, side: Optional[str] = None) -> float:
    """g^−(x) (side="left") or g^+(x) (side="right").

    Approaches along x ± ε and x ± 2ε on ℝ and extrapolates ε → 0. Base
    points registered as footholds are approached at the anchor of the first
    step that removes part of that slit.
    """
    settings = get_settings()
    foothold = chain.foothold_at(x)
    start, local = 0, float(x)
    if foothold is not None:
        start, local = foothold.step, chain.steps[foothold.step].anchor
    if side is None:
        if foothold is not None:
            raise AmbiguousBoundaryError(
                f"{x!r} is a base point of the hull; pass side='left' or 'right'",
                {"x": x, "slit": foothold.slit},
            )
        return float(chain.evaluate(complex(x)).real)
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    sign = -1.0 if side == "left" else 1.0
    eps = settings.boundary_eps * chain.scale
    g1 = chain.evaluate(complex(local + sign * eps), start=start, strict=False).real
    g2 = chain.evaluate(complex(local + 2 * sign * eps), start=start, strict=False).real
    return float(2 * g1 - g2)


def derivative_at_boundary(chain: ConformalChain, x: float, method: str = "central") -> float:
    """g_A'(x) at a real point off the hull.

    ``central`` uses central differences with Richardson extrapolation and
    step halving; ``complex`` uses the complex-step formula Im g(x+iδ)/δ;
    ``analytic`` multiplies the per-step derivatives.
    """
    settings = get_settings()
    if not chain.steps:
        return 1.0
    scale = chain.scale
    images, offsets = chain.real_orbit(x)
    h_min = settings.fd_min_step * scale
    distance = float(np.min(np.abs(offsets)))
    if distance < 10 * h_min:
        raise NearSingularityError(
            f"{x!r} is too close to the hull for differentiation",
            {"x": x, "distance": distance, "min_step": h_min},
        )
    if method == "analytic":
        return float(chain.derivative(complex(x)).real)
    if method == "complex":
        delta = 1e-20 * scale
        return float(chain.evaluate(complex(x, delta), strict=False).imag / delta)
    if method != "central":
        raise ValueError(f"unknown differentiation method {method!r}")

    signs = np.sign(offsets)

    def crosses(h):
        for y in (x - h, x + h):
            _, off = chain.real_orbit(y)
            if np.any(np.sign(off) != signs):
                return True
        return False

    def central(h):
        g = chain.evaluate(np.array([x - h, x + h], dtype=complex), strict=False).real
        return (g[1] - g[0]) / (2 * h)

    h = min(settings.fd_step * scale, distance / 4)
    while crosses(h):
        h /= 2
        if h < h_min:
            raise NearSingularityError(
                f"difference stencil at {x!r} keeps crossing the hull",
                {"x": x, "step": h},
            )
    previous, best, best_diff = None, None, np.inf
    while h / 2 >= h_min:
        est = (4 * central(h / 2) - central(h)) / 3
        if previous is not None:
            diff = abs(est - previous)
            if diff <= 1e-10 * abs(est):
                return float(est)
            if diff < best_diff:
                best, best_diff = est, diff
            elif diff > 4 * best_diff:
                # roundoff dominates from here on
                return float(best)
        previous = est
        h /= 2
    return float(best if best is not None else previous)


def fit_expansion(
    g: Union[ConformalChain, Callable[[complex], complex]],
    scale: float = 1.0,
    radii: Sequence[float] = (1e3, 1e4),
) -> float:
    """Estimate b in g(z) = z + b/z + … from two probes on the imaginary axis.

    With q(R) = z·(g(z) − z) at z = iR we have q = b + α/R + O(R⁻²), and the
    two-radius combination (R₂q₂ − R₁q₁)/(R₂ − R₁) cancels the α term.
    """
    r1, r2 = (scale * r for r in radii)
    if isinstance(g, ConformalChain):
        disp = g.displacement
    else:
        def disp(z):
            return g(z) - z
    q1 = 1j * r1 * disp(1j * r1)
    q2 = 1j * r2 * disp(1j * r2)
    return float(((r2 * q2 - r1 * q1) / (r2 - r1)).real)
