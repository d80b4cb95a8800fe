import numpy as np
import pytest

from app.errors import AmbiguousBoundaryError, InvalidCapacityError, NearSingularityError, PointSwallowedError
from app.services.capacity import hull_chain
from app.services.geometry import MultiSlit
from app.services.slitmaps import (
    ConformalChain,
    ElementaryStep,
    boundary_images,
    derivative_at_boundary,
    fit_expansion,
    forward_eval,
    inverse_eval,
    map_out_tilted,
    map_out_vertical,
    tilted_capacity,
)


def test_vertical_step_closed_form():
    step = map_out_vertical(0.0, 0.5)
    assert step.tip == pytest.approx(1j)
    assert step.tip_image == 0.0
    z = np.array([2j, 0.3 + 0.7j, -2.0 + 0.1j])
    assert step.forward(z) == pytest.approx(z * np.sqrt(1.0 + 1.0 / z**2))
    assert step.inverse(step.forward(z)) == pytest.approx(z)


def test_step_rejects_bad_parameters():
    with pytest.raises(InvalidCapacityError):
        ElementaryStep(0.0, 0.0)
    with pytest.raises(InvalidCapacityError):
        ElementaryStep(0.0, 0.1, 1.2)


def test_tilted_capacity_reduces_to_vertical():
    assert tilted_capacity(2.0, 0.5) == pytest.approx(2.0)


def test_tilted_step_round_trip_and_capacity():
    step = map_out_tilted(0.2, 0.1, 0.35)
    assert tilted_capacity(step.length, step.tilt) == pytest.approx(0.1)
    z = np.array([1.0 + 1.0j, -0.5 + 0.3j, 3j])
    assert step.inverse(step.forward(z)) == pytest.approx(z, abs=1e-10)
    chain = ConformalChain((step,))
    assert fit_expansion(chain, radii=(1e2, 1e3)) == pytest.approx(0.1, rel=1e-3)


def test_chain_composition_and_inverse():
    chain = ConformalChain(tuple(map_out_vertical(u, 0.02) for u in (0.0, 0.1, -0.05)))
    assert chain.total_hcap == pytest.approx(0.06)
    z = 0.4 + 0.9j
    w = forward_eval(chain, z)
    assert inverse_eval(chain, w) == pytest.approx(z)
    assert chain.displacement(z) == pytest.approx(w - z)


def test_expansion_recovers_capacity():
    chain = ConformalChain(tuple(map_out_vertical(u, 0.1) for u in (0.0, 0.3)))
    assert fit_expansion(chain) == pytest.approx(0.2, rel=1e-6)


def test_point_on_hull_is_swallowed():
    chain = ConformalChain((map_out_vertical(0.0, 0.5),))
    with pytest.raises(PointSwallowedError):
        forward_eval(chain, 0.5j)


def test_boundary_images_of_vertical_slit(v1):
    chain = hull_chain(MultiSlit.of(v1))
    assert boundary_images(chain, 0.0, "left") == pytest.approx(-1.0, abs=1e-8)
    assert boundary_images(chain, 0.0, "right") == pytest.approx(1.0, abs=1e-8)
    assert boundary_images(chain, 2.0) == pytest.approx(np.sqrt(5.0))
    with pytest.raises(AmbiguousBoundaryError):
        boundary_images(chain, 0.0)


@pytest.mark.parametrize("method", ["central", "complex", "analytic"])
def test_boundary_derivative(v1, method):
    chain = hull_chain(MultiSlit.of(v1))
    assert derivative_at_boundary(chain, 2.0, method) == pytest.approx(2.0 / np.sqrt(5.0), rel=1e-6)


def test_boundary_derivative_at_the_base_is_singular(v1):
    chain = hull_chain(MultiSlit.of(v1))
    with pytest.raises(NearSingularityError) as exc:
        derivative_at_boundary(chain, 1e-12)
    assert exc.value.diagnostics["distance"] < exc.value.diagnostics["min_step"] * 10
