import numpy as np
import pytest

from app.errors import InvalidScaleError, InvalidWeightsError
from app.services.geometry import (
    MultiSlit,
    SampledFunction,
    SlitCurve,
    WeightVector,
    affine_map,
    densify,
    hausdorff_distance,
    hull_geometry,
    nearest_on_hull,
    polyline_distance,
    resample_by_arclength,
    validate_multislit,
    vertical_slit,
)


def test_slit_curve_properties():
    s = SlitCurve.from_vertices([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert s.base == 0.0
    assert s.tip == 1 + 1j
    assert s.length == pytest.approx(2.0)
    assert s.diameter == pytest.approx(np.sqrt(2))
    assert s.vertices.shape == (3, 2)


def test_points_are_read_only(v1):
    with pytest.raises(ValueError):
        v1.points[0] = 5.0


def test_valid_pair_has_no_violations(mirror_pair):
    assert validate_multislit(mirror_pair).ok
    assert mirror_pair.separation == pytest.approx(2.0)
    assert mirror_pair.centre == 0.0


def test_violations_are_collected():
    crossing = SlitCurve(np.array([0.0, 2j, 1 + 1j, -1 + 1j]))
    floating = SlitCurve(np.array([3 + 0.5j, 3 + 1j]))
    twin = vertical_slit(0.0, 0.5)
    report = validate_multislit(MultiSlit.of(crossing, floating, twin))
    text = " | ".join(report.violations)
    assert not report.ok
    assert "segments 0 and 2 intersect" in text
    assert "base point off" in text
    assert "base points coincide" in text
    assert "closures intersect" in text


def test_repeated_vertex_is_reported():
    s = SlitCurve(np.array([0.0, 1j, 1j, 2j]))
    assert any("coincide" in v for v in validate_multislit(MultiSlit.of(s)).violations)


def test_affine_map_scales_and_shifts(mirror_pair):
    moved = affine_map(mirror_pair, 2.0, 3.0)
    assert moved.bases.tolist() == [1.0, 5.0]
    assert moved.separation == pytest.approx(4.0)


def test_affine_map_rejects_nonpositive_scale(mirror_pair):
    with pytest.raises(InvalidScaleError):
        affine_map(mirror_pair, 0.0, 1.0)


def test_weight_vector_validation():
    assert WeightVector.completing([0.3]).weights.tolist() == pytest.approx([0.3, 0.7])
    with pytest.raises(InvalidWeightsError):
        WeightVector(np.array([0.6, 0.6]))
    with pytest.raises(InvalidWeightsError):
        WeightVector(np.array([1.5, -0.5]))


def test_sampled_function_interpolates():
    f = SampledFunction(0.0, 2.0, np.array([0.0, 1.0, 4.0]))
    assert f.spacing == 1.0
    assert f(1.5) == pytest.approx(2.5)


def test_distances_between_vertical_slits(v1):
    shifted = vertical_slit(0.1, 1.0)
    assert hausdorff_distance(v1.points, shifted.points) == pytest.approx(0.1, abs=1e-12)
    assert polyline_distance(v1.points, vertical_slit(2.0, 1.0).points) == pytest.approx(2.0)


def test_resample_keeps_end_points(bent):
    s = bent.slits[0]
    out = resample_by_arclength(s, 50)
    assert len(out) == 50
    assert out.points[0] == s.points[0]
    assert out.points[-1] == s.points[-1]
    assert out.length == pytest.approx(s.length, rel=1e-2)


def test_crossing_polylines_have_zero_distance(v1):
    across = np.array([-0.5 + 0.5j, 0.5 + 0.5j])
    assert polyline_distance(v1.points, across) == 0.0
    assert polyline_distance(np.array([3 + 0j]), v1.points) == pytest.approx(3.0)


def test_hausdorff_sees_a_bent_tip(v1):
    bent_tip = SlitCurve(np.array([0.0, 0.5j, 0.3 + 1j]))
    assert hausdorff_distance(v1.points, bent_tip.points) == pytest.approx(0.3, abs=1e-2)


def test_densify_keeps_vertices(bent):
    p = bent.slits[0].points
    out = densify(p, 0.05)
    assert np.abs(np.diff(out)).max() <= 0.05 + 1e-12
    for vertex in p:
        assert np.abs(out - vertex).min() < 1e-12


def test_nearest_on_hull(mirror_pair):
    hull = hull_geometry(mirror_pair)
    dist, nearest = nearest_on_hull(np.array([-0.2 + 0.5j, -3 + 2j]), hull)
    assert dist == pytest.approx([0.8, np.sqrt(5.0)])
    assert nearest == pytest.approx([-1 + 0.5j, -1 + 1j])
