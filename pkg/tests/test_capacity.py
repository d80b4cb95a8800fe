import numpy as np
import pytest

from app.errors import HypothesisNotMetError, IncompatibleInputsError
from app.services.capacity import (
    c_constant_probe,
    c_constant_ratios,
    check_boundary_expansion,
    check_capacity_inequalities,
    continuity_modulus,
    hcap_chain,
    hcap_mc,
    separation_bound,
)
from app.services.geometry import MultiSlit, SlitCurve, affine_map, vertical_slit
from app.services.verify import random_slit_pair


@pytest.mark.parametrize("height", [0.5, 1.0, 2.0])
def test_chain_capacity_of_vertical_slit(height):
    est = hcap_chain(MultiSlit.of(vertical_slit(0.0, height)))
    assert est.method == "chain"
    assert est.value == pytest.approx(height**2 / 2, rel=1e-6)


def test_chain_capacity_scales_quadratically(vertical_pair):
    base = hcap_chain(vertical_pair).value
    moved = hcap_chain(affine_map(vertical_pair, 2.0, 3.0)).value
    assert moved == pytest.approx(4 * base, rel=1e-9)


def test_pair_capacity_is_subadditive(mirror_pair):
    single = hcap_chain(MultiSlit.of(mirror_pair.slits[0])).value
    both = hcap_chain(mirror_pair).value
    assert single < both < 2 * single


def _sub_hulls(m, k):
    s, t = m.slits
    s_k, t_k = SlitCurve(s.points[:k]), SlitCurve(t.points[:k])
    return {
        "disjoint": (MultiSlit.of(s), MultiSlit.of(t)),
        "nested": (MultiSlit.of(s_k), MultiSlit.of(s)),
        "crossed": (MultiSlit.of(s, t_k), MultiSlit.of(s_k, t)),
    }


def test_inequalities_on_random_pairs(random_pairs, rng):
    for m in random_pairs:
        for relation, (a1, a2) in _sub_hulls(m, int(rng.integers(2, len(m.slits[0])))).items():
            report = check_capacity_inequalities(a1, a2)
            assert report.relation == relation
            assert report.passed, report


def test_crossed_sub_hulls_check_subadditivity(random_pairs):
    a1, a2 = _sub_hulls(random_pairs[0], 3)["crossed"]
    report = check_capacity_inequalities(a1, a2)
    a, b, c = report.checks
    assert a.skipped is None
    assert a.slack > 0
    assert b.skipped and c.skipped


def test_nested_hulls_check_monotonicity(random_pairs):
    a1, a2 = _sub_hulls(random_pairs[0], 2)["nested"]
    a, b, c = check_capacity_inequalities(a1, a2).checks
    assert a.skipped and c.skipped
    assert b.slack > 0
    _, b_swapped, _ = check_capacity_inequalities(a2, a1).checks
    assert b_swapped.slack == pytest.approx(b.slack)


def test_disjoint_hulls_mapped_capacity(random_pairs):
    a1, a2 = _sub_hulls(random_pairs[0], 2)["disjoint"]
    a, b, c = check_capacity_inequalities(a1, a2).checks
    assert b.skipped
    assert c.slack > 0
    assert a.slack == pytest.approx(c.slack)


@pytest.mark.slow
def test_inequalities_on_hundred_random_pairs():
    rng = np.random.default_rng(7)
    worst = np.inf
    for _ in range(100):
        m = random_slit_pair(rng)
        for a1, a2 in _sub_hulls(m, int(rng.integers(2, len(m.slits[0])))).values():
            worst = min(worst, check_capacity_inequalities(a1, a2).min_slack)
    assert worst >= -1e-8


def test_overlapping_hulls_skip_every_check():
    a = MultiSlit.of(vertical_slit(0.0, 1.0))
    b = MultiSlit.of(SlitCurve(np.array([-0.5 + 0j, 0.5 + 0.5j])))
    report = check_capacity_inequalities(a, b)
    assert report.relation == "overlapping"
    assert all(c.skipped for c in report.checks)
    assert report.passed


def test_c_constant_is_positive(random_pairs):
    for m in random_pairs[:3]:
        assert c_constant_probe(*m.slits, trials=50) > 0


def test_c_constant_ratios_never_exceed_one(random_pairs):
    for m in random_pairs[:3]:
        ratios = c_constant_ratios(*m.slits, trials=50)
        assert len(ratios) > 0
        assert ratios.max() <= 1 + 1e-8


@pytest.mark.parametrize("distance", [1e4, 1e6])
def test_c_constant_of_far_pair_is_one(v1, distance):
    assert c_constant_probe(v1, vertical_slit(distance, 1.0), trials=50) == pytest.approx(1.0, abs=1e-3)


def test_c_constant_needs_disjoint_slits(v1):
    with pytest.raises(HypothesisNotMetError):
        c_constant_probe(v1, SlitCurve(np.array([-0.5 + 0j, 0.5 + 0.5j])))


def test_boundary_expansion(vertical_pair):
    report = check_boundary_expansion(vertical_pair)
    assert report.passed, report


def test_separation_bound_of_mirror_pair(mirror_pair):
    bound = separation_bound(mirror_pair)
    assert bound.gap > 0
    assert bound.lipschitz == pytest.approx(1 / bound.gap)
    assert bound.lower == pytest.approx(-bound.upper, abs=1e-3)
    assert bound.lower < -1.0


def test_separation_bound_needs_two_slits(v1):
    with pytest.raises(IncompatibleInputsError):
        separation_bound(MultiSlit.of(v1))


def test_continuity_modulus_of_a_line():
    values = np.linspace(0.0, 1.0, 11)
    assert continuity_modulus(values, 0.1, 0.3) == pytest.approx(0.3)


def test_montecarlo_needs_enough_walkers(v1):
    with pytest.raises(IncompatibleInputsError):
        hcap_mc(MultiSlit.of(v1), walkers=500)


def test_montecarlo_is_reproducible(v1):
    m = MultiSlit.of(v1)
    a = hcap_mc(m, walkers=2000, seed=7)
    b = hcap_mc(m, walkers=2000, seed=7)
    assert a.value == b.value
    assert a.stderr == b.stderr


@pytest.mark.slow
def test_montecarlo_matches_vertical_slit(v1):
    est = hcap_mc(MultiSlit.of(v1), walkers=100_000, seed=20240501)
    assert est.method == "montecarlo"
    assert est.stderr <= 0.02
    assert abs(est.value - 0.5) <= 3 * est.stderr


def test_montecarlo_reports_height_bias(v1):
    est = hcap_mc(MultiSlit.of(v1), walkers=2000, seed=7)
    assert 0 < est.diagnostics["height_bias"] < 1e-3
    assert est.stderr >= est.diagnostics["height_bias"]


@pytest.mark.slow
def test_montecarlo_matches_chain_on_random_pairs():
    rng = np.random.default_rng(11)
    for k in range(5):
        m = random_slit_pair(rng)
        assert np.abs(m.points).max() <= 3.0
        chain = hcap_chain(m).value
        est = hcap_mc(m, walkers=50_000, seed=k)
        assert abs(est.value - chain) <= 3 * est.stderr, (k, est, chain)
