import numpy as np
import pytest

from app.errors import BracketError, ExtensionError, IncompatibleInputsError, InvalidMultiSlitError
from app.services.capacity import continuity_modulus, hcap_chain
from app.services.fitter import (
    CFactorTable,
    _bisect,
    agreement,
    bang_bang_level,
    c_factor,
    driving_bounds,
    dynamics_report,
    extend_to_capacity,
    fit,
    fit_bang_bang,
    prepare,
    richardson_lambda,
    sweep_mu,
)
from app.services.forward import trace_hulls
from app.services.geometry import MultiSlit, SlitCurve, affine_map, multislit_hausdorff, vertical_slit
from app.services.inverse import capacity_parametrization, drive_single
from app.services.verify import load_fixture, random_slit_pair


@pytest.fixture(scope="module")
def mirror_setup():
    return prepare(load_fixture("mirror_pair"))


def test_extend_vertical_slit_to_capacity(v1):
    theta = extend_to_capacity(v1, [], 2.0, 0.1)
    # hcap 2 is a vertical segment of height 2
    assert theta.tip == pytest.approx(2j, abs=1e-6)
    assert capacity_parametrization(theta)[0].hcap >= 2.0
    assert theta.points[: len(v1)].tolist() == v1.points.tolist()


def test_extension_not_needed(v1):
    assert extend_to_capacity(v1, [], 0.4, 0.1) is v1


def test_blocked_extension(v1):
    roof = SlitCurve.from_vertices([[-3.0, 0.0], [-3.0, 1.5], [3.0, 1.5]])
    with pytest.raises(ExtensionError) as err:
        extend_to_capacity(v1, [roof], 2.0, 0.1)
    assert err.value.diagnostics["target"] == 2.0


def test_prepare_normalizes(mirror_pair, mirror_setup):
    assert mirror_setup.hcap == pytest.approx(hcap_chain(mirror_pair).value)
    assert mirror_setup.shift == pytest.approx(0.0, abs=1e-12)
    assert mirror_setup.targets[0] == pytest.approx(mirror_setup.targets[1], rel=1e-9)
    assert all(c.hcap >= 2.0 for c in mirror_setup.curves)
    lower, upper = driving_bounds(mirror_setup)
    assert lower < -mirror_setup.scale < mirror_setup.scale < upper


def test_richardson_lambda():
    assert richardson_lambda([0.4, 0.45]) == pytest.approx(0.5)
    assert richardson_lambda([0.4]) is None


def test_bang_bang_level_shapes(mirror_setup):
    level = bang_bang_level(mirror_setup, 3, 0.5, grid=65)
    assert level.driving.T == 1.0
    assert level.driving.U.shape == (2, 65)
    assert level.driving.one_hot
    assert 0.0 < level.x1 < 2.0
    assert level.chain.total_hcap == pytest.approx(2.0, rel=1e-9)


def test_bang_bang_level_rejects_bad_share(mirror_setup):
    with pytest.raises(IncompatibleInputsError):
        bang_bang_level(mirror_setup, 2, 1.5)


def test_sweep_mu_is_monotone(mirror_setup):
    rows = sweep_mu(mirror_setup, 2, points=5)
    assert rows[:, 0].tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert rows[0, 1] == 0.0
    assert rows[-1, 1] == pytest.approx(2.0, rel=1e-6)
    assert np.diff(rows[:, 1]).min() >= -1e-9


def test_c_factor_range(mirror_pair, mirror_setup):
    h = mirror_setup.hcap
    c = c_factor(mirror_pair, 0.1 * h, 0.25 * h, setup=mirror_setup)
    assert 0.0 < c <= 1.0
    # slit 1 alone: nothing of slit 2 has grown yet
    assert c_factor(mirror_pair, 0.5 * h, 0.25 * h, setup=mirror_setup) == pytest.approx(1.0)
    with pytest.raises(IncompatibleInputsError):
        c_factor(mirror_pair, 0.6 * h, 0.25 * h, setup=mirror_setup)


def test_c_factor_table_matches_direct(mirror_pair, mirror_setup):
    table = CFactorTable(mirror_setup, 1e-3)
    assert table.nx == 65
    h = mirror_setup.hcap
    direct = c_factor(mirror_pair, 0.25 * h, 0.5 * h, setup=mirror_setup)
    # normalized: x0 = 0.5, t = 1
    assert table(0.5, 1.0) == pytest.approx(direct, abs=1e-2)
    assert table.filled == 2
    assert table(0.0, 0.0) == 1.0


def test_fit_single_slit(bent):
    (result,) = fit(bent)
    assert result.lam.weights.tolist() == [1.0]
    assert result.method == "single"
    record, _, _ = drive_single(bent.slits[0])
    assert np.abs(result.driving.U - record.U).max() <= 1e-6


def test_fit_rejects_unknown_method(v1):
    with pytest.raises(IncompatibleInputsError):
        fit(MultiSlit.of(v1), "newton")


def test_fit_rejects_invalid_multislit():
    m = MultiSlit.of(vertical_slit(0.0, 1.0), vertical_slit(0.0, 0.5))
    with pytest.raises(InvalidMultiSlitError) as err:
        fit(m)
    assert err.value.violations


@pytest.mark.slow
def test_mirror_fit_both_methods(mirror_pair):
    bb, sh = fit(mirror_pair, "both")
    diam = mirror_pair.diameter
    for result in (bb, sh):
        assert result.lam[0] == pytest.approx(0.5, abs=1e-3)
        assert result.lam.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.abs(result.driving.U[0] + result.driving.U[1]).max() <= 1e-2 * diam
        assert dynamics_report(result).passed
    assert agreement(bb, sh)["lambda_difference"] <= 2e-3


@pytest.mark.slow
def test_mirror_closed_loop(mirror_pair):
    result = fit_bang_bang(mirror_pair)
    traced = trace_hulls(result.driving)
    assert multislit_hausdorff(traced, mirror_pair) <= 1e-2 * mirror_pair.diameter
    assert result.diagnostics["richardson"] is not None
    assert result.residuals.max() <= 1e-3


@pytest.mark.slow
def test_methods_agree_on_asymmetric_pair(vertical_pair):
    bb, sh = fit(vertical_pair, "both")
    report = agreement(bb, sh)
    assert report["lambda_difference"] <= 2e-3
    assert report["driving_distance"] <= 5e-2 * vertical_pair.diameter


@pytest.mark.slow
@pytest.mark.parametrize("r,c", [(2.0, 0.0), (0.5, -3.0), (1.0, 7.0)])
def test_lambda_affine_invariance(vertical_pair, r, c):
    base = fit_bang_bang(vertical_pair, levels=6)
    moved = fit_bang_bang(affine_map(vertical_pair, r, c), levels=6)
    assert moved.lam[0] == pytest.approx(base.lam[0], abs=2e-3)
    assert moved.driving.T == pytest.approx(r**2 * base.driving.T, rel=1e-6)


@pytest.mark.slow
def test_bang_bang_levels_stay_bounded(vertical_pair):
    setup = prepare(vertical_pair)
    lower, upper = driving_bounds(setup)
    moduli = []
    for level in range(3, 9):
        mu = fit_bang_bang(vertical_pair, levels=level, setup=setup).lam[0]
        driving = bang_bang_level(setup, level, mu).driving
        assert driving.U.min() >= lower - 1e-6
        assert driving.U.max() <= upper + 1e-6
        moduli.append(continuity_modulus(driving.U, driving.times[1], 2.0**-7))
    assert max(moduli) <= 0.5 * (upper - lower)
    # refining the schedule never makes the driving rougher at a fixed scale
    assert np.diff(moduli).max() <= 1e-2 * (upper - lower)


@pytest.mark.slow
def test_three_symmetric_slits():
    m = MultiSlit.of(vertical_slit(-1.5, 1.0), vertical_slit(0.0, 1.0), vertical_slit(1.5, 1.0))
    (result,) = fit(m)
    assert result.experimental
    assert result.lam.n == 3
    assert result.lam.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert result.lam[0] == pytest.approx(result.lam[2], abs=1e-2)


def test_c_factor_of_far_pair_is_one():
    m = MultiSlit.of(vertical_slit(0.0, 1.0), vertical_slit(1e4, 1.0))
    setup = prepare(m)
    h = setup.hcap
    assert c_factor(m, 0.25 * h, 0.5 * h, setup=setup) == pytest.approx(1.0, abs=1e-3)
    assert c_factor(m, 0.1 * h, 0.3 * h, setup=setup) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.slow
def test_tiny_second_slit_takes_almost_no_weight():
    # hcap ratio 1e-3 between the two slits
    m = MultiSlit.of(vertical_slit(0.0, 1.0), vertical_slit(3.0, float(np.sqrt(1e-3))))
    (result,) = fit(m)
    assert result.lam[0] >= 0.99


@pytest.mark.slow
def test_bang_bang_dynamics_are_measured(vertical_pair):
    result = fit_bang_bang(vertical_pair, levels=6)
    report = dynamics_report(result)
    assert report.measured
    assert report.rate_tolerance == 1e-2
    assert report.min_rate_ratio is not None
    assert report.passed


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_random_asymmetric_pairs(seed):
    m = random_slit_pair(np.random.default_rng(seed))
    bb, sh = fit(m, "both")
    report = agreement(bb, sh)
    assert report["lambda_difference"] <= 2e-3
    assert report["driving_distance"] <= 5e-2 * m.diameter
    assert report["resolution"] is not None
    for result in (bb, sh):
        traced = trace_hulls(result.driving)
        assert multislit_hausdorff(traced, m) <= 1e-2 * m.diameter


def test_bisection_interpolates_inside_its_bracket():
    found = _bisect(lambda v: 3.0 * v, 1.2, 0.0, 1.0, 1.0 / 64, "linear")
    lo, hi = found.bracket
    assert hi - lo <= 1.0 / 64
    assert lo <= found.root <= hi
    assert found.root == pytest.approx(0.4, abs=1e-12)
    assert found.residual <= 1e-12
    assert found.monotone


def test_bisection_rejects_decreasing_response():
    with pytest.raises(BracketError) as err:
        _bisect(lambda v: -v, 0.5, 0.0, 1.0, 1e-2, "decreasing")
    assert len(err.value.diagnostics["sweep"]) == 21


def test_lenient_bisection_warns_on_decreasing_response(caplog):
    found = _bisect(lambda v: -v, 0.5, 0.0, 1.0, 1e-2, "decreasing", strict=False)
    assert not found.monotone
    assert "not monotone" in caplog.text
