import numpy as np
import pytest

from app.errors import IncompatibleInputsError, InvalidWeightsError, RefineNeededError
from app.services.forward import (
    DrivingRecord,
    caratheodory_distance,
    far_probes,
    oscillating_weights,
    solve_forward,
    trace_hulls,
    trace_tips,
)
from app.services.capacity import hcap_chain
from app.services.geometry import multislit_hausdorff, MultiSlit, vertical_slit
from app.services.slitmaps import ConformalChain, map_out_vertical


def constant_record(T, values, weights, samples=101, interpolation="linear"):
    U = np.tile(np.asarray(values, dtype=float)[:, None], (1, samples))
    return DrivingRecord.from_arrays(T, U, weights, interpolation)


def test_zero_driving_closed_form():
    # g_t(z) = sqrt(z² + 4t); the hull at T = 1 is [0, 2i]
    record = constant_record(1.0, [0.0], [1.0], samples=1001)
    probes = np.array([3j, 4j, 1 + 1j])
    out = solve_forward(record, probes)
    assert np.abs(out.probe_outputs - probes * np.sqrt(1 + 4 / probes**2)).max() <= 1e-6
    assert abs(out.probe_outputs[0] - 1j * np.sqrt(5)) <= 1e-6
    assert out.survived.all()


def test_probe_on_the_slit_escapes():
    record = constant_record(1.0, [0.0], [1.0])
    out = solve_forward(record, [1j, 3j])
    assert out.escaped[0] == pytest.approx(0.25, abs=1e-6)
    assert np.isnan(out.probe_outputs[0])
    assert out.survived.tolist() == [False, True]


def test_symmetric_pair_keeps_the_imaginary_axis():
    record = constant_record(0.5, [-1.0, 1.0], [0.5, 0.5])
    out = solve_forward(record, [2j])
    assert abs(out.probe_outputs[0].real) < 1e-10
    assert 0 < out.probe_outputs[0].imag < 2.0


def test_step_record_matches_its_chain():
    chain = ConformalChain(tuple(map_out_vertical(u, 0.01) for u in (0.0, 0.1, -0.05, 0.2)))
    record = DrivingRecord.from_chain(chain)
    assert record.interpolation == "step"
    assert record.T == pytest.approx(0.02)
    probes = np.array([2j, 1 + 1j, -3 + 0.5j])
    out = solve_forward(record, probes)
    assert out.probe_outputs == pytest.approx(chain.evaluate(probes), abs=1e-12)


def test_coarse_grid_needs_refinement():
    record = DrivingRecord.from_arrays(1.0, np.array([[0.0, 5.0]]), [1.0])
    with pytest.raises(RefineNeededError):
        solve_forward(record, [1j])


def test_probes_must_not_lie_below_the_axis():
    with pytest.raises(IncompatibleInputsError):
        solve_forward(constant_record(1.0, [0.0], [1.0]), [1 - 1j])


def test_weight_rows_are_validated():
    U = np.zeros((2, 3))
    with pytest.raises(InvalidWeightsError):
        DrivingRecord.from_arrays(1.0, U, np.array([[0.5, 0.6]] * 3))
    with pytest.raises(IncompatibleInputsError):
        DrivingRecord.from_arrays(1.0, U, np.array([[0.5, 0.5]] * 2))


def test_oscillating_weights():
    rows = oscillating_weights(np.linspace(0.0, 1.0, 9), 0.25)
    assert rows[:, 0].tolist() == [1, 0, 1, 0, 1, 0, 1, 0, 1]
    assert (rows.sum(axis=1) == 1).all()


def test_far_probes():
    probes = far_probes(2.0, centre=1.0)
    assert len(probes) == 32
    assert (probes.imag > 0).all()
    assert sorted(set(np.round(np.abs(probes - 1.0), 9))) == [4.0, 8.0]


def test_constant_driving_traces_a_vertical_slit():
    record = constant_record(0.25, [0.3], [1.0])
    result = trace_tips(record)
    assert result.tips[0, -1] == pytest.approx(0.3 + 1j, abs=1e-9)
    hulls = trace_hulls(record)
    assert multislit_hausdorff(hulls, MultiSlit.of(vertical_slit(0.3, 1.0))) < 1e-3


def test_step_record_traces_exactly():
    chain = ConformalChain(tuple(map_out_vertical(0.0, 0.01) for _ in range(4)))
    result = trace_tips(DrivingRecord.from_chain(chain))
    assert result.tolerance == 0.0
    assert result.tips[0, -1] == pytest.approx(np.sqrt(0.08) * 1j)


def test_caratheodory_distance():
    a = solve_forward(constant_record(0.5, [0.0], [1.0]), far_probes(1.0))
    b = solve_forward(constant_record(0.5, [0.1], [1.0]), far_probes(1.0))
    assert caratheodory_distance(a, a) == 0.0
    assert 0 < caratheodory_distance(a, b) < 0.2
    other = solve_forward(constant_record(0.5, [0.0], [1.0]), far_probes(2.0))
    with pytest.raises(IncompatibleInputsError):
        caratheodory_distance(a, other)


def test_forward_capacity_is_twice_the_time():
    record = constant_record(0.5, [-1.0, 1.0], [0.5, 0.5], samples=401)
    z = 30j
    out = solve_forward(record, [z]).probe_outputs[0]
    assert ((out - z) * z).real == pytest.approx(2 * record.T, rel=1e-2)
    assert hcap_chain(trace_hulls(record)).value == pytest.approx(2 * record.T, rel=2e-2)

    chain = ConformalChain(tuple(map_out_vertical(0.0, 0.01) for _ in range(4)))
    exact = DrivingRecord.from_chain(chain)
    assert hcap_chain(trace_hulls(exact)).value == pytest.approx(2 * exact.T, rel=1e-9)


@pytest.mark.slow
def test_oscillating_weights_converge_to_constant_weights():
    samples = 513
    T = 1.0
    U = np.tile(np.array([[-1.0], [1.0]]), (1, samples))
    probes = far_probes(2.0)
    constant = solve_forward(DrivingRecord.from_arrays(T, U, [0.5, 0.5]), probes)
    times = np.linspace(0.0, T, samples)
    distances = []
    for k in range(2, 8):
        rows = oscillating_weights(times, 2.0**-k)
        flow = solve_forward(DrivingRecord.from_arrays(T, U, rows, "step"), probes)
        distances.append(caratheodory_distance(flow, constant))
    assert all(a > b for a, b in zip(distances, distances[1:])), distances
