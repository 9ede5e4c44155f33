import numpy as np
import pytest
from scipy.integrate import simpson, solve_ivp

from finco.contour import TimeContour, make_contour
from finco.dynamics import (
    InitialGaussian,
    StepperOptions,
    TrajectoryRecord,
    derivative,
    ggwpd_variables,
    init_from_gaussian,
    initial_record,
    propagate,
    propagate_manifold,
)
from finco.errors import InputDomainError, TrajectoryFlag


def _run(g, points, model, t_final, family="real", checkpoints=(), opts=StepperOptions()):
    state0 = init_from_gaussian(g, points, 0.5)
    return propagate(state0, make_contour(family, t_final), model, opts, 0.5, checkpoints)


def test_initial_state(revival_gaussian):
    state = init_from_gaussian(revival_gaussian, [9.342, 10.342], 0.5)
    assert state.pt[0] == 0
    assert state.pt[1] == pytest.approx(1j)
    assert np.allclose(state.s2, 1j)
    assert state.s0_cl[0] == pytest.approx(-0.25j * np.log(1 / np.pi))
    assert np.all(state.z == 1)
    assert np.allclose(state.det_m, 1.0)
    assert np.all(state.arg_d == 0)
    assert np.all(state.valid)


def test_gaussian_needs_positive_width():
    with pytest.raises(InputDomainError):
        InitialGaussian(0.0, 1.0, 0.0)


def test_ggwpd_variables_at_start(revival_gaussian):
    state = init_from_gaussian(revival_gaussian, [9.342], 0.5)
    c, alpha = ggwpd_variables(state)
    assert alpha[0] == pytest.approx(revival_gaussian.gamma0)
    assert np.exp(c[0]) == pytest.approx(np.pi**-0.25)


def test_derivative_examples(free_model, harmonic_model, morse_model):
    g = InitialGaussian(0.5, 0.0, 0.0)
    state = init_from_gaussian(g, [1.0], 0.5)
    rates = derivative(state, free_model, 0.5)
    assert rates.pt[0] == 0
    assert rates.z[0] == state.pz[0]
    assert rates.pz[0] == 0
    assert derivative(state, harmonic_model, 0.5).pt[0] == pytest.approx(-1.0)
    at_minimum = init_from_gaussian(g, [0.0], 0.5)
    assert abs(derivative(at_minimum, morse_model, 0.5).pt[0]) < 1e-14


def test_free_particle_closed_form(free_model):
    g = InitialGaussian(0.5, 0.0, 1.0)
    record = _run(g, [1 + 1j], free_model, 2.0)
    final = record.final
    assert final.qt[0] == pytest.approx(1 + 3j, abs=1e-10)
    assert final.pt[0] == pytest.approx(1j, abs=1e-10)
    assert final.s2[0] == pytest.approx(1j / (1 + 2j), abs=1e-10)
    s0_start = init_from_gaussian(g, [1 + 1j], 0.5).s0_cl[0]
    assert final.s0_cl[0] == pytest.approx(s0_start - 1.0, abs=1e-10)


def test_harmonic_closed_form(harmonic_model):
    g = InitialGaussian(0.5, 2.0, 0.0)
    q0 = 2.5 + 0.3j
    p0 = 1j * (q0 - 2.0)
    t = 2.0
    final = _run(g, [q0], harmonic_model, t).final
    assert final.qt[0] == pytest.approx(q0 * np.cos(t) + p0 * np.sin(t), rel=1e-8)
    assert final.pt[0] == pytest.approx(-q0 * np.sin(t) + p0 * np.cos(t), rel=1e-8)
    expected = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    assert np.allclose(final.m[0], expected, atol=1e-9)


def test_free_particle_is_contour_independent(free_model):
    g = InitialGaussian(0.5, 0.0, 1.0)
    points = [1 + 1j, -0.5 + 0.2j]
    real = _run(g, points, free_model, 2.0, "real").final
    dip = _run(g, points, free_model, 2.0, "rectangular_dip").final
    for name in ("qt", "pt", "s0_cl", "s_kin", "z", "pz"):
        assert np.allclose(getattr(real, name), getattr(dip, name), atol=1e-10), name


def test_morse_orbit_returns_after_period(morse_model, revival_gaussian, t_cl):
    final = _run(revival_gaussian, [9.342], morse_model, t_cl).final
    assert final.qt[0] == pytest.approx(9.342, abs=1e-6)
    assert final.pt[0] == pytest.approx(0.0, abs=1e-6)


def test_monodromy_stays_symplectic(morse_model, revival_gaussian, t_cl):
    tight = StepperOptions(atol=1e-14, rtol=1e-12)
    center = _run(revival_gaussian, [9.342], morse_model, 3 * t_cl, opts=tight).final
    assert abs(center.det_m[0] - 1) < 1e-8
    complex_start = _run(revival_gaussian, [9.4 + 0.05j], morse_model, 3 * t_cl, "midline", opts=tight).final
    assert abs(complex_start.det_m[0] - 1) < 1e-8


def test_second_derivative_matches_riccati(morse_model, revival_gaussian, t_cl):
    final = _run(revival_gaussian, [9.342], morse_model, t_cl).final

    def rhs(t, y):
        q, p, s2 = y
        _, v1, v2 = morse_model.derivatives(q)
        return [p, -v1, -v2 - s2 * s2]

    direct = solve_ivp(rhs, (0.0, t_cl), [9.342 + 0j, 0j, 1j], method="DOP853", rtol=1e-12, atol=1e-12)
    assert final.s2[0] == pytest.approx(direct.y[2, -1], abs=1e-6)


def test_quantum_action_integrates_second_derivative(morse_model, revival_gaussian, t_cl):
    times = np.linspace(0.0, 0.5 * t_cl, 801)
    record = _run(revival_gaussian, [9.342], morse_model, 0.5 * t_cl, checkpoints=times)
    s2 = np.array([c.state.s2[0] for c in record.checkpoints])
    assert np.allclose(record.times, times)
    integral = simpson(s2, x=times)
    final = record.final
    log_z = np.log(np.abs(final.z[0])) + 1j * final.arg_z[0]
    assert integral == pytest.approx(log_z, abs=1e-6)


def test_trajectories_are_analytic_in_start_point(morse_model, revival_gaussian, t_cl):
    center, h = 9.5 + 0.2j, 1e-3
    points = [center, center + h, center - h, center + 1j * h, center - 1j * h]
    final = _run(revival_gaussian, points, morse_model, 0.5 * t_cl).final
    along_re = (final.qt[1] - final.qt[2]) / (2 * h)
    along_im = (final.qt[3] - final.qt[4]) / (2j * h)
    assert along_re == pytest.approx(final.z[0], rel=1e-4)
    assert along_im == pytest.approx(final.z[0], rel=1e-4)


def test_checkpoints_are_stored(free_model):
    g = InitialGaussian(0.5, 0.5, 1.0)
    record = _run(g, [0.5], free_model, 2.0, checkpoints=[0.0, 1.0])
    assert record.times == [0.0, 1.0, 2.0]
    assert record.checkpoint_at(1.0).state.qt[0] == pytest.approx(1.5, abs=1e-10)
    with pytest.raises(KeyError):
        record.checkpoint_at(1.5)


def test_checkpoint_under_the_dip_takes_a_spur(morse_model, revival_gaussian, t_cl):
    points = [9.342, 9.7 + 0.4j]
    half = 0.5 * t_cl
    record = _run(revival_gaussian, points, morse_model, t_cl, "rectangular_dip", checkpoints=[half])
    a = 0.05 * t_cl
    direct = propagate(
        init_from_gaussian(revival_gaussian, points, 0.5),
        TimeContour((0.0, a, a - 0.4j, half - 0.4j, half)), morse_model,
    ).final
    spur = record.checkpoint_at(half).state
    assert np.allclose(spur.qt, direct.qt, rtol=1e-7)
    assert np.allclose(spur.arg_d, direct.arg_d, atol=1e-7)
    assert record.final.qt[0] == pytest.approx(9.342, abs=1e-6)


def test_midline_agrees_with_real_time_near_the_real_axis(morse_model, revival_gaussian, t_cl):
    points = [9.342, 9.4 + 0.05j, 9.1 - 0.03j]
    real = _run(revival_gaussian, points, morse_model, 3 * t_cl, "real", checkpoints=[t_cl])
    midline = _run(revival_gaussian, points, morse_model, 3 * t_cl, "midline", checkpoints=[t_cl])
    for t in (t_cl, 3 * t_cl):
        a, b = real.checkpoint_at(t).state, midline.checkpoint_at(t).state
        assert np.allclose(a.qt, b.qt, rtol=1e-7, atol=1e-7)
        assert np.allclose(a.s0_cl, b.s0_cl, rtol=1e-7, atol=1e-7)


def test_overflow_is_flagged(free_model):
    g = InitialGaussian(0.5, 0.0, 100.0)
    record = _run(g, [0.0, 0.1], free_model, 1.0, opts=StepperOptions(overflow=1e3))
    assert np.all(record.final.flags & TrajectoryFlag.NONFINITE)
    assert len(record) == 2


def test_step_collapse_is_flagged(morse_model, revival_gaussian):
    opts = StepperOptions(atol=1e-30, rtol=1e-30, h_min=1e-3)
    record = _run(revival_gaussian, [9.342], morse_model, 1.0, opts=opts)
    assert record.final.flags[0] & TrajectoryFlag.STEP_COLLAPSE


def test_manifold_chunking_does_not_change_results(morse_model, revival_gaussian):
    points = np.array([9.0 + 0.5j, 9.3, 9.6 - 0.4j, 10.1 + 0.2j, 8.7 - 0.1j])
    contour = make_contour("rectangular_dip", 2.0)
    opts = StepperOptions()
    small = propagate_manifold(revival_gaussian, points, contour, morse_model, opts, 0.5, chunk_size=2)
    large = propagate_manifold(revival_gaussian, points, contour, morse_model, opts, 0.5, chunk_size=100)
    pooled = propagate_manifold(revival_gaussian, points, contour, morse_model, opts, 0.5, chunk_size=2, workers=2)
    assert np.allclose(small.final.qt, large.final.qt, rtol=1e-9, atol=1e-9)
    assert np.array_equal(small.final.qt, pooled.final.qt)
    assert np.array_equal(small.q0_tilde, points)


def test_record_take_and_concat(free_model):
    g = InitialGaussian(0.5, 0.0, 1.0)
    record = _run(g, [0.1, 0.2, 0.3], free_model, 1.0, checkpoints=[0.5])
    parts = [record.take([0]), record.take([1, 2])]
    joined = TrajectoryRecord.concat(parts)
    assert np.array_equal(joined.final.qt, record.final.qt)
    assert joined.times == record.times


def test_initial_record_holds_start(revival_gaussian, morse_model):
    record = initial_record(revival_gaussian, [9.342, 9.0 + 1j], morse_model, 0.5)
    assert record.times == [0.0]
    assert record.contour is None
    assert np.array_equal(record.final.qt, record.q0_tilde)
