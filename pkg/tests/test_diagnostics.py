import numpy as np
import pytest

from finco.contour import make_contour
from finco.diagnostics import (
    FieldKind,
    FieldMap,
    arg_d_map,
    branch_labels,
    branch_map,
    caustic_points,
    detect_scars,
    jacobian_map,
    real_accessible,
    weight_map,
)
from finco.dynamics import InitialGaussian, init_from_gaussian, initial_record, propagate
from finco.reconstruction import sample_weight
from finco.sampling import Rect, uniform_grid


@pytest.fixture
def strip():
    return uniform_grid(Rect(8.0, 11.0, -1.0, 1.0), 30, 21)


def test_start_manifold_has_one_branch(morse_model, revival_gaussian, strip):
    record = initial_record(revival_gaussian, strip.points, morse_model, 0.5)
    field, count = branch_map(record, strip)
    assert count == 1
    assert field.kind is FieldKind.IM_FINAL_Q
    assert field.time == 0.0
    labels, _ = branch_labels(record, strip)
    on_branch = labels == 1
    assert on_branch.sum() == 30
    assert np.allclose(strip.points[on_branch].imag, 0.0, atol=1e-12)


def test_small_branches_are_dropped(morse_model, revival_gaussian):
    narrow = uniform_grid(Rect(8.0, 11.0, -1.0, 1.0), 4, 21)
    record = initial_record(revival_gaussian, narrow.points, morse_model, 0.5)
    assert branch_labels(record, narrow)[1] == 0
    assert branch_labels(record, narrow, min_size=4)[1] == 1


def test_separate_branches_are_counted(morse_model, revival_gaussian):
    grid = uniform_grid(Rect(8.0, 11.0, -1.0, 1.0), 60, 21)
    record = initial_record(revival_gaussian, grid.points, morse_model, 0.5)
    re = grid.points.real
    record.final.qt = re + 1j * (re - 9.0) * (re - 10.0)
    labels, count = branch_labels(record, grid)
    assert count == 2
    assert set(np.unique(labels)) == {0, 1, 2}
    first = labels == 1
    assert np.all(np.abs(re[first] - 9.0) < 0.05)


def test_thin_branches_are_traced_by_sign_changes(morse_model, revival_gaussian):
    grid = uniform_grid(Rect(8.0, 11.0, -1.0, 1.0), 30, 21)
    record = initial_record(revival_gaussian, grid.points, morse_model, 0.5)
    re = grid.points.real
    # steep crossings: no cell lands within the threshold of the real axis
    record.final.qt = re + 10j * (re - 9.0123) * (re - 10.0123)
    assert np.min(np.abs(record.final.qt.imag)) > 0.05
    labels, count = branch_labels(record, grid)
    assert count == 2
    assert np.all(np.abs(re[labels == 1] - 9.0123) < 0.1)
    assert np.all(np.abs(re[labels == 2] - 10.0123) < 0.1)


def test_sheet_jumps_are_not_branches(morse_model, revival_gaussian, strip):
    record = initial_record(revival_gaussian, strip.points, morse_model, 0.5)
    re = strip.points.real
    record.final.qt = re + 1j * np.where(re < 9.5, 14.2, -14.2)
    assert branch_labels(record, strip)[1] == 0


def test_flagged_trajectories_are_off_branch(morse_model, revival_gaussian, strip):
    record = initial_record(revival_gaussian, strip.points, morse_model, 0.5)
    record.final.flags[:] = 1
    assert branch_labels(record, strip)[1] == 0


def test_constant_field_has_no_scars(strip):
    assert detect_scars(FieldMap(strip, np.full(len(strip), 0.3), "arg_d")) == []
    assert detect_scars(FieldMap(strip, np.full(len(strip), 1 + 1j), "weight")) == []


def _branch_cut_grid():
    return uniform_grid(Rect(-1.0, 1.0, -1.0, 1.0), 40, 40)


def _check_single_cut(segments):
    assert len(segments) == 1
    scar = segments[0]
    ends = sorted([scar.start, scar.end], key=lambda z: z.real)
    assert ends[0].real < -0.9
    assert abs(ends[1]) < 0.1
    assert np.allclose(scar.points.imag, 0.0, atol=1e-12)
    assert 18 <= len(scar) <= 20


def test_phase_jump_of_real_field():
    grid = _branch_cut_grid()
    _check_single_cut(detect_scars(FieldMap(grid, np.angle(grid.points), "arg_d")))


def test_sign_flip_of_complex_field():
    grid = _branch_cut_grid()
    _check_single_cut(detect_scars(FieldMap(grid, np.sqrt(grid.points), "weight")))


def test_caustic_found_where_d_vanishes(morse_model, revival_gaussian, strip):
    record = initial_record(revival_gaussian, strip.points, morse_model, 0.5)
    center = strip.points[10 * 30 + 7]
    record.final.z = strip.points - center
    record.final.pz = np.zeros(len(strip), dtype=complex)
    found = caustic_points(record, strip, 0.5)
    assert len(found) == 1
    assert found[0] == pytest.approx(center)


def test_weight_maps(revival_gaussian, strip):
    state = init_from_gaussian(revival_gaussian, strip.points, 0.5)
    sample = sample_weight(state, revival_gaussian, 0.5, strip.weights, time=2.0)
    weights = weight_map(sample, strip)
    assert weights.time == 2.0
    frame = weights.to_frame()
    assert list(frame.columns) == ["re_q0", "im_q0", "level", "magnitude", "phase"]
    assert np.allclose(frame["magnitude"], np.abs(sample.contribution))
    jac = jacobian_map(sample, strip)
    assert np.allclose(jac.values, 4.0)
    assert "value" in jac.to_frame().columns
    assert jac.raster().shape == (21, 30)


def test_arg_d_map_at_start(morse_model, revival_gaussian, strip):
    record = initial_record(revival_gaussian, strip.points, morse_model, 0.5)
    field = arg_d_map(record, strip)
    assert field.kind is FieldKind.ARG_D
    assert np.all(field.values == 0.0)


def test_field_map_shape_check(strip):
    with pytest.raises(ValueError):
        FieldMap(strip, np.zeros(3), "weight")


def test_real_accessibility(free_model):
    g = InitialGaussian(0.5, 0.0, 1.0)
    points = np.array([0.5 + 0.5j, -1.0 + 0.2j, 0.3])
    state0 = init_from_gaussian(g, points, 0.5)
    dip = propagate(state0, make_contour("rectangular_dip", 2.0), free_model)
    real = propagate(state0, make_contour("real", 2.0), free_model)
    assert np.all(real_accessible(dip, real))
    dip.final.qt[1] += 0.5
    assert real_accessible(dip, real).tolist() == [True, False, True]
    with pytest.raises(ValueError):
        real_accessible(dip.take([0, 1]), real)
