"""Kinematics: exact step vs fine integration, error-frame algebra, the
time-varying linear model vs finite differences of the nonlinear field."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltvmpc.dynamics import (ControlInput, LinearModel, ReferencePoint, RobotState,
                             derive_reference, error_field, from_error_frame, linearize,
                             roll_reference, step_continuous, step_discrete,
                             to_error_frame, wrap_angle)
from ltvmpc.riccati import controllability_rank

from oracles import central_jacobian, euler_richardson

angles = st.floats(-10.0, 10.0, allow_nan=False)
coords = st.floats(-100.0, 100.0, allow_nan=False)


def test_wrap_angle_range_and_idempotence():
    th = np.linspace(-50, 50, 20001)
    w = wrap_angle(th)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert np.allclose(wrap_angle(w), w, atol=1e-12)
    # the half-open convention: pi stays pi, -pi flips to pi
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_continuous_field_known_points():
    assert np.allclose(step_continuous(RobotState(0, 0, 0), ControlInput(1, 0)),
                       [1, 0, 0])
    assert np.allclose(step_continuous(RobotState(0, 0, math.pi / 2), ControlInput(1, 0)),
                       [0, 1, 0], atol=1e-15)
    out = step_continuous(RobotState(0, 0, math.pi / 4), ControlInput(math.sqrt(2), 0.5))
    assert np.allclose(out, [1, 1, 0.5], atol=1e-15)


def test_discrete_step_known_points():
    z = step_discrete(RobotState(0, 0, 0), ControlInput(1, 0), 0.1)
    assert np.allclose(z.as_array(), [0.1, 0, 0], atol=1e-15)
    # quarter circle of radius v/omega = 1
    z = step_discrete(RobotState(0, 0, 0), ControlInput(math.pi / 2, math.pi / 2), 1.0)
    assert np.allclose(z.as_array(), [1, 1, math.pi / 2], atol=1e-12)
    z = step_discrete(RobotState(0, 0, 0), ControlInput(1, 1), 0.1)
    assert np.allclose(z.as_array(), [math.sin(0.1), 1 - math.cos(0.1), 0.1], atol=1e-15)


def test_discrete_step_matches_richardson_euler(rng):
    n = 100
    z = np.column_stack([rng.uniform(-5, 5, n), rng.uniform(-5, 5, n),
                         rng.uniform(-math.pi, math.pi, n)])
    u = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-10, 10, n)])
    T = rng.uniform(0.01, 0.2, n)
    want = euler_richardson(z, u, T)
    got = np.array([step_discrete(RobotState(*z[i]), ControlInput(*u[i]), T[i]).as_array()
                    for i in range(n)])
    err_xy = np.max(np.abs(got[:, :2] - want[:, :2]))
    err_th = np.max(np.abs(wrap_angle(got[:, 2] - want[:, 2])))
    assert err_xy <= 1e-6, f"max xy deviation {err_xy:.3e}"
    assert err_th <= 1e-6, f"max heading deviation {err_th:.3e}"


def test_discrete_step_branch_continuity():
    eps = 1e-6  # the branch threshold
    for th in (0.0, 0.7, -2.1):
        for sign in (1.0, -1.0):
            lo = step_discrete(RobotState(0.3, -0.2, th),
                               ControlInput(1.7, sign * eps * (1 - 1e-3)), 0.2)
            hi = step_discrete(RobotState(0.3, -0.2, th),
                               ControlInput(1.7, sign * eps * (1 + 1e-3)), 0.2)
            assert np.max(np.abs(lo.as_array() - hi.as_array())) <= 1e-8


def test_derive_reference_known_curves():
    t = np.linspace(0, 2, 21)
    line = np.column_stack([t, np.ones_like(t), np.zeros_like(t),
                            np.zeros_like(t), np.zeros_like(t), np.zeros_like(t)])
    ref = derive_reference(line, 0.1)
    assert all(p.control.v == pytest.approx(1.0) for p in ref.points)
    assert all(p.control.omega == pytest.approx(0.0) for p in ref.points)
    assert ref[0].state.theta == pytest.approx(0.0)

    # sinusoid x=t, y=sin t at t=0: derivatives (1, cos t) and (0, -sin t)
    sin0 = np.array([[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]])
    p = derive_reference(sin0, 0.1)[0]
    assert p.control.v == pytest.approx(math.sqrt(2))
    assert p.state.theta == pytest.approx(math.pi / 4)
    assert p.control.omega == pytest.approx(0.0)

    circ0 = np.array([[1.0, 0.0, -1.0, 0.0, 1.0, 0.0]])
    p = derive_reference(circ0, 0.1)[0]
    assert p.control.v == pytest.approx(1.0)
    assert p.state.theta == pytest.approx(math.pi / 2)
    assert p.control.omega == pytest.approx(1.0)


def test_derive_reference_rejects_stationary_sample():
    bad = np.zeros((3, 6))
    bad[:, 1] = [1.0, 0.0, 1.0]  # middle sample at rest
    with pytest.raises(ValueError, match="sample 1"):
        derive_reference(bad, 0.1)


def test_rolled_reference_is_flowed_by_its_own_feedforward():
    t = np.arange(200) * 0.05
    curve = np.column_stack([0.5 * t, np.full_like(t, 0.5), np.zeros_like(t),
                             np.sin(0.5 * t), 0.5 * np.cos(0.5 * t),
                             -0.25 * np.sin(0.5 * t)])
    ref = roll_reference(curve, 0.05)
    z = ref[0].state
    for k in range(len(ref) - 1):
        z = step_discrete(z, ref[k].control, 0.05)
        assert np.max(np.abs(z.as_array() - ref[k + 1].state.as_array())) <= 1e-12


def test_error_frame_known_points():
    ref = ReferencePoint(RobotState(1, 2, 0.5), ControlInput(1, 0))
    e = to_error_frame(RobotState(0, 0, 0), ref)
    assert np.allclose(e.as_array(), [1, 2, 0.5])
    ref = ReferencePoint(RobotState(1, 0, math.pi / 2), ControlInput(1, 0))
    e = to_error_frame(RobotState(0, 0, math.pi / 2), ref)
    assert np.allclose(e.as_array(), [0, -1, 0], atol=1e-15)
    z = from_error_frame(e, ref)
    assert np.allclose(z.as_array(), [0, 0, math.pi / 2], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(coords, coords, angles, coords, coords, angles)
def test_error_frame_round_trip(x, y, th, xr, yr, thr):
    ref = ReferencePoint(RobotState(xr, yr, thr), ControlInput(0.5, 0.0))
    z = RobotState(x, y, th)
    e = to_error_frame(z, ref)
    z2 = from_error_frame(e, ref)
    assert abs(z2.x - z.x) <= 1e-9 * max(1.0, abs(z.x))
    assert abs(z2.y - z.y) <= 1e-9 * max(1.0, abs(z.y))
    assert abs(wrap_angle(z2.theta - z.theta)) <= 1e-12


def test_linearize_known_model():
    m = linearize(ReferencePoint(RobotState(0, 0, 0), ControlInput(1.0, 0.5)), 0.1)
    assert np.allclose(m.A, [[1, 0.05, 0], [-0.05, 1, 0.1], [0, 0, 1]])
    assert np.array_equal(m.B, [[-0.1, 0], [0, 0], [0, -0.1]])
    m0 = linearize(ReferencePoint(RobotState(0, 0, 0), ControlInput(0.0, 0.0)), 0.1)
    assert np.array_equal(m0.A, np.eye(3))


def test_linear_model_rejects_wrong_b():
    with pytest.raises(ValueError):
        LinearModel(np.eye(3), np.zeros((3, 2)), 0.1)


def test_linearize_matches_field_jacobian():
    T = 0.05
    for v_r in np.linspace(0.0, 2.0, 5):
        for w_r in np.linspace(-1.0, 1.0, 5):
            m = linearize(ReferencePoint(RobotState(0, 0, 0), ControlInput(v_r, w_r)), T)
            Je = central_jacobian(lambda e: error_field(e, np.zeros(2), v_r, w_r),
                                  np.zeros(3))
            Ju = central_jacobian(lambda ub: error_field(np.zeros(3), ub, v_r, w_r),
                                  np.zeros(2))
            assert np.max(np.abs((m.A - np.eye(3)) / T - Je)) <= 1e-6
            assert np.max(np.abs(m.B / T - Ju)) <= 1e-6


def test_controllability_rank_grid():
    T = 0.05
    for v_r in np.linspace(0.0, 2.0, 5):
        for w_r in np.linspace(-1.0, 1.0, 5):
            m = linearize(ReferencePoint(RobotState(0, 0, 0), ControlInput(v_r, w_r)), T)
            expected = 2 if (v_r == 0.0 and w_r == 0.0) else 3
            assert controllability_rank(m.A, m.B) == expected, (v_r, w_r)
