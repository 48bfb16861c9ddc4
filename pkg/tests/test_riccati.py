"""Terminal-cost design: DARE fixed point, backward schedule, and the exact
cost-to-go decrease identity the whole stability argument leans on."""

import math

import numpy as np
import pytest
import scipy.linalg

from ltvmpc.dynamics import ControlInput, ReferencePoint, RobotState, linearize
from ltvmpc.riccati import (CostMatrices, backward_riccati, closed_loop,
                            controllability_rank, lqr_gain, recursion_residuals,
                            riccati_map, solve_dare)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def tracking_model(v_r, w_r, T=0.1):
    return linearize(ReferencePoint(RobotState(0, 0, 0), ControlInput(v_r, w_r)), T)


def sinusoid_models(n=100, T=0.1):
    t = np.arange(n) * T
    out = []
    for k in range(n):
        v_r = math.hypot(0.5, 0.5 * math.cos(0.5 * t[k]))
        w_r = (0.5 * -0.25 * math.sin(0.5 * t[k])) / v_r**2
        out.append(tracking_model(v_r, w_r, T))
    return out


def test_cost_matrices_validate():
    with pytest.raises(ValueError):
        CostMatrices(np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1]]), np.eye(2))
    with pytest.raises(ValueError):
        CostMatrices(np.eye(3), np.diag([1.0, 0.0]))  # R must be PD
    CostMatrices(np.diag([1.0, 1.0, 0.0]), np.eye(2))  # PSD Q is fine


def test_scalar_dare_gives_golden_ratio():
    one = np.eye(1)
    P = solve_dare(one, one, one, one)
    assert abs(P[0, 0] - GOLDEN) <= 1e-6
    K = lqr_gain(one, one, P, one)
    assert abs(K[0, 0] - (-(GOLDEN - 1.0))) <= 1e-6  # -p/(p+1) = 1 - phi


def test_dare_deadbeat_plant_collapses_to_q():
    A = np.zeros((3, 3))
    B = np.array([[-0.1, 0], [0, 0], [0, -0.1]])
    P = solve_dare(A, B, np.eye(3), np.eye(2))
    assert np.allclose(P, np.eye(3), atol=1e-12)


def test_dare_matches_scipy_and_residual():
    m = tracking_model(1.0, 0.5)
    Q, R = np.eye(3), np.eye(2)
    P = solve_dare(m.A, m.B, Q, R)
    res = np.linalg.norm(P - riccati_map(P, m.A, m.B, Q, R))
    assert res <= 1e-9
    P_ref = scipy.linalg.solve_discrete_are(m.A, m.B, Q, R)
    assert np.max(np.abs(P - P_ref)) <= 1e-6
    assert np.min(np.linalg.eigvalsh(P)) > 0


def test_dare_insensitive_to_initialization():
    m = tracking_model(0.7, -0.3)
    Q, R = np.diag([1.0, 1.0, 0.5]), np.diag([0.1, 0.05])
    P1 = solve_dare(m.A, m.B, Q, R, P0=Q)
    P2 = solve_dare(m.A, m.B, Q, R, P0=10.0 * np.eye(3))
    assert np.max(np.abs(P1 - P2)) <= 1e-7


def test_dare_fails_loudly_when_uncontrollable():
    m = tracking_model(0.0, 0.0)
    with pytest.raises(ValueError):
        solve_dare(m.A, m.B, np.eye(3), np.eye(2), max_iter=20_000)


def test_gain_stabilizes_closed_loop():
    assert np.allclose(lqr_gain(np.zeros((1, 1)), np.eye(1), np.eye(1), np.eye(1)), 0.0)
    m = tracking_model(1.0, 0.5)
    P = solve_dare(m.A, m.B, np.eye(3), np.eye(2))
    K = lqr_gain(m.A, m.B, P, np.eye(2))
    rho = np.max(np.abs(np.linalg.eigvals(closed_loop(m, K))))
    assert rho < 1.0


def test_backward_schedule_constant_model_is_stationary():
    models = [tracking_model(1.0, 0.5)] * 40
    costs = CostMatrices(np.eye(3), np.eye(2))
    sched = backward_riccati(models, costs)
    P_end = sched.P[-1]
    for P in sched.P:
        assert np.max(np.abs(P - P_end)) <= 1e-8


def test_backward_schedule_single_step():
    models = [tracking_model(1.0, 0.5)]
    sched = backward_riccati(models, CostMatrices(np.eye(3), np.eye(2)))
    assert len(sched.P) == 1 and len(sched.K) == 0
    assert np.allclose(sched.P[0], solve_dare(models[0].A, models[0].B,
                                              np.eye(3), np.eye(2)), atol=1e-8)


def test_backward_schedule_recursion_residuals():
    models = sinusoid_models()
    costs = CostMatrices(np.eye(3), np.eye(2))
    sched = backward_riccati(models, costs)
    assert np.max(recursion_residuals(sched, models, costs)) <= 1e-9
    for P in sched.P:
        assert np.max(np.abs(P - P.T)) <= 1e-10
        assert np.min(np.linalg.eigvalsh(P)) > 0


def test_exact_decrease_identity(rng):
    models = sinusoid_models()
    costs = CostMatrices(np.diag([1.0, 1.0, 0.5]), np.diag([0.1, 0.05]))
    sched = backward_riccati(models, costs)
    X = rng.normal(size=(1000, 3))
    for i in range(len(sched.K)):
        A_K = closed_loop(models[i], sched.K[i])
        Q_K = costs.Q + sched.K[i].T @ costs.R @ sched.K[i]
        lhs = np.einsum("ij,jk,ik->i", X, sched.P[i] - A_K.T @ sched.P[i + 1] @ A_K, X)
        rhs = np.einsum("ij,jk,ik->i", X, Q_K, X)
        norms = np.einsum("ij,ij->i", X, X)
        assert np.max(np.abs(lhs - rhs) / norms) <= 1e-9


def test_stage_and_terminal_bounds(rng):
    models = sinusoid_models(50)
    costs = CostMatrices(np.diag([1.0, 1.0, 0.5]), np.diag([0.1, 0.05]))
    sched = backward_riccati(models, costs)
    lam_min_q = np.min(np.linalg.eigvalsh(costs.Q))
    lam_max_p = max(np.max(np.linalg.eigvalsh(P)) for P in sched.P)
    X = rng.normal(size=(200, 3))
    for x in X:
        n2 = float(x @ x)
        for i in (0, len(sched.K) // 2, len(sched.K) - 1):
            u = sched.K[i] @ x
            stage = 0.5 * (x @ costs.Q @ x + u @ costs.R @ u)
            assert stage >= 0.5 * lam_min_q * n2 - 1e-12
            assert 0.5 * x @ sched.P[i] @ x <= 0.5 * lam_max_p * n2 + 1e-12


def test_rank_helper_on_degenerate_pairs():
    assert controllability_rank(np.eye(3), np.array([[-0.1, 0], [0, 0], [0, -0.1]])) == 2
    m = tracking_model(0.0, 1.0)
    assert controllability_rank(m.A, m.B) == 3
