"""Discrete-time Riccati machinery for the time-varying terminal cost.

Per-step LQR gains come from the frozen-model discrete algebraic Riccati
equation; the time-varying terminal weight P(i) then follows the backward
closed-loop recursion

    P(i) = A_K(i)' P(i+1) A_K(i) + Q_K(i),
    A_K(i) = A(i) + B K(i),   Q_K(i) = Q + K(i)' R K(i),

anchored at the final step by the frozen DARE solution there. This makes
V_f(x, i) = 0.5 x' P(i) x a valid time-varying Lyapunov function for the
per-step LQR policy on the linear model: the decrease identity
x' P(i) x - x' A_K' P(i+1) A_K x = x' Q_K(i) x holds exactly by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostMatrices:
    """Symmetric state weight Q (PSD) and input weight R (PD), validated."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        for name, M in (("Q", Q), ("R", R)):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(M, M.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 1e-12:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class TerminalSchedule:
    """Backward-recursion output: P(0..T_end) and gains K(0..T_end-1)."""

    P: tuple
    K: tuple

    def __len__(self) -> int:
        return len(self.P)

    def P_at(self, i: int) -> np.ndarray:
        return self.P[min(max(i, 0), len(self.P) - 1)]

    def K_at(self, i: int) -> np.ndarray:
        return self.K[min(max(i, 0), len(self.K) - 1)]


def riccati_map(P, A, B, Q, R):
    """One Riccati difference step: A'PA - A'PB (R + B'PB)^-1 B'PA + Q."""
    M = B.T @ P @ A
    G = np.linalg.solve(R + B.T @ P @ B, M)
    return A.T @ P @ A - M.T @ G + Q


def solve_dare(A, B, Q, R, tol: float = 1e-10, max_iter: int = 100_000, P0=None):
    """Fixed point of the Riccati difference iteration, symmetrized each step.

    Converges linearly for stabilizable (A, B); P0 warm-starts the iteration
    (defaults to Q). Raises ValueError if the fixed-point residual does not
    reach tol within max_iter.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = Q.copy() if P0 is None else np.asarray(P0, dtype=float).copy()
    for _ in range(max_iter):
        P_next = riccati_map(P, A, B, Q, R)
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P, ord="fro") <= tol:
            return P_next
        P = P_next
    raise ValueError(f"Riccati iteration did not converge within {max_iter} steps")


def lqr_gain(A, B, P, R):
    """Infinite-horizon feedback K = -(R + B'PB)^-1 B'PA, so u = K x."""
    BtP = B.T @ P
    return -np.linalg.solve(R + BtP @ B, BtP @ A)


def closed_loop(model, K):
    """A_K = A + B K for a LinearModel and gain K."""
    return model.A + model.B @ K


def backward_riccati(models, costs: CostMatrices) -> TerminalSchedule:
    """Time-varying terminal weights over a model sequence.

    K(i) is the frozen DARE gain of model i (warm-started along the sequence
    since neighboring models differ little); P is the backward closed-loop
    recursion anchored at the final frozen DARE solution.
    """
    L = len(models)
    if L == 0:
        raise ValueError("backward_riccati needs at least one model")
    Q, R = costs.Q, costs.R

    # Frozen DARE solution per step, solved backward with warm starts.
    dare = [None] * L
    P_prev = None
    for i in range(L - 1, -1, -1):
        P_prev = solve_dare(models[i].A, models[i].B, Q, R, P0=P_prev)
        dare[i] = P_prev

    K = [lqr_gain(models[i].A, models[i].B, dare[i], R) for i in range(L - 1)]

    P = [None] * L
    P[L - 1] = dare[L - 1]
    for i in range(L - 2, -1, -1):
        A_K = closed_loop(models[i], K[i])
        Q_K = Q + K[i].T @ R @ K[i]
        P_i = A_K.T @ P[i + 1] @ A_K + Q_K
        P[i] = 0.5 * (P_i + P_i.T)
    return TerminalSchedule(tuple(P), tuple(K))


def recursion_residuals(schedule: TerminalSchedule, models, costs: CostMatrices):
    """Frobenius residuals of the backward recursion, re-checkable post hoc."""
    Q, R = costs.Q, costs.R
    res = []
    for i in range(len(schedule.P) - 1):
        A_K = closed_loop(models[i], schedule.K[i])
        Q_K = Q + schedule.K[i].T @ R @ schedule.K[i]
        res.append(
            float(np.linalg.norm(schedule.P[i] - (A_K.T @ schedule.P[i + 1] @ A_K + Q_K), ord="fro"))
        )
    return res


def controllability_rank(A, B) -> int:
    """Numerical rank of [B, AB, ..., A^(n-1)B] via SVD.

    Threshold sigma_max * n * machine_eps * 1e3, loose enough to ignore
    roundoff but tight enough to detect the rank drop at v_r = w_r = 0.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    C = np.hstack(blocks)
    s = np.linalg.svd(C, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > s[0] * n * np.finfo(float).eps * 1e3))
