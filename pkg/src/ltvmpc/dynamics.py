"""Unicycle kinematics, exact discretization, and tracking-error coordinates.

The robot is a planar unicycle z = (x, y, theta) driven by u = (v, omega).
Everything downstream (Riccati design, MPC, simulation) works on the error
state e = R(theta) (z_ref - z) expressed in the robot's local frame, so this
module also owns the error-frame transforms and the linearized time-varying
error model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Below this turn rate the exact arc formulas are replaced by their
# second-order Taylor limit to avoid 0/0.
OMEGA_EPS = 1e-6

TAU = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi]."""
    return np.mod(theta - math.pi, -TAU) + math.pi


@dataclass(frozen=True)
class RobotState:
    """Pose (x, y, theta); theta is normalized to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class ControlInput:
    """Forward speed v [m/s] and turn rate omega [rad/s]."""

    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


@dataclass(frozen=True)
class ErrorState:
    """Tracking error in the robot frame; e3 is normalized to (-pi, pi]."""

    e1: float
    e2: float
    e3: float

    def __post_init__(self):
        object.__setattr__(self, "e3", float(wrap_angle(self.e3)))

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3])

    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.as_array())))


@dataclass(frozen=True)
class ReferencePoint:
    """Reference pose plus the feed-forward input that generates it."""

    state: RobotState
    control: ControlInput


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Sampled reference, indexable by timestep with clamping at the ends."""

    points: tuple
    T: float

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, k: int) -> ReferencePoint:
        return self.points[min(max(k, 0), len(self.points) - 1)]


@dataclass(frozen=True)
class LinearModel:
    """One-step error model e(k+1) = A e(k) + B u_b(k).

    A depends on the reference speed and turn rate at the step; B is the
    constant input map [[-T, 0], [0, 0], [0, -T]].
    """

    A: np.ndarray
    B: np.ndarray
    T: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.shape != (3, 3) or B.shape != (3, 2):
            raise ValueError("LinearModel expects A 3x3 and B 3x2")
        B_expected = np.array([[-self.T, 0.0], [0.0, 0.0], [0.0, -self.T]])
        if not np.array_equal(B, B_expected):
            raise ValueError("B must equal [[-T,0],[0,0],[0,-T]]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)


def step_continuous(z: RobotState, u: ControlInput) -> np.ndarray:
    """Continuous-time field zdot = (v cos th, v sin th, omega)."""
    return np.array([u.v * math.cos(z.theta), u.v * math.sin(z.theta), u.omega])


def step_discrete(z: RobotState, u: ControlInput, T: float) -> RobotState:
    """Advance one sampling period under constant (v, omega): exact arc motion.

    For |omega| < OMEGA_EPS uses the Taylor limit with its second-order
    correction so the two branches join C1-continuously.
    """
    if T < 0:
        raise ValueError("sampling period T must be >= 0")
    v, w, th = u.v, u.omega, z.theta
    if abs(w) < OMEGA_EPS:
        x = z.x + T * v * math.cos(th) - 0.5 * v * T * T * w * math.sin(th)
        y = z.y + T * v * math.sin(th) + 0.5 * v * T * T * w * math.cos(th)
    else:
        x = z.x + (v / w) * (math.sin(th + T * w) - math.sin(th))
        y = z.y + (v / w) * (math.cos(th) - math.cos(th + T * w))
    return RobotState(x, y, th + T * w)


def derive_reference(samples: np.ndarray, T: float, v_min: float = 1e-9) -> ReferenceTrajectory:
    """Build a reference from curve samples (x, xd, xdd, y, yd, ydd) per row.

    The feed-forward input follows from the flat outputs:
      v_r = hypot(xd, yd),  theta_r = atan2(yd, xd),
      omega_r = (xd*ydd - yd*xdd) / (xd^2 + yd^2).
    Raises ValueError where the planar speed falls below v_min (heading and
    turn rate are undefined at rest).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 6:
        raise ValueError("samples must be (n, 6): columns x, xd, xdd, y, yd, ydd")
    x, xd, xdd, y, yd, ydd = samples.T
    speed_sq = xd**2 + yd**2
    if np.any(speed_sq < v_min**2):
        k_bad = int(np.argmax(speed_sq < v_min**2))
        raise ValueError(f"reference speed below {v_min} at sample {k_bad}")
    v_r = np.sqrt(speed_sq)
    theta_r = np.arctan2(yd, xd)
    omega_r = (xd * ydd - yd * xdd) / speed_sq
    points = tuple(
        ReferencePoint(RobotState(x[k], y[k], theta_r[k]), ControlInput(v_r[k], omega_r[k]))
        for k in range(len(x))
    )
    return ReferenceTrajectory(points, T)


def roll_reference(samples: np.ndarray, T: float, v_min: float = 1e-9) -> ReferenceTrajectory:
    """Discretization-consistent reference: poses rolled through step_discrete.

    The feed-forward inputs come from the curve derivatives exactly as in
    derive_reference, but the pose sequence starts at the first curve sample
    and then obeys z_ref(k+1) = step_discrete(z_ref(k), u_ref(k), T). A robot
    started on this reference and fed u_ref stays on it to machine precision,
    which is what makes the zero-error fixed point of the closed loop exact.
    """
    analytic = derive_reference(samples, T, v_min)
    points = [analytic.points[0]]
    for k in range(1, len(analytic)):
        prev = points[-1]
        z_next = step_discrete(prev.state, prev.control, T)
        points.append(ReferencePoint(z_next, analytic.points[k].control))
    return ReferenceTrajectory(tuple(points), T)


def to_error_frame(z: RobotState, ref: ReferencePoint) -> ErrorState:
    """Tracking error e = R(theta) (z_ref - z) in the robot's local frame."""
    zr = ref.state
    dx, dy = zr.x - z.x, zr.y - z.y
    c, s = math.cos(z.theta), math.sin(z.theta)
    return ErrorState(c * dx + s * dy, -s * dx + c * dy, zr.theta - z.theta)


def from_error_frame(e: ErrorState, ref: ReferencePoint) -> RobotState:
    """Invert to_error_frame: recover the robot pose from (error, reference)."""
    zr = ref.state
    theta = zr.theta - e.e3
    c, s = math.cos(theta), math.sin(theta)
    x = zr.x - (c * e.e1 - s * e.e2)
    y = zr.y - (s * e.e1 + c * e.e2)
    return RobotState(x, y, theta)


def linearize(ref: ReferencePoint, T: float) -> LinearModel:
    """Time-varying error model at a reference point (forward-Euler discrete).

    A = [[1, w_r T, 0], [-w_r T, 1, v_r T], [0, 0, 1]],
    B = [[-T, 0], [0, 0], [0, -T]].
    """
    v_r, w_r = ref.control.v, ref.control.omega
    A = np.array(
        [
            [1.0, w_r * T, 0.0],
            [-w_r * T, 1.0, v_r * T],
            [0.0, 0.0, 1.0],
        ]
    )
    B = np.array([[-T, 0.0], [0.0, 0.0], [0.0, -T]])
    return LinearModel(A, B, T)


def error_field(e: np.ndarray, u_b: np.ndarray, v_r: float, w_r: float) -> np.ndarray:
    """Nonlinear continuous-time error dynamics around a moving reference.

    With the applied input split as (v, w) = (v_r + v_b, w_r + w_b):
      e1' = v_r cos(e3) - (v_r + v_b) + e2 (w_r + w_b)
      e2' = v_r sin(e3) - e1 (w_r + w_b)
      e3' = -w_b
    Its Jacobian at (e, u_b) = 0 equals ((A - I)/T, B/T) of linearize, which
    the tests check by central finite differences.
    """
    e1, e2, e3 = e
    v_b, w_b = u_b
    w = w_r + w_b
    return np.array(
        [
            v_r * math.cos(e3) - (v_r + v_b) + e2 * w,
            v_r * math.sin(e3) - e1 * w,
            -w_b,
        ]
    )
