"""Linear obstacle-avoidance constraints for the error-space MPC.

Two constructions, both yielding rows that drop straight into the QP:

1. State-space half-planes: a separating line tangent to the obstacle's
   safety disc, rotated by a steering angle theta_s about the robot-obstacle
   direction. The rotation side flips with the obstacle's side of the
   reference direction (with hysteresis so a dead-ahead obstacle does not
   chatter), which steers approach and departure differently.

2. Velocity obstacles: the set of velocities colliding within tau is a disc
   union whose convex hull is a cone; one tangent half-plane through the cone
   apex (the obstacle's velocity) is kept, chosen to restrict the preferred
   velocity least. The induced constraint on speed/turn-rate deviations is
   the first-order expansion of the signed margin at the reference input.

Both emit DecisionRow entries tied to a horizon step; the MPC maps them onto
its stacked decision vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HYSTERESIS_RAD = math.radians(5.0)


@dataclass(frozen=True)
class Obstacle:
    """Disc obstacle snapshot: center, radius, current velocity vector."""

    position: np.ndarray
    radius: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(2))
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


@dataclass(frozen=True)
class HalfPlane:
    """Constraint n . x (sense) a with unit normal n; sense is 'le' or 'ge'."""

    n: np.ndarray
    a: float
    sense: str = "le"

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float).reshape(2)
        if not math.isclose(float(n @ n), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("normal must be unit length")
        if self.sense not in ("le", "ge"):
            raise ValueError("sense must be 'le' or 'ge'")
        object.__setattr__(self, "n", n)

    def satisfied(self, x, margin: float = 0.0) -> bool:
        v = float(self.n @ np.asarray(x, dtype=float))
        return v <= self.a - margin if self.sense == "le" else v >= self.a + margin


@dataclass(frozen=True)
class VoCone:
    """Velocity-obstacle cone: apex at the obstacle velocity, axis toward the
    obstacle, half-angle from the combined radius, horizon tau."""

    apex: np.ndarray
    axis: np.ndarray
    half_angle: float
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float).reshape(2))
        axis = np.asarray(self.axis, dtype=float).reshape(2)
        nrm = float(np.linalg.norm(axis))
        if nrm == 0:
            raise ValueError("axis must be nonzero")
        object.__setattr__(self, "axis", axis / nrm)
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("half angle must lie in (0, pi/2)")

    def contains(self, u, tol: float = 0.0) -> bool:
        """Membership in the untruncated cone (interior plus boundary)."""
        w = np.asarray(u, dtype=float).reshape(2) - self.apex
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return False
        cos_ang = float(w @ self.axis) / nw
        return cos_ang >= math.cos(self.half_angle) - tol


@dataclass(frozen=True)
class DecisionRow:
    """One <= row over the MPC decision vector, tied to horizon step `step`.

    e_coeff acts on the position part of the predicted error at that step,
    u_coeff on the input deviation (e_u, e_omega); unused slot is None.
    """

    step: int
    rhs: float
    e_coeff: np.ndarray = None
    u_coeff: np.ndarray = None


def _rot(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _error_rot(theta: float) -> np.ndarray:
    """World-to-robot rotation used by the error definition."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


# -- method 1: state-space half-planes ----------------------------------------


def state_space_halfplane(p_robot, obstacle: Obstacle, theta_s: float, r_safe: float,
                          ref_heading: float, prev_side: int = 0):
    """Separating half-plane n . x <= a for the robot's position.

    The base direction d points from robot to obstacle center; the plane is
    tangent to the disc of radius r_safe around the center, then rotated by
    +/- theta_s. The sign follows the side of the obstacle relative to the
    reference direction (cross product), held by hysteresis within
    HYSTERESIS_RAD of the switching boundaries; pass the previously used side
    as prev_side (0 when none). Returns (halfplane, side, inside) where
    inside flags a robot already within r_safe of the center (the plane is
    still emitted and points away from the obstacle).
    """
    p_robot = np.asarray(p_robot, dtype=float).reshape(2)
    d = obstacle.position - p_robot
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise ValueError("robot and obstacle centers coincide")
    d_hat = d / dist
    ref_dir = np.array([math.cos(ref_heading), math.sin(ref_heading)])
    cross = float(ref_dir[0] * d_hat[1] - ref_dir[1] * d_hat[0])
    dot = float(ref_dir @ d_hat)
    ang = math.atan2(cross, dot)
    near_boundary = min(abs(ang), math.pi - abs(ang)) < HYSTERESIS_RAD
    if prev_side != 0 and near_boundary:
        side = prev_side
    else:
        side = 1 if ang >= 0.0 else -1
    n = _rot(side * theta_s) @ d_hat
    a = float(n @ obstacle.position) - r_safe
    inside = dist <= r_safe
    return HalfPlane(n, a, "le"), side, inside


def position_rows(hp: HalfPlane, traj, k: int, N: int):
    """Map a world half-plane onto predicted-error rows for steps 1..N.

    The predicted world position at step j is p_ref(k+j) - R(theta)' e_pos
    with theta taken as the reference heading, so n . p <= a becomes
    -(R(theta_ref) n) . e_pos <= a - n . p_ref.
    """
    rows = []
    for j in range(1, N + 1):
        ref = traj[k + j]
        w = _error_rot(ref.state.theta) @ hp.n
        p_ref = np.array([ref.state.x, ref.state.y])
        rhs = hp.a - float(hp.n @ p_ref)
        rows.append(DecisionRow(step=j, rhs=rhs, e_coeff=-w))
    return rows


# -- method 2: velocity obstacles ----------------------------------------------


def velocity_obstacle(p_robot, r_robot: float, obstacle: Obstacle, tau: float) -> VoCone:
    """Cone of robot velocities that hit the obstacle within tau.

    Built from the disc union D((p_j - p_i)/t + v_j, (r_i + r_j)/t) over
    t in (0, tau]; its convex hull is the cone with apex v_j, axis toward the
    obstacle, half-angle asin((r_i + r_j)/dist). Raises ValueError when the
    discs already overlap (dist <= r_i + r_j).
    """
    p_robot = np.asarray(p_robot, dtype=float).reshape(2)
    d = obstacle.position - p_robot
    dist = float(np.linalg.norm(d))
    r_sum = r_robot + obstacle.radius
    if dist <= r_sum:
        raise ValueError("already in collision: center distance <= combined radius")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return VoCone(apex=obstacle.velocity, axis=d / dist, half_angle=math.asin(r_sum / dist), tau=tau)


def tangent_halfplane(cone: VoCone, u_pref) -> HalfPlane:
    """Feasible half-plane n . u >= a bounding the cone from one side.

    Candidate normals are the outward normals of the two tangent rays; the
    chosen side maximizes n . (u_pref - apex), i.e. restricts the preferred
    velocity least. Ties go to the left tangent. a = n . apex, so the apex
    (obstacle velocity) lies exactly on the boundary.
    """
    u_pref = np.asarray(u_pref, dtype=float).reshape(2)
    n_left = _rot(cone.half_angle + math.pi / 2) @ cone.axis
    n_right = _rot(-cone.half_angle - math.pi / 2) @ cone.axis
    w = u_pref - cone.apex
    n = n_left if float(n_left @ w) >= float(n_right @ w) else n_right
    return HalfPlane(n, float(n @ cone.apex), "ge")


def nonlinear_velocity_margin(n, a: float, speed: float, theta: float, omega: float,
                              dt: float) -> float:
    """Signed margin f = n . u(next) - a of the velocity half-plane, where the
    velocity vector after dt is speed * (cos, sin)(theta + omega dt).
    Nonnegative f means the constraint n . u >= a holds."""
    n = np.asarray(n, dtype=float).reshape(2)
    phase = theta + omega * dt
    return float(n[0] * speed * math.cos(phase) + n[1] * speed * math.sin(phase) - a)


def velocity_constraint_row(n, a: float, theta: float, u_r: float, w_r: float, dt: float):
    """First-order row in the input deviations (e_u, e_w) at the reference.

    Expanding the margin at (u_r, w_r) and flipping f >= 0 into a <= row:
        coef_eu * e_u + coef_ew * e_w + const <= 0.
    Returns (coef_eu, coef_ew, const).
    """
    n = np.asarray(n, dtype=float).reshape(2)
    phase = theta + w_r * dt
    c, s = math.cos(phase), math.sin(phase)
    coef_eu = -n[0] * c - n[1] * s
    coef_ew = (n[0] * u_r * s - n[1] * u_r * c) * dt
    const = -n[0] * u_r * c - n[1] * u_r * s + a
    return coef_eu, coef_ew, const


def velocity_rows(hp: HalfPlane, traj, k: int, N: int, e3_path, dt: float):
    """Linearized velocity rows for horizon steps 0..N-1.

    The heading estimate at step j is the reference heading at k+j shifted by
    the matching entry of e3_path (a scalar applies one shift everywhere).
    Passing the previous solve's predicted heading errors makes a turn planned
    early in the horizon pay off in the later rows; a frozen scalar shift
    would instead charge every step the full turn from scratch, which prices
    steering out of the solution.
    """
    e3_path = np.atleast_1d(np.asarray(e3_path, dtype=float))
    if e3_path.size == 1:
        e3_path = np.full(N, float(e3_path[0]))
    elif e3_path.size != N:
        raise ValueError("e3_path must be a scalar or have one entry per step")
    rows = []
    for j in range(N):
        ref = traj[k + j]
        theta_est = ref.state.theta - e3_path[j]
        cu, cw, const = velocity_constraint_row(hp.n, hp.a, theta_est, ref.control.v,
                                                ref.control.omega, dt)
        rows.append(DecisionRow(step=j, rhs=-const, u_coeff=np.array([cu, cw])))
    return rows


# -- debug dump -----------------------------------------------------------------


def velocity_debug_csv(cone: VoCone, hp: HalfPlane, rows) -> str:
    """Velocity-space snapshot (cone, half-plane, per-step rows) as CSV."""
    lines = ["record,field0,field1,field2,field3"]
    lines.append(f"cone_apex,{cone.apex[0]:.17g},{cone.apex[1]:.17g},,")
    lines.append(f"cone_axis,{cone.axis[0]:.17g},{cone.axis[1]:.17g},,")
    lines.append(f"cone_shape,{cone.half_angle:.17g},{cone.tau:.17g},,")
    lines.append(f"halfplane,{hp.n[0]:.17g},{hp.n[1]:.17g},{hp.a:.17g},{hp.sense}")
    for r in rows:
        cu, cw = (r.u_coeff if r.u_coeff is not None else (0.0, 0.0))
        lines.append(f"row_step_{r.step},{cu:.17g},{cw:.17g},{r.rhs:.17g},")
    return "\n".join(lines) + "\n"
