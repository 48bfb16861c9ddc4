"""Closed-loop simulation: scenarios, reference curves, agents, logs, metrics.

The plant is the exact discrete unicycle step; the controller sees the same
reference the plant rolls along (references are integrated through the
discrete dynamics by default, which makes "start on the reference, apply the
feed-forward" an exact fixed point of the loop). Obstacles are static discs,
constant-velocity discs, or secondary unicycles tracking their own reference
open-loop or with their own controller; only the primary robot avoids.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .avoidance import Obstacle
from .dynamics import (ControlInput, ReferenceTrajectory, RobotState, derive_reference,
                       linearize, roll_reference, step_discrete, to_error_frame)
from .mpc import MpcConfig, MpcController
from .riccati import CostMatrices, backward_riccati

CSV_COLUMNS = ("k", "t", "x", "y", "theta", "x_ref", "y_ref", "theta_ref",
               "e1", "e2", "e3", "v", "omega", "v_ref", "omega_ref",
               "stage_cost", "terminal_cost", "qp_status", "slack", "min_dist")

CONVERGENCE_TOL = 0.01  # final-window error bound for the converged flag
CONVERGENCE_WINDOW = 0.10  # fraction of the log checked for convergence
LYAP_ENTRY = 0.05  # error threshold that starts the decrease audit
LYAP_TOL = 1e-6  # additive tolerance of the decrease inequality


@dataclass(frozen=True)
class TrajectorySpec:
    """Analytic reference curve; samples() returns (x, xd, xdd, y, yd, ydd)."""

    kind: str  # sinusoid | line | circle
    T: float = 0.05
    x_speed: float = 0.5
    amplitude: float = 1.0
    angular_freq: float = 0.5
    start: tuple = (0.0, 0.0)
    heading: float = 0.0
    speed: float = 0.5
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    angular_rate: float = 0.5
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sinusoid", "line", "circle"):
            raise ValueError("trajectory kind must be sinusoid, line or circle")
        if self.T <= 0:
            raise ValueError("sampling period T must be positive")

    def samples(self, n: int) -> np.ndarray:
        t = np.arange(n) * self.T
        if self.kind == "sinusoid":
            x, xd, xdd = self.x_speed * t, np.full(n, self.x_speed), np.zeros(n)
            w = self.angular_freq
            y = self.amplitude * np.sin(w * t)
            yd = self.amplitude * w * np.cos(w * t)
            ydd = -self.amplitude * w * w * np.sin(w * t)
        elif self.kind == "line":
            cx, sy = math.cos(self.heading), math.sin(self.heading)
            x = self.start[0] + self.speed * cx * t
            y = self.start[1] + self.speed * sy * t
            xd, yd = np.full(n, self.speed * cx), np.full(n, self.speed * sy)
            xdd = ydd = np.zeros(n)
        else:  # circle
            w = self.angular_rate
            ph = w * t + self.phase
            x = self.center[0] + self.radius * np.cos(ph)
            y = self.center[1] + self.radius * np.sin(ph)
            xd, yd = -self.radius * w * np.sin(ph), self.radius * w * np.cos(ph)
            xdd, ydd = -self.radius * w * w * np.cos(ph), -self.radius * w * w * np.sin(ph)
        return np.column_stack([x, xd, xdd, y, yd, ydd])


def build_reference(spec: TrajectorySpec, n: int, mode: str = "rolled") -> ReferenceTrajectory:
    """Reference of n points; 'rolled' integrates poses through the discrete
    dynamics (exact fixed point), 'analytic' keeps the curve samples."""
    samples = spec.samples(n)
    if mode == "rolled":
        return roll_reference(samples, spec.T)
    if mode == "analytic":
        return derive_reference(samples, spec.T)
    raise ValueError("reference mode must be 'rolled' or 'analytic'")


@dataclass(frozen=True)
class ObstacleSpec:
    """Scene obstacle: static disc, constant-velocity disc, or a unicycle
    agent tracking its own reference ('open_loop' feed-forward or 'mpc')."""

    kind: str  # static | linear | unicycle
    radius: float = 0.3
    position: tuple = (0.0, 0.0)
    velocity: tuple = (0.0, 0.0)
    trajectory: TrajectorySpec = None
    control: str = "open_loop"

    def __post_init__(self):
        if self.kind not in ("static", "linear", "unicycle"):
            raise ValueError("obstacle kind must be static, linear or unicycle")
        if self.kind == "unicycle" and self.trajectory is None:
            raise ValueError("unicycle obstacle needs a trajectory")
        if self.control not in ("open_loop", "mpc"):
            raise ValueError("obstacle control must be open_loop or mpc")


@dataclass(frozen=True)
class Scenario:
    """Full experiment description; everything needed to reproduce a run."""

    name: str = "scenario"
    trajectory: TrajectorySpec = field(default_factory=lambda: TrajectorySpec("sinusoid"))
    duration: int = 600
    initial_state: tuple = None  # None -> start on the reference
    cfg: MpcConfig = field(default_factory=MpcConfig)
    Q_diag: tuple = (1.0, 1.0, 0.5)
    R_diag: tuple = (0.1, 0.05)
    obstacles: tuple = ()
    controller: str = "mpc"  # mpc | lqr
    reference_mode: str = "rolled"
    seed: int = 0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.controller not in ("mpc", "lqr"):
            raise ValueError("controller must be 'mpc' or 'lqr'")
        if len(self.Q_diag) != 3 or len(self.R_diag) != 2:
            raise ValueError("Q_diag needs 3 entries and R_diag needs 2")

    def costs(self) -> CostMatrices:
        return CostMatrices(np.diag(self.Q_diag), np.diag(self.R_diag))


@dataclass(frozen=True)
class SimRow:
    k: int
    t: float
    x: float
    y: float
    theta: float
    x_ref: float
    y_ref: float
    theta_ref: float
    e1: float
    e2: float
    e3: float
    v: float
    omega: float
    v_ref: float
    omega_ref: float
    stage_cost: float
    terminal_cost: float
    qp_status: str
    slack: float
    min_dist: float


@dataclass
class SimLog:
    scenario: Scenario
    rows: list
    halted: bool = False
    halt_reason: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


@dataclass(frozen=True)
class Metrics:
    """Aggregates over one log; min_clearance is +inf when no obstacles."""

    xy_error_sum: float
    input_effort: tuple
    converged: bool
    min_clearance: float
    lyapunov_violations: int
    slack_total: float
    halted: bool


# -- obstacle agents -------------------------------------------------------------


class _StaticAgent:
    def __init__(self, spec: ObstacleSpec):
        self.obs = Obstacle(np.array(spec.position), spec.radius)

    def snapshot(self, k: int) -> Obstacle:
        return self.obs

    def advance(self, k: int):
        pass


class _LinearAgent:
    def __init__(self, spec: ObstacleSpec, T: float):
        self.p0 = np.array(spec.position, dtype=float)
        self.v = np.array(spec.velocity, dtype=float)
        self.r = spec.radius
        self.T = T

    def snapshot(self, k: int) -> Obstacle:
        return Obstacle(self.p0 + self.v * (k * self.T), self.r, self.v)

    def advance(self, k: int):
        pass


class _UnicycleAgent:
    def __init__(self, spec: ObstacleSpec, n_points: int, reference_mode: str):
        self.radius = spec.radius
        self.ref = build_reference(spec.trajectory, n_points, reference_mode)
        self.z = self.ref[0].state
        self.T = spec.trajectory.T
        self._pending = None
        if spec.control == "mpc":
            models = [linearize(self.ref[i], self.T) for i in range(len(self.ref))]
            costs = CostMatrices(np.diag([1.0, 1.0, 0.5]), np.diag([0.1, 0.05]))
            schedule = backward_riccati(models, costs)
            self.controller = MpcController(self.ref, models, schedule, costs, MpcConfig())
        else:
            self.controller = None

    def _plan(self, k: int) -> ControlInput:
        if self.controller is not None:
            return self.controller.control_step(self.z, k).u_applied
        return self.ref[k].control

    def snapshot(self, k: int) -> Obstacle:
        self._pending = self._plan(k)
        vel = self._pending.v * np.array([math.cos(self.z.theta), math.sin(self.z.theta)])
        return Obstacle(np.array([self.z.x, self.z.y]), self.radius, vel)

    def advance(self, k: int):
        self.z = step_discrete(self.z, self._pending, self.T)


def _make_agent(spec: ObstacleSpec, T: float, n_points: int, reference_mode: str):
    if spec.kind == "static":
        return _StaticAgent(spec)
    if spec.kind == "linear":
        return _LinearAgent(spec, T)
    return _UnicycleAgent(spec, n_points, reference_mode)


# -- main loop ----------------------------------------------------------------------


def build_controller(scn: Scenario):
    """The controller and obstacle agents exactly as run_scenario builds them
    (exposed so figure dumps can replay a run and inspect controller state)."""
    T = scn.trajectory.T
    n_points = scn.duration + scn.cfg.N + 1
    ref = build_reference(scn.trajectory, n_points, scn.reference_mode)
    models = [linearize(ref[i], T) for i in range(len(ref))]
    costs = scn.costs()
    schedule = backward_riccati(models, costs)
    controller = MpcController(ref, models, schedule, costs, scn.cfg)
    agents = [_make_agent(o, T, n_points, scn.reference_mode) for o in scn.obstacles]
    return controller, agents


def run_scenario(scn: Scenario) -> SimLog:
    T = scn.trajectory.T
    controller, agents = build_controller(scn)
    ref = controller.traj

    z = ref[0].state if scn.initial_state is None else RobotState(*scn.initial_state)
    rows = []
    halted = False
    reason = ""
    for k in range(scn.duration):
        obstacles = [a.snapshot(k) for a in agents]
        if scn.controller == "lqr":
            step = controller.lqr_control_step(z, k)
        else:
            step = controller.control_step(z, k, obstacles)
        p = np.array([z.x, z.y])
        min_dist = math.inf
        for o in obstacles:
            min_dist = min(min_dist, float(np.linalg.norm(o.position - p)))
        e = step.predicted_errors[0]
        rp = ref[k]
        rows.append(SimRow(
            k=k, t=k * T, x=z.x, y=z.y, theta=z.theta,
            x_ref=rp.state.x, y_ref=rp.state.y, theta_ref=rp.state.theta,
            e1=e[0], e2=e[1], e3=e[2],
            v=step.u_applied.v, omega=step.u_applied.omega,
            v_ref=rp.control.v, omega_ref=rp.control.omega,
            stage_cost=step.stage_cost, terminal_cost=step.terminal_cost,
            qp_status=step.qp_status, slack=step.slack_used, min_dist=min_dist,
        ))
        if step.qp_status == "infeasible":
            halted = True
            reason = f"unrecoverable QP infeasibility at step {k}"
            break
        z = step_discrete(z, step.u_applied, T)
        for a in agents:
            a.advance(k)
    return SimLog(scn, rows, halted, reason)


def compute_metrics(log: SimLog) -> Metrics:
    rows = log.rows
    if not rows:
        raise ValueError("empty log")
    e = np.array([[r.e1, r.e2, r.e3] for r in rows])
    xy_error_sum = float(np.sum(np.abs(e[:, 0])) + np.sum(np.abs(e[:, 1])))
    effort = (float(sum(abs(r.v) for r in rows)), float(sum(abs(r.omega) for r in rows)))
    n_tail = max(1, math.ceil(CONVERGENCE_WINDOW * len(rows)))
    tail = np.max(np.abs(e[-n_tail:]), axis=1)
    converged = bool(np.all(tail < CONVERGENCE_TOL)) and not log.halted
    min_clearance = float(min((r.min_dist for r in rows), default=math.inf))

    e_inf = np.max(np.abs(e), axis=1)
    entered = np.nonzero(e_inf < LYAP_ENTRY)[0]
    violations = 0
    if entered.size:
        k0 = int(entered[0])
        for i in range(k0, len(rows) - 1):
            decrease = rows[i].terminal_cost - rows[i + 1].terminal_cost
            if decrease + LYAP_TOL < rows[i].stage_cost:
                violations += 1
    slack_total = float(sum(r.slack for r in rows))
    return Metrics(xy_error_sum, effort, converged, min_clearance, violations,
                   slack_total, log.halted)


# -- parameter studies ----------------------------------------------------------------


def _run_sweep_case(args):
    scn, param, value = args
    if param == "N":
        scn = replace(scn, cfg=replace(scn.cfg, N=int(value)))
    elif param == "beta":
        scn = replace(scn, cfg=replace(scn.cfg, beta=float(value)))
    else:
        raise ValueError(f"unknown sweep parameter '{param}'")
    scn = replace(scn, name=f"{scn.name}_{param}{value}")
    log = run_scenario(scn)
    return value, log, compute_metrics(log)


def sweep(scn: Scenario, param: str, values, jobs: int = 1):
    """Run the scenario once per parameter value; returns [(value, log, metrics)]."""
    cases = [(scn, param, v) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_sweep_case, cases))
    return [_run_sweep_case(c) for c in cases]


def lqr_comparison(scn: Scenario):
    """Same scenario under MPC and under unclipped per-step LQR."""
    log_mpc = run_scenario(replace(scn, controller="mpc", name=f"{scn.name}_mpc"))
    log_lqr = run_scenario(replace(scn, controller="lqr", name=f"{scn.name}_lqr"))
    return log_mpc, log_lqr


# -- CSV io ------------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def log_to_csv(log: SimLog) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in log.rows:
        lines.append(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_log_csv(log: SimLog, path):
    with open(path, "w") as f:
        f.write(log_to_csv(log))


def read_log_csv(path):
    """Parse a log CSV back into a list of SimRow."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected log columns in {path}")
        rows = []
        for line in f:
            vals = line.strip().split(",")
            d = dict(zip(CSV_COLUMNS, vals))
            rows.append(SimRow(
                k=int(d["k"]), t=float(d["t"]), x=float(d["x"]), y=float(d["y"]),
                theta=float(d["theta"]), x_ref=float(d["x_ref"]), y_ref=float(d["y_ref"]),
                theta_ref=float(d["theta_ref"]), e1=float(d["e1"]), e2=float(d["e2"]),
                e3=float(d["e3"]), v=float(d["v"]), omega=float(d["omega"]),
                v_ref=float(d["v_ref"]), omega_ref=float(d["omega_ref"]),
                stage_cost=float(d["stage_cost"]), terminal_cost=float(d["terminal_cost"]),
                qp_status=d["qp_status"], slack=float(d["slack"]),
                min_dist=float(d["min_dist"]),
            ))
    return rows
