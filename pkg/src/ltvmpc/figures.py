"""Plot-data CSV bundles derived from simulation logs.

Every public function returns CSV text; write_run_bundle emits the standard
set next to a log file. The files are deliberately tiny and tool-agnostic
(gnuplot, pandas, a spreadsheet) — this package ships no plotting code.
"""

from __future__ import annotations

from pathlib import Path

from .avoidance import velocity_debug_csv
from .dynamics import RobotState, step_discrete
from .sim import Scenario, SimLog, _fmt, _make_agent, build_controller, run_scenario


def _table(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def trajectory_overlay_csv(rows) -> str:
    """Robot path against the reference path."""
    return _table(("k", "t", "x", "y", "x_ref", "y_ref"),
                  ((r.k, r.t, r.x, r.y, r.x_ref, r.y_ref) for r in rows))


def error_curves_csv(rows) -> str:
    return _table(("t", "e1", "e2", "e3", "e_inf"),
                  ((r.t, r.e1, r.e2, r.e3, max(abs(r.e1), abs(r.e2), abs(r.e3)))
                   for r in rows))


def control_curves_csv(rows) -> str:
    return _table(("t", "v", "omega", "v_ref", "omega_ref"),
                  ((r.t, r.v, r.omega, r.v_ref, r.omega_ref) for r in rows))


def cost_curves_csv(rows) -> str:
    return _table(("t", "stage_cost", "terminal_cost", "slack", "min_dist"),
                  ((r.t, r.stage_cost, r.terminal_cost, r.slack, r.min_dist)
                   for r in rows))


def obstacle_paths_csv(scn: Scenario, n_steps: int = None) -> str:
    """Obstacle disc positions over time, replayed from the scenario spec.

    Obstacle agents never react to the primary robot, so the replay is exact.
    """
    if n_steps is None:
        n_steps = scn.duration
    T = scn.trajectory.T
    n_points = scn.duration + scn.cfg.N + 1
    agents = [_make_agent(o, T, n_points, scn.reference_mode) for o in scn.obstacles]
    rows = []
    for k in range(n_steps):
        for i, a in enumerate(agents):
            obs = a.snapshot(k)
            rows.append((k, k * T, i, obs.position[0], obs.position[1], obs.radius))
        for a in agents:
            a.advance(k)
    return _table(("k", "t", "obstacle", "x", "y", "radius"), rows)


def sweep_summary_csv(param: str, results) -> str:
    """One metrics row per sweep value; results as returned by sim.sweep."""
    rows = []
    for value, log, m in results:
        rows.append((value, m.xy_error_sum, m.input_effort[0], m.input_effort[1],
                     int(m.converged), m.min_clearance, m.lyapunov_violations,
                     m.slack_total, int(m.halted)))
    return _table((param, "xy_error_sum", "effort_v", "effort_omega", "converged",
                   "min_clearance", "lyapunov_violations", "slack_total", "halted"),
                  rows)


def lqr_compare_csv(log_mpc: SimLog, log_lqr: SimLog) -> str:
    """Per-step controls of the paired runs, aligned on k."""
    n = min(len(log_mpc.rows), len(log_lqr.rows))
    rows = []
    for i in range(n):
        a, b = log_mpc.rows[i], log_lqr.rows[i]
        rows.append((a.k, a.t, a.v, a.omega, b.v, b.omega,
                     abs(a.v - b.v), abs(a.omega - b.omega)))
    return _table(("k", "t", "v_mpc", "omega_mpc", "v_lqr", "omega_lqr",
                   "dv", "domega"), rows)


def terminal_set_csv(levels) -> str:
    """Level schedule rows (i, c, 8 vertices) from compute_c_schedule output."""
    header = ["i", "c"]
    for j in range(8):
        header += [f"v{j}_e1", f"v{j}_e2", f"v{j}_e3"]
    rows = []
    for i, (c, poly) in enumerate(levels):
        rows.append([i, c] + list(poly.vertices.reshape(-1)))
    return _table(tuple(header), rows)


def velocity_space_csv(scn: Scenario, k: int = None) -> str:
    """Velocity-space dump (cone, tangent plane, per-step rows) at step k.

    With k omitted the step of closest obstacle approach is used. The scenario
    is replayed from scratch, so the dump reflects exactly what the controller
    saw at that step. Raises if the scenario never produced velocity rows.
    """
    if k is None:
        log = run_scenario(scn)
        if not log.rows:
            raise ValueError("empty scenario")
        k = min(log.rows, key=lambda r: r.min_dist).k
    controller, agents = build_controller(scn)
    z = controller.traj[0].state if scn.initial_state is None else RobotState(*scn.initial_state)
    T = scn.trajectory.T
    for j in range(k + 1):
        obstacles = [a.snapshot(j) for a in agents]
        step = controller.control_step(z, j, obstacles)
        if j == k:
            break
        z = step_discrete(z, step.u_applied, T)
        for a in agents:
            a.advance(j)
    if controller.last_debug is None:
        raise ValueError(f"no velocity-space constraint active at step {k}")
    return velocity_debug_csv(*controller.last_debug)


def write_run_bundle(log: SimLog, out_dir, stem: str = None):
    """Write the standard per-run bundle; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or log.scenario.name
    parts = {
        "trajectory": trajectory_overlay_csv(log.rows),
        "errors": error_curves_csv(log.rows),
        "controls": control_curves_csv(log.rows),
        "costs": cost_curves_csv(log.rows),
    }
    if log.scenario.obstacles:
        parts["obstacles"] = obstacle_paths_csv(log.scenario, len(log.rows))
    paths = []
    for label, text in parts.items():
        p = out / f"{stem}_{label}.csv"
        p.write_text(text)
        paths.append(p)
    return paths
