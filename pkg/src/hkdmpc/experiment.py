"""Run assembly shared by the CLI and the acceptance suite.

A :class:`~hkdmpc.config.RunConfig` is turned into a reference, a contact
schedule, a problem spec, and an MPC controller; :func:`run_retarget` closes the
loop against the truth simulator and :func:`run_bench` times warm-started
replans without a simulator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_robot, resolve_robot_path
from .hkd_model import ContactMode
from .hkd_problem import ProblemSpec, initial_state_from_reference
from .hsddp import IterationRecord
from .mpc_runtime import REPLAN_PERIOD, MpcController
from .reference import (
    ReferenceTrajectory,
    load_rollout,
    save_rollout,
    scale_reference,
    schedule_from_reference,
    synth_gait,
)
from .sim import EpisodeResult, run_episode, write_episode

REFERENCE_MARGIN = 1.0  # s of synthetic reference past the episode end


def build_reference(cfg: RunConfig) -> ReferenceTrajectory:
    """Load or synthesize the reference, then apply cross-morphology scaling."""
    ref = cfg.reference
    if ref.source == "file":
        traj = load_rollout(resolve_robot_path(ref.path, cfg.base_dir))
    else:
        robot = load_robot(ref.robot, cfg.base_dir) if ref.robot else cfg.robot
        traj = synth_gait(
            ref.gait, ref.speed, ref.yaw_rate, ref.period, ref.duty, cfg.duration + REFERENCE_MARGIN, robot,
            swing_height=ref.swing_height,
        )
    sc = cfg.scaling
    if sc.enabled:
        traj = scale_reference(traj, sc.vel_scale, sc.height_cap, sc.axis_scale)
    return traj


def build_spec(cfg: RunConfig, traj: ReferenceTrajectory | None = None) -> ProblemSpec:
    traj = build_reference(cfg) if traj is None else traj
    return ProblemSpec(traj, schedule_from_reference(traj), cfg.robot, cfg.cost, cfg.solver)


def build_controller(cfg: RunConfig, spec: ProblemSpec, record_trace: bool = False) -> MpcController:
    return MpcController(
        spec, cfg.leg_control, cfg.policy_lag, deterministic=cfg.deterministic, record_trace=record_trace
    )


def run_retarget(cfg: RunConfig, out_dir: str | Path | None = None, record_trace: bool = False) -> EpisodeResult:
    """Closed-loop episode; with ``out_dir`` also writes logs, reference, and schedule."""
    spec = build_spec(cfg)
    controller = build_controller(cfg, spec, record_trace)
    result = run_episode(controller, cfg.robot, cfg.truth, cfg.duration, cfg.seed)
    if out_dir is not None:
        out = Path(out_dir)
        write_episode(result, out)
        save_rollout(spec.reference, out / "reference.csv")
        (out / "schedule.txt").write_text(spec.schedule.to_text())
        if record_trace:
            write_episode_trace(controller.trace_log, out / "solver_trace.csv")
    return result


def write_episode_trace(trace_log, path: str | Path) -> None:
    names = [f.name for f in fields(IterationRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replan", "t_request", *names])
        for idx, t, rec in trace_log:
            w.writerow([idx, repr(float(t)), *(getattr(rec, n) for n in names)])


@dataclass(frozen=True)
class _PlanState:
    """Minimal measured-state view accepted by :meth:`MpcController.mpc_step`."""

    x: np.ndarray
    mode: ContactMode

    def hkd_vector(self) -> np.ndarray:
        return self.x


@dataclass(frozen=True)
class BenchReport:
    solve_times: np.ndarray
    iterations: np.ndarray
    failures: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.solve_times)) if len(self.solve_times) else math.nan

    @property
    def p95(self) -> float:
        return float(np.percentile(self.solve_times, 95)) if len(self.solve_times) else math.nan

    def lines(self) -> list[str]:
        counts = np.bincount(self.iterations) if len(self.iterations) else np.zeros(0, dtype=int)
        hist = " ".join(f"{i}:{c}" for i, c in enumerate(counts) if c)
        return [
            f"replans, {len(self.solve_times)}",
            f"failures, {self.failures}",
            f"mean_s, {self.mean:.6f}",
            f"p95_s, {self.p95:.6f}",
            f"max_s, {float(np.max(self.solve_times)) if len(self.solve_times) else math.nan:.6f}",
            f"iterations_mean, {float(np.mean(self.iterations)) if len(self.iterations) else math.nan:.4f}",
            f"iterations_hist, {hist}",
        ]


def run_bench(
    cfg: RunConfig, replans: int = 500, seed: int | None = None, velocity_noise: float = 0.02
) -> BenchReport:
    """Time ``replans`` warm-started MPC updates along the reference.

    The state for each update is the previous plan's prediction at the node
    nearest the replan time, with seeded Gaussian noise on the body velocities so
    the solver does real work.  The cold startup solve is excluded.
    """
    if replans < 1:
        raise ValueError("replans must be at least 1")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dur = (replans + 1) * REPLAN_PERIOD + cfg.solver.horizon
    bench_cfg = cfg if cfg.duration >= dur else replace(cfg, duration=dur)
    spec = build_spec(bench_cfg)
    ctrl = MpcController(spec, bench_cfg.leg_control, bench_cfg.policy_lag, deterministic=True)
    t = float(spec.reference.t[0])
    mode = spec.schedule.mode_at(t)
    state = _PlanState(initial_state_from_reference(spec, t, mode), mode)
    for _ in range(replans + 1):
        ctrl.mpc_step(t, state)
        sol = ctrl.solution
        t += REPLAN_PERIOD
        idx = int(np.argmin(np.abs(sol.node_times - t)))
        x = np.array(sol.node_states[idx])
        x[6:12] += rng.normal(0.0, velocity_noise, 6)
        state = _PlanState(x, sol.node_tags[idx])
    recs = ctrl.replan_log[1:]
    ok = [r for r in recs if not r["failed"]]
    return BenchReport(
        solve_times=np.array([r["solve_time"] for r in recs]),
        iterations=np.array([r["iterations"] for r in ok], dtype=int),
        failures=len(recs) - len(ok),
    )
