"""50 Hz replanning against a 500 Hz control loop.

The planner publishes immutable :class:`ControlBundle` objects.  A bundle becomes
visible to the control loop at its delivery time (solve completion plus the
emulated policy lag).  Every control tick picks the bundle node nearest to the
current time whose contact mode matches the schedule, applies the DDP feedback
gain on the body state, and maps the result to joint torques: stance legs
through ``J^T`` of the GRF, swing legs through Cartesian impedance along a
Bezier swing from the recorded liftoff point to the predicted foothold.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, replace

import numpy as np

from .hkd_model import N_LEGS, ContactMode, ctrl_slot, hover_control, rotation_matrix
from .hkd_problem import ProblemSpec, align_initial_state, build_phases, predicted_footholds, reference_window
from .hsddp import Solution, SolverFailure, shift_warm_start, solve
from .leg_control import LegControlConfig, SwingTrajectory, bezier_eval, stance_torque, swing_torque
from .reference import interpolate

REPLAN_PERIOD = 0.020  # s, 50 Hz
CONTROL_DT = 0.002  # s, 500 Hz
STARTUP_ITERATIONS = 30


@dataclass(frozen=True)
class ControlBundle:
    """Node-level plan handed from the planner to the control loop."""

    bundle_id: int
    node_times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    gains: np.ndarray
    modes: tuple
    footholds: dict
    t_request: float
    t_delivered: float
    solve_time: float = 0.0

    def __post_init__(self) -> None:
        if len(self.node_times) == 0:
            raise ValueError("bundle has no nodes")
        if np.any(np.diff(self.node_times) <= 0):
            raise ValueError("bundle timestamps must be strictly increasing")

    @property
    def dt(self) -> float:
        return float(self.node_times[1] - self.node_times[0]) if len(self.node_times) > 1 else 0.0

    @property
    def end(self) -> float:
        return float(self.node_times[-1] + self.dt)

    def is_stale(self, now: float) -> bool:
        return now > self.end


def bundle_from_solution(sol: Solution, phases, bundle_id: int, t_request: float, t_delivered: float, solve_time=0.0):
    return ControlBundle(
        bundle_id=bundle_id,
        node_times=sol.node_times,
        states=sol.node_states,
        controls=sol.node_controls,
        gains=sol.node_gains,
        modes=tuple(sol.node_tags),
        footholds=predicted_footholds(sol, phases),
        t_request=t_request,
        t_delivered=t_delivered,
        solve_time=solve_time,
    )


def emulate_policy_lag(bundle: ControlBundle, lag: float) -> ControlBundle:
    """Delay the bundle's visibility by ``lag`` seconds."""
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    return replace(bundle, t_delivered=bundle.t_delivered + lag)


def select_node(bundle: ControlBundle, now: float, mode: ContactMode | None = None) -> tuple[int | None, bool]:
    """Index of the node nearest to ``now`` (matching ``mode`` if given) and a staleness flag.

    Past the last node the last matching node is held and the flag is raised.
    Returns ``(None, stale)`` when no node has the requested mode.
    """
    stale = bundle.is_stale(now)
    dist = np.abs(bundle.node_times - now)
    if mode is not None:
        ok = np.array([m == mode for m in bundle.modes])
        if not ok.any():
            return None, stale
        dist = np.where(ok, dist, np.inf)
    return int(np.argmin(dist)), stale


def node_control(bundle: ControlBundle, idx: int, body: np.ndarray) -> np.ndarray:
    """``u_bar + K (x - x_bar)`` with feedback on the 12 body states only."""
    dx = np.asarray(body, dtype=float) - bundle.states[idx, :12]
    return bundle.controls[idx] + bundle.gains[idx, :, :12] @ dx


def select_control(bundle: ControlBundle, now: float, body: np.ndarray, mode: ContactMode | None = None):
    """Control vector (12) at ``now`` for measured body state ``body``; also the staleness flag."""
    idx, stale = select_node(bundle, now, mode)
    if idx is None:
        raise LookupError(f"bundle {bundle.bundle_id} has no node in mode {mode}")
    return node_control(bundle, idx, body), stale


def swing_interval(schedule, leg: int, t: float) -> tuple[float, float]:
    """Liftoff and touchdown times of the swing of ``leg`` containing ``t``."""
    i = schedule.index_at(t)
    lo_i = i
    while lo_i > 0 and not schedule.phases[lo_i - 1].mode[leg]:
        lo_i -= 1
    hi_i = i
    while hi_i + 1 < len(schedule.phases) and not schedule.phases[hi_i + 1].mode[leg]:
        hi_i += 1
    return schedule.phase_bounds(lo_i)[0], schedule.phase_bounds(hi_i)[1]


class BundleSlot:
    """Single-producer single-consumer latest-value handoff."""

    def __init__(self):
        self._lock = threading.Lock()
        self._bundle = None

    def publish(self, bundle: ControlBundle) -> None:
        with self._lock:
            self._bundle = bundle

    def latest(self) -> ControlBundle | None:
        with self._lock:
            return self._bundle


@dataclass
class _Pending:
    bundle: ControlBundle
    record: dict


class MpcController:
    """Planner plus control loop, stepped once per control tick.

    Args:
        spec: reference, schedule, robot, cost weights, and solver settings.
        leg_config: swing height and Cartesian impedance gains.
        policy_lag: delay between solve completion and bundle visibility.
        deterministic: if True the solve is treated as instantaneous in simulated
            time (delivery = request + lag); otherwise measured wall time is added.
        solve_fn: solver entry point, replaceable for fault injection.
        record_trace: keep per-iteration solver diagnostics of every replan in
            :attr:`trace_log` as ``(replan_index, t_request, IterationRecord)``.
    """

    def __init__(
        self,
        spec: ProblemSpec,
        leg_config: LegControlConfig = LegControlConfig(),
        policy_lag: float = 0.006,
        deterministic: bool = True,
        replan_period: float = REPLAN_PERIOD,
        solve_fn=solve,
        startup_iterations: int = STARTUP_ITERATIONS,
        record_trace: bool = False,
    ):
        if policy_lag < 0:
            raise ValueError("policy_lag must be nonnegative")
        self.spec = spec
        self.leg_config = leg_config
        self.policy_lag = policy_lag
        self.deterministic = deterministic
        self.replan_period = replan_period
        self.solve_fn = solve_fn
        self.startup_iterations = startup_iterations
        self.slot = BundleSlot()
        self.replan_log: list[dict] = []
        self.record_trace = record_trace
        self.trace_log: list[tuple] = []
        self.stale = False
        self.degraded = False
        self._pending: list[_Pending] = []
        self._solution: Solution | None = None
        self._solution_time = 0.0
        self._next_replan = -math.inf
        self._last_now = -math.inf
        self._next_id = 0
        self._liftoff: dict[int, np.ndarray] = {}
        self._prev_contact: tuple | None = None

    @property
    def active_bundle_id(self) -> int:
        b = self.slot.latest()
        return -1 if b is None else b.bundle_id

    @property
    def solution(self) -> Solution | None:
        """Latest successful solve."""
        return self._solution

    def reference_body(self, t: float) -> np.ndarray:
        return reference_window(self.spec, np.array([t]))[0][0]

    # planner ---------------------------------------------------------------

    def mpc_step(self, now: float, state) -> dict | None:
        """Replan if one is due at ``now``; returns the replan record or None."""
        if now < self._last_now:
            raise ValueError("time must be monotone")
        self._last_now = now
        if now + 1e-9 < self._next_replan:
            return None
        startup = self._solution is None and not self.replan_log
        self._next_replan = (now if startup else self._next_replan) + self.replan_period
        return self._replan(now, state, startup)

    def _replan(self, now: float, state, startup: bool) -> dict:
        spec = self.spec
        modes = spec.node_modes(now)
        phases = build_phases(spec, now)
        warm = None
        if self._solution is not None:
            warm = shift_warm_start(self._solution, now - self._solution_time, phases)
        if warm is not None:
            for ph, u in zip(phases, warm.controls):
                ph.set_smoothing_reference(u)
        x0 = align_initial_state(state.hkd_vector(), state.mode, modes[0], spec.params)
        duals = self._solution.duals if self._solution is not None else None
        record = dict(t_request=now, t_delivered=math.nan, cost=math.nan, iterations=0, eq_residual=math.nan,
                      ineq_violation=math.nan, solve_time=0.0, failed=False)
        wall = time.perf_counter()
        try:
            sol = self.solve_fn(
                phases, x0, warm_start=warm, config=spec.config, duals=duals,
                max_iterations=self.startup_iterations if startup else None,
            )
        except SolverFailure:
            record["solve_time"] = time.perf_counter() - wall
            record["failed"] = True
            self.degraded = True
            self.replan_log.append(record)
            return record
        solve_time = time.perf_counter() - wall
        if startup:
            delivered = now
        elif self.deterministic:
            delivered = now + self.policy_lag
        else:
            delivered = now + solve_time + self.policy_lag
        bundle = bundle_from_solution(sol, phases, self._next_id, now, delivered, solve_time)
        self._next_id += 1
        self._solution, self._solution_time = sol, now
        if self.record_trace:
            self.trace_log.extend((len(self.replan_log), now, rec) for rec in sol.trace)
        record.update(t_delivered=delivered, cost=sol.cost, iterations=sol.iterations, eq_residual=sol.eq_residual,
                      ineq_violation=sol.ineq_violation, solve_time=solve_time)
        self.replan_log.append(record)
        self._pending.append(_Pending(bundle, record))
        return record

    def _deliver(self, now: float) -> None:
        keep = []
        for p in self._pending:
            if p.bundle.t_delivered <= now + 1e-9:
                self.slot.publish(p.bundle)
            else:
                keep.append(p)
        self._pending = keep

    # control loop -------------------------------------------------------------

    def step(self, now: float, state) -> np.ndarray:
        """Joint torques (4, 3) for the measured truth ``state`` at ``now``."""
        self.mpc_step(now, state)
        self._deliver(now)
        self._track_liftoffs(state)
        return self.compute_torques(now, state)

    def _track_liftoffs(self, state) -> None:
        params = self.spec.params
        for j in range(N_LEGS):
            was = None if self._prev_contact is None else self._prev_contact[j]
            if not state.contact[j] and (was is None or was):
                self._liftoff[j] = state.foot_world(j, params)
        self._prev_contact = tuple(state.contact)

    def compute_torques(self, now: float, state) -> np.ndarray:
        spec = self.spec
        params = spec.params
        mode = spec.schedule.mode_at(now)
        bundle = self.slot.latest()
        u = None
        if bundle is not None:
            idx, self.stale = select_node(bundle, now, mode)
            if idx is not None:
                u = node_control(bundle, idx, state.body)
        if u is None:
            u = hover_control(params, mode)
        taus = np.zeros((N_LEGS, 3))
        R = rotation_matrix(state.euler)
        for j in range(N_LEGS):
            if mode[j]:
                taus[j] = stance_torque(state.q[j], u[ctrl_slot(j)], state.euler, j, params)
            else:
                taus[j] = self._swing_torque(now, state, j, R, bundle)
        return taus

    def _swing_torque(self, now, state, j, R, bundle) -> np.ndarray:
        spec, params, cfg = self.spec, self.spec.params, self.leg_config
        t_lo, t_td = swing_interval(spec.schedule, j, now)
        target = None
        if bundle is not None and j in bundle.footholds:
            t_pred, pos = bundle.footholds[j]
            if abs(t_pred - t_td) < 0.5 * (t_td - t_lo):
                target = pos
        if target is None:
            tq = min(t_td, float(spec.reference.t[-1]))
            target = _reference_foot(spec, tq, j)
        start = self._liftoff.get(j)
        if start is None:
            start = state.foot_world(j, params)
            self._liftoff[j] = start
        target = np.array([target[0], target[1], 0.0])
        traj = SwingTrajectory(start, target, cfg.swing_height, t_td - t_lo)
        s = float(np.clip((now - t_lo) / (t_td - t_lo), 0.0, 1.0))
        p_w, v_w = bezier_eval(traj, s)
        p_b = R.T @ (p_w - state.pos)
        v_b = R.T @ (v_w - state.vel) - np.cross(state.omega, p_b)
        return swing_torque(state.q[j], state.qdot[j], p_b, v_b, cfg.kp, cfg.kd, j, params)


def _reference_foot(spec: ProblemSpec, t: float, j: int) -> np.ndarray:
    return interpolate(spec.reference, np.array([t])).foot_pos_ref[0, j]
