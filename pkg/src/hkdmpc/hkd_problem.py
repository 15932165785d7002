"""HKD trajectory-optimization phases on the MPC grid.

Builds the :class:`~hkdmpc.hsddp.Phase` sequence for one MPC update: nodes at
``now + k dt`` take the scheduled contact mode, runs of equal mode become phases,
and each phase carries its references, friction and clearance inequalities, and
the touchdown-height equality at its end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostWeights, NodeReference, cost_derivatives, running_cost, terminal_cost, terminal_cost_derivatives
from .hkd_model import (
    N_LEGS,
    NU,
    NX,
    ContactMode,
    RobotParams,
    ctrl_slot,
    dynamics_point,
    foot_world,
    hover_control,
    leg_forward_kinematics,
    leg_jacobian,
    leg_slot,
    linearize,
    reset_jacobian,
    reset_vector,
    swing_foot_jacobian,
)
from .hsddp import Phase, SolverConfig
from .reference import ContactSchedule, ReferenceTrajectory, interpolate


class HkdPhase(Phase):
    """Constant-mode HKD phase with forward-Euler dynamics.

    Args:
        mode: contact mode of every node in the phase.
        next_mode: mode of the following phase, or None for the last phase.
        t0: absolute time of the first node.
        refs: body (N+1, 12), joints (N+1, 12), p_rel (N+1, 4, 3) references.
        u_prev: previous-solution controls (N, 12) for the smoothness term;
            None uses :meth:`default_controls`.
        touchdown_keys: one hashable per leg that touches down at the phase end.
    """

    nx = NX
    nu = NU

    def __init__(
        self,
        mode: ContactMode,
        next_mode: ContactMode | None,
        t0: float,
        n_nodes: int,
        params: RobotParams,
        weights: CostWeights,
        config: SolverConfig,
        body_ref: np.ndarray,
        joint_ref: np.ndarray,
        p_rel: np.ndarray,
        u_prev: np.ndarray | None = None,
        touchdown_keys: dict | None = None,
    ):
        if n_nodes < 1:
            raise ValueError("a phase needs at least one node")
        self.mode = mode
        self.tag = mode
        self.next_mode = next_mode
        self.t0 = float(t0)
        self.n_nodes = int(n_nodes)
        self.dt = config.dt
        self.params = params
        self.weights = weights
        self.stance = mode.stance
        self.stance_legs = [j for j in range(N_LEGS) if self.stance[j]]
        self.swing_legs = [j for j in range(N_LEGS) if not self.stance[j]]
        self._joint_rate_ref = np.diff(joint_ref, axis=0) / self.dt
        if u_prev is None:
            u_prev = self.default_controls()
        self._stage_ref = NodeReference(body_ref[:-1], joint_ref[:-1], p_rel[:-1], u_prev)
        self._final_ref = NodeReference(body_ref[-1], joint_ref[-1], p_rel[-1])
        self.n_ineq = 5 * len(self.stance_legs) + len(self.swing_legs)
        touchdown_keys = touchdown_keys or {}
        self.touchdown_legs = sorted(touchdown_keys)
        self.equality_keys = tuple(touchdown_keys[j] for j in self.touchdown_legs)

    def set_smoothing_reference(self, u_prev: np.ndarray) -> None:
        """Replace the controls the smoothness term pulls toward."""
        self._stage_ref = NodeReference(self._stage_ref.body, self._stage_ref.joints, self._stage_ref.p_rel, u_prev)

    # dynamics -------------------------------------------------------------

    def step(self, k, x, u):
        return x + self.dt * dynamics_point(x, u, self.stance, self.params)

    def linearize(self, xs, us):
        A, B = linearize(xs, us, self.stance, self.params)
        A *= self.dt
        A[..., np.arange(NX), np.arange(NX)] += 1.0
        return A, self.dt * B

    def reset(self, x):
        if self.next_mode is None:
            return x
        return reset_vector(x, self.mode, self.next_mode, self.params)

    def reset_jacobian(self, x):
        if self.next_mode is None:
            return np.eye(NX)
        return reset_jacobian(x, self.mode, self.next_mode, self.params)

    # costs ----------------------------------------------------------------

    def stage_cost(self, xs, us):
        return self.dt * running_cost(xs, us, self.stance, self._stage_ref, self.weights)

    def stage_cost_derivatives(self, xs, us):
        return tuple(self.dt * d for d in cost_derivatives(xs, us, self.stance, self._stage_ref, self.weights))

    def terminal_cost(self, x):
        return self.dt * float(terminal_cost(x, self.stance, self._final_ref, self.weights))

    def terminal_cost_derivatives(self, x):
        lx, lxx = terminal_cost_derivatives(x, self.stance, self._final_ref, self.weights)
        return self.dt * lx, self.dt * lxx

    # constraints ----------------------------------------------------------

    def inequality(self, xs, us):
        mu = self.params.friction_mu
        cols = []
        for j in self.stance_legs:
            f = us[:, ctrl_slot(j)]
            fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
            cols += [fz, mu * fz - fx, mu * fz + fx, mu * fz - fy, mu * fz + fy]
        if self.swing_legs:
            cols.extend(_swing_heights(xs, self.swing_legs, self.params)[0])
        return np.stack(cols, axis=-1) if cols else np.zeros((len(us), 0))

    def inequality_jacobians(self, xs, us):
        n = len(us)
        gx = np.zeros((n, self.n_ineq, NX))
        gu = np.zeros((n, self.n_ineq, NU))
        mu = self.params.friction_mu
        rows = np.array([[0, 0, 1], [-1, 0, mu], [1, 0, mu], [0, -1, mu], [0, 1, mu]], dtype=float)
        r = 0
        for j in self.stance_legs:
            gu[:, r : r + 5, ctrl_slot(j)] = rows
            r += 5
        if self.swing_legs:
            gx[:, r:, :] = _swing_heights(xs, self.swing_legs, self.params, jacobian=True)[1]
        return gx, gu

    def terminal_equality(self, x):
        return np.array([foot_world(x, j, False, self.params)[2] for j in self.touchdown_legs])

    def terminal_equality_jacobian(self, x):
        if not self.touchdown_legs:
            return np.zeros((0, NX))
        return np.stack([swing_foot_jacobian(x, j, self.params)[2] for j in self.touchdown_legs])

    # warm starts ----------------------------------------------------------

    def default_controls(self):
        """Hover forces on stance legs, reference joint rates on swing legs."""
        u = np.tile(hover_control(self.params, self.mode), (self.n_nodes, 1))
        for j in self.swing_legs:
            u[:, ctrl_slot(j)] = self._joint_rate_ref[:, 3 * j : 3 * j + 3]
        return u

    def adapt_control(self, k, u, tag):
        if tag is None or tag == self.mode:
            return np.array(u, dtype=float)
        out = np.array(u, dtype=float)
        default = self.default_controls()[k]
        for j in range(N_LEGS):
            if tag[j] != self.mode[j]:
                out[ctrl_slot(j)] = default[ctrl_slot(j)]
        return out


def _swing_heights(xs, legs, params, jacobian=False):
    """World foot heights of swing ``legs`` over nodes ``xs`` and optionally their
    state Jacobians, sharing one rotation evaluation."""
    roll, pitch = xs[:, 0], xs[:, 1]
    cr, sr, cp, sp = np.cos(roll), np.sin(roll), np.cos(pitch), np.sin(pitch)
    r2 = np.stack([-sp, cp * sr, cp * cr], axis=-1)  # third row of R
    heights = []
    jac = np.zeros((len(xs), len(legs), NX)) if jacobian else None
    for i, j in enumerate(legs):
        q = xs[:, leg_slot(j)]
        fk = leg_forward_kinematics(q, j, params)
        heights.append(xs[:, 5] + np.sum(r2 * fk, axis=-1))
        if jacobian:
            jac[:, i, 0] = cp * cr * fk[:, 1] - cp * sr * fk[:, 2]
            jac[:, i, 1] = -cp * fk[:, 0] - sp * sr * fk[:, 1] - sp * cr * fk[:, 2]
            jac[:, i, 5] = 1.0
            jac[:, i, leg_slot(j)] = np.einsum("ni,nij->nj", r2, leg_jacobian(q, j, params))
    return heights, jac


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to build MPC problems along one reference."""

    reference: ReferenceTrajectory
    schedule: ContactSchedule
    params: RobotParams
    weights: CostWeights = CostWeights()
    config: SolverConfig = SolverConfig()

    def node_times(self, now: float) -> np.ndarray:
        return now + self.config.dt * np.arange(self.config.n_nodes + 1)

    def node_modes(self, now: float) -> list[ContactMode]:
        return [self.schedule.mode_at(t) for t in self.node_times(now)[:-1]]


def _touchdown_key(schedule: ContactSchedule, t_end: float, leg: int):
    """Key an equality by leg and the nearest scheduled switch time (stable across replans)."""
    sw = schedule.switch_times()
    t_sw = float(sw[np.argmin(np.abs(sw - t_end))]) if len(sw) else t_end
    return (leg, round(t_sw, 6))


def reference_window(spec: ProblemSpec, times: np.ndarray):
    """Body, joint, and foot-offset references at ``times`` (held past the end)."""
    traj = spec.reference
    tq = np.clip(times, traj.t[0], traj.t[-1])
    dense = interpolate(traj, tq)
    body = dense.body
    joints = dense.joint_q.reshape(len(tq), 12)
    p_rel = dense.foot_pos_ref - body[:, None, 3:6]
    return body, joints, p_rel


def build_phases(
    spec: ProblemSpec,
    now: float,
    u_prev: np.ndarray | None = None,
) -> list[HkdPhase]:
    """Phase sequence for an MPC update at ``now``.

    ``u_prev`` are node-aligned controls from the (shifted) previous solution and
    feed the smoothness term; None (cold start) uses each phase's default
    controls so swing joint rates stay regularized.
    """
    cfg = spec.config
    times = spec.node_times(now)
    modes = spec.node_modes(now)
    body, joints, p_rel = reference_window(spec, times)
    phases = []
    a = 0
    n = len(modes)
    while a < n:
        b = a
        while b < n and modes[b] == modes[a]:
            b += 1
        mode = modes[a]
        next_mode = modes[b] if b < n else None
        keys = {}
        if next_mode is not None:
            for j in range(N_LEGS):
                if not mode[j] and next_mode[j]:
                    keys[j] = _touchdown_key(spec.schedule, times[b], j)
        phases.append(
            HkdPhase(
                mode,
                next_mode,
                times[a],
                b - a,
                spec.params,
                spec.weights,
                cfg,
                body[a : b + 1],
                joints[a : b + 1],
                p_rel[a : b + 1],
                u_prev[a:b] if u_prev is not None else None,
                keys,
            )
        )
        a = b
    return phases


def initial_state_from_reference(spec: ProblemSpec, t: float, mode: ContactMode | None = None) -> np.ndarray:
    """State vector built from the reference at ``t``: stance feet at the reference footholds."""
    mode = spec.schedule.mode_at(t) if mode is None else mode
    body, joints, p_rel = reference_window(spec, np.array([t]))
    x = np.zeros(NX)
    x[:12] = body[0]
    for j in range(N_LEGS):
        if mode[j]:
            foot = body[0, 3:6] + p_rel[0, j]
            foot[2] = 0.0
            x[leg_slot(j)] = foot
        else:
            x[leg_slot(j)] = joints[0, 3 * j : 3 * j + 3]
    return x


def align_initial_state(x: np.ndarray, measured_mode: ContactMode, first_mode: ContactMode, params) -> np.ndarray:
    """Reset the measured state into the first planned mode when they disagree."""
    if measured_mode == first_mode:
        return np.asarray(x, dtype=float)
    return reset_vector(x, measured_mode, first_mode, params)


def predicted_footholds(solution, phases: list[HkdPhase]) -> dict[int, tuple[float, np.ndarray]]:
    """First predicted touchdown per leg in the horizon: ``leg -> (t, world position)``."""
    out = {}
    for ph, xs in zip(phases, solution.states):
        for j in ph.touchdown_legs:
            if j not in out:
                out[j] = (ph.t0 + ph.n_nodes * ph.dt, foot_world(xs[-1], j, False, ph.params))
    return out


def friction_residuals(solution, phases: list[HkdPhase]) -> tuple[float, float]:
    """Worst ``(-f_z)`` and worst ``|f_xy| - mu f_z`` over stance nodes."""
    worst_fz = -np.inf
    worst_cone = -np.inf
    for ph, us in zip(phases, solution.controls):
        mu = ph.params.friction_mu
        for j in ph.stance_legs:
            f = us[:, ctrl_slot(j)]
            worst_fz = max(worst_fz, float(np.max(-f[:, 2])))
            worst_cone = max(worst_cone, float(np.max(np.abs(f[:, :2]) - mu * f[:, 2:3])))
    return worst_fz, worst_cone


def min_swing_clearance(solution, phases: list[HkdPhase]) -> float:
    """Lowest world foot height over all swing nodes."""
    lo = np.inf
    for ph, xs in zip(phases, solution.states):
        for j in ph.swing_legs:
            lo = min(lo, float(np.min(foot_world(xs[:-1], j, False, ph.params)[:, 2])))
    return lo
