"""Desk-scale truth simulator and closed-loop episode runner.

The truth model is a single rigid body with massless legs, like the planner, but
with its own mass and inertia, GRF noise, and scheduled disturbance wrenches.
Contacts follow the schedule: a foot is pinned where it is at touchdown
(projected to the ground) and released at liftoff.  Stance GRFs are recovered
from the commanded joint torques by inverting the stance torque map; swing
joints follow the commanded Cartesian force through a damped, first-order-lag
actuator so swing tracking is imperfect.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hkd_model import (
    GRAVITY_VEC,
    N_LEGS,
    ContactMode,
    RobotParams,
    euler_rate_matrix,
    leg_forward_kinematics,
    leg_inverse_kinematics,
    leg_jacobian,
    rotation_matrix,
)

SIM_DT = 0.002  # s, 500 Hz
FALL_ANGLE = 0.5  # rad, roll or pitch


class SimulationFault(RuntimeError):
    """The truth state became non-finite."""


@dataclass(frozen=True)
class TruthParams:
    """Truth-model deviations from the planner's robot parameters.

    Disturbances are ``(t_start, duration, wrench)`` with a world-frame
    ``wrench = (fx, fy, fz, tx, ty, tz)`` applied at the CoM.
    """

    mass_error_factor: float = 1.0
    inertia_error_factor: float = 1.0
    grf_noise_std: float = 0.0  # N
    disturbances: tuple = ()
    friction_mu: float | None = None
    leg_damping: float = 2.0  # N*s/m, swing-foot admittance
    actuator_tau: float = 0.02  # s

    def __post_init__(self) -> None:
        if self.mass_error_factor <= 0 or self.inertia_error_factor <= 0:
            raise ValueError("error factors must be positive")
        if self.grf_noise_std < 0:
            raise ValueError("grf_noise_std must be nonnegative")
        if self.leg_damping <= 0 or self.actuator_tau <= 0:
            raise ValueError("leg_damping and actuator_tau must be positive")
        dist = tuple((float(t), float(d), tuple(float(w) for w in wrench)) for t, d, wrench in self.disturbances)
        for _, d, wrench in dist:
            if d < 0 or len(wrench) != 6:
                raise ValueError("disturbance needs duration >= 0 and a 6-vector wrench")
        object.__setattr__(self, "disturbances", dist)

    def wrench_at(self, t: float) -> np.ndarray:
        w = np.zeros(6)
        for t0, d, wrench in self.disturbances:
            if t0 <= t < t0 + d:
                w += wrench
        return w


@dataclass(frozen=True)
class SimState:
    t: float
    euler: np.ndarray
    pos: np.ndarray
    omega: np.ndarray  # body frame
    vel: np.ndarray  # world frame
    q: np.ndarray  # (4, 3)
    qdot: np.ndarray  # (4, 3)
    foot_pin: np.ndarray  # (4, 3) world; meaningful for stance legs
    contact: tuple  # stance flag per leg

    @property
    def mode(self) -> ContactMode:
        return ContactMode(self.contact)

    @property
    def body(self) -> np.ndarray:
        return np.concatenate([self.euler, self.pos, self.omega, self.vel])

    def hkd_vector(self, mode: ContactMode | None = None) -> np.ndarray:
        """HKD state vector: footholds for stance legs, joint angles for swing legs."""
        mode = self.mode if mode is None else mode
        legs = [self.foot_pin[j] if mode[j] else self.q[j] for j in range(N_LEGS)]
        return np.concatenate([self.body] + legs)

    def foot_world(self, j: int, params: RobotParams) -> np.ndarray:
        if self.contact[j]:
            return self.foot_pin[j].copy()
        return self.pos + rotation_matrix(self.euler) @ leg_forward_kinematics(self.q[j], j, params)


def initial_sim_state(
    body: np.ndarray, mode: ContactMode, params: RobotParams, t: float = 0.0, swing_q: np.ndarray | None = None
) -> SimState:
    """Robot at the body state ``body`` (12) with stance feet under its own hips."""
    body = np.asarray(body, dtype=float)
    euler, pos = body[0:3], body[3:6]
    R = rotation_matrix(euler)
    q = np.zeros((N_LEGS, 3))
    pins = np.zeros((N_LEGS, 3))
    for j in range(N_LEGS):
        foot = pos + R @ params.nominal_foot_offset(j)
        foot[2] = 0.0
        pins[j] = foot
        q_stance = leg_inverse_kinematics(R.T @ (foot - pos), j, params)
        if mode[j]:
            q[j] = q_stance
        else:
            q[j] = q_stance if swing_q is None else swing_q[j]
    return SimState(t, euler.copy(), pos.copy(), body[6:9].copy(), body[9:12].copy(), q, np.zeros((N_LEGS, 3)), pins, mode.stance)


def _clip_friction(f: np.ndarray, mu: float) -> np.ndarray:
    fz = max(f[2], 0.0)
    return np.array([np.clip(f[0], -mu * fz, mu * fz), np.clip(f[1], -mu * fz, mu * fz), fz])


def _solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(M, b, rcond=None)[0]


def recover_grf(q, tau, euler, leg, params) -> np.ndarray:
    """World GRF on the body implied by stance torques: inverse of the stance torque map."""
    J = leg_jacobian(q, leg, params)
    return -rotation_matrix(euler) @ _solve(J.T, np.asarray(tau, dtype=float))


def sim_step(
    state: SimState,
    torques: np.ndarray,
    mode: ContactMode,
    params: RobotParams,
    truth: TruthParams = TruthParams(),
    dt: float = SIM_DT,
    rng: np.random.Generator | None = None,
) -> tuple[SimState, np.ndarray]:
    """Advance the truth model by ``dt`` under joint ``torques`` (4, 3).

    Returns the next state and the applied world GRFs (4, 3).

    Raises:
        SimulationFault: if the integrated state is not finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    torques = np.asarray(torques, dtype=float).reshape(N_LEGS, 3)
    mu = params.friction_mu if truth.friction_mu is None else truth.friction_mu
    mass = params.mass * truth.mass_error_factor
    inertia = params.body_inertia * truth.inertia_error_factor
    R = rotation_matrix(state.euler)

    q = state.q.copy()
    qdot = state.qdot.copy()
    pins = state.foot_pin.copy()
    # contact transitions at the start of the step
    for j in range(N_LEGS):
        if mode[j] and not state.contact[j]:
            foot = state.pos + R @ leg_forward_kinematics(q[j], j, params)
            foot[2] = 0.0
            pins[j] = foot
            qdot[j] = 0.0
        elif not mode[j] and state.contact[j]:
            qdot[j] = 0.0

    grf = np.zeros((N_LEGS, 3))
    force = np.zeros(3)
    moment = np.zeros(3)
    for j in range(N_LEGS):
        if not mode[j]:
            continue
        f = recover_grf(q[j], torques[j], state.euler, j, params)
        if truth.grf_noise_std > 0:
            if rng is None:
                raise ValueError("GRF noise needs a random generator")
            f = f + rng.normal(0.0, truth.grf_noise_std, 3)
        f = _clip_friction(f, mu)
        grf[j] = f
        force += f
        moment += np.cross(pins[j] - state.pos, f)

    wrench = truth.wrench_at(state.t)
    force += wrench[:3]
    moment += wrench[3:]
    acc = GRAVITY_VEC + force / mass
    w = state.omega
    wdot = np.linalg.solve(inertia, R.T @ moment - np.cross(w, inertia @ w))

    vel = state.vel + dt * acc
    pos = state.pos + dt * vel
    omega = w + dt * wdot
    euler = state.euler + dt * (euler_rate_matrix(state.euler) @ omega)
    R_new = rotation_matrix(euler)

    for j in range(N_LEGS):
        if mode[j]:
            q_new = leg_inverse_kinematics(R_new.T @ (pins[j] - pos), j, params, q[j], tol=1e-9, max_iter=10)
            qdot[j] = (q_new - q[j]) / dt
            q[j] = q_new
        else:
            J = leg_jacobian(q[j], j, params)
            f_foot = _solve(J.T, torques[j])
            qdot_cmd = _solve(J, f_foot / truth.leg_damping)
            qdot[j] += (dt / truth.actuator_tau) * (qdot_cmd - qdot[j])
            q[j] = q[j] + dt * qdot[j]

    nxt = SimState(state.t + dt, euler, pos, omega, vel, q, qdot, pins, mode.stance)
    if not all(np.all(np.isfinite(a)) for a in (euler, pos, omega, vel, q, qdot)):
        raise SimulationFault(f"non-finite truth state at t = {nxt.t:.4f} s (pos {pos}, euler {euler})")
    return nxt, grf


def mechanical_energy(state: SimState, params: RobotParams, truth: TruthParams = TruthParams()) -> float:
    """Translational plus rotational kinetic energy plus potential energy of the truth body."""
    m = params.mass * truth.mass_error_factor
    inertia = params.body_inertia * truth.inertia_error_factor
    return float(
        0.5 * m * state.vel @ state.vel + 0.5 * state.omega @ inertia @ state.omega - m * GRAVITY_VEC[2] * state.pos[2]
    )


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class EpisodeResult:
    metrics: dict
    control_log: list = field(default_factory=list)
    replan_log: list = field(default_factory=list)
    tracking_log: list = field(default_factory=list)
    fell: bool = False
    fault: str = ""
    wall_time: float = 0.0

    @property
    def success(self) -> bool:
        return not self.fell and not self.fault


TRACK_CHANNELS = ("vx", "vy", "z", "roll", "pitch", "yaw")


def _channels(body: np.ndarray) -> np.ndarray:
    return np.array([body[9], body[10], body[5], body[0], body[1], body[2]])


def channel_error(achieved: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Achieved minus reference per tracking channel; angle errors wrapped to [-pi, pi)."""
    err = np.asarray(achieved, dtype=float) - np.asarray(target, dtype=float)
    err[..., 3:] = (err[..., 3:] + np.pi) % (2.0 * np.pi) - np.pi
    return err


def run_episode(
    controller,
    params: RobotParams,
    truth: TruthParams = TruthParams(),
    duration: float = 10.0,
    seed: int = 0,
    dt: float = SIM_DT,
    initial_state: SimState | None = None,
) -> EpisodeResult:
    """Close the loop between ``controller`` and the truth model.

    ``controller`` is an :class:`~hkdmpc.mpc_runtime.MpcController`; the schedule
    and reference come from its problem spec.  The episode stops early on a fall
    (``|roll|`` or ``|pitch|`` above 0.5 rad) or a simulation fault.
    """
    spec = controller.spec
    rng = np.random.default_rng(seed)
    if initial_state is None:
        t0 = float(spec.reference.t[0])
        mode0 = spec.schedule.mode_at(t0)
        body0 = controller.reference_body(t0)
        swing_q = spec.reference.joint_q[0]
        initial_state = initial_sim_state(body0, mode0, params, t0, swing_q)
    state = initial_state
    n_steps = int(round(duration / dt))
    result = EpisodeResult(metrics={})
    errors = []
    wall = time.perf_counter()
    for _ in range(n_steps):
        mode = spec.schedule.mode_at(state.t)
        try:
            torques = controller.step(state.t, state)
        except Exception as exc:  # solver or geometry failure inside the controller
            result.fault = f"controller error at t = {state.t:.3f}: {exc}"
            break
        result.control_log.append(
            (state.t, *state.body, mode.bits, *torques.ravel(), controller.active_bundle_id)
        )
        ref = controller.reference_body(state.t)
        achieved = _channels(state.body)
        target = _channels(ref)
        result.tracking_log.append((state.t, *target, *achieved))
        errors.append(channel_error(achieved, target))
        try:
            state, _ = sim_step(state, torques, mode, params, truth, dt, rng)
        except SimulationFault as exc:
            result.fault = str(exc)
            break
        if abs(state.euler[0]) > FALL_ANGLE or abs(state.euler[1]) > FALL_ANGLE:
            result.fell = True
            break
    result.replan_log = list(controller.replan_log)
    err = np.array(errors) if errors else np.zeros((0, 6))
    metrics = {f"rms_{c}": float(np.sqrt(np.mean(err[:, i] ** 2))) if len(err) else math.nan for i, c in enumerate(TRACK_CHANNELS)}
    solve_times = np.array([r["solve_time"] for r in result.replan_log]) if result.replan_log else np.zeros(0)
    metrics.update(
        fell=result.fell,
        fault=bool(result.fault),
        sim_time=float(state.t - (initial_state.t if initial_state else 0.0)),
        replans=len(result.replan_log),
        replan_failures=int(sum(1 for r in result.replan_log if r["failed"])),
        replan_mean_s=float(np.mean(solve_times)) if len(solve_times) else math.nan,
        replan_p95_s=float(np.percentile(solve_times, 95)) if len(solve_times) else math.nan,
    )
    result.metrics = metrics
    result.wall_time = time.perf_counter() - wall
    return result


def write_episode(result: EpisodeResult, out_dir: str | Path) -> None:
    """Control log, replan log, tracking comparison, and ``metric, value`` summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body_cols = ["roll", "pitch", "yaw", "px", "py", "pz", "wx", "wy", "wz", "vx", "vy", "vz"]
    with open(out / "control_log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *body_cols, "mode_bits", *[f"tau{j}{k}" for j in range(N_LEGS) for k in range(3)], "bundle_id"])
        w.writerows(_fmt_row(r) for r in result.control_log)
    keys = ["t_request", "t_delivered", "cost", "iterations", "eq_residual", "ineq_violation", "solve_time", "failed"]
    with open(out / "replan_log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        w.writerows([_fmt(r[k]) for k in keys] for r in result.replan_log)
    with open(out / "tracking.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[f"ref_{c}" for c in TRACK_CHANNELS], *[f"act_{c}" for c in TRACK_CHANNELS]])
        w.writerows(_fmt_row(r) for r in result.tracking_log)
    with open(out / "metrics.txt", "w") as fh:
        for k, v in result.metrics.items():
            fh.write(f"{k}, {v}\n")


def metrics_from_tracking(path: str | Path) -> dict:
    """Recompute the RMS metrics from a tracking CSV."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    act = np.column_stack([data[f"act_{c}"] for c in TRACK_CHANNELS])
    ref = np.column_stack([data[f"ref_{c}"] for c in TRACK_CHANNELS])
    err = channel_error(act, ref)
    return {f"rms_{c}": float(np.sqrt(np.mean(err[:, i] ** 2))) for i, c in enumerate(TRACK_CHANNELS)}


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _fmt_row(row):
    return [_fmt(v) for v in row]
