"""Reference roll-outs: CSV I/O, contact debouncing, phase segmentation,
cross-morphology scaling, resampling, and a synthetic gait generator.

Roll-out CSV columns (header row required, SI units)::

    t, px,py,pz, vx,vy,vz, roll,pitch,yaw, wx,wy,wz,
    q00..q32 (leg, joint), c0..c3, f0x,f0y,f0z .. f3x,f3y,f3z

Angular velocity is body frame; foot references are world frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .hkd_model import (
    N_LEGS,
    ContactMode,
    RobotParams,
    leg_inverse_kinematics,
    rotation_matrix,
)
from .leg_control import SwingTrajectory, bezier_eval

ROLLOUT_RATE = 30.0

CSV_COLUMNS = (
    ["t", "px", "py", "pz", "vx", "vy", "vz", "roll", "pitch", "yaw", "wx", "wy", "wz"]
    + [f"q{j}{k}" for j in range(N_LEGS) for k in range(3)]
    + [f"c{j}" for j in range(N_LEGS)]
    + [f"f{j}{a}" for j in range(N_LEGS) for a in "xyz"]
)


class RolloutParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class RolloutValidationError(ValueError):
    pass


class WindowError(ValueError):
    """Requested times fall outside the trajectory."""


@dataclass(frozen=True)
class ReferenceSample:
    t: float
    com_pos: np.ndarray
    com_vel: np.ndarray
    euler: np.ndarray
    ang_vel: np.ndarray
    joint_q: np.ndarray  # (4, 3)
    contact: np.ndarray  # (4,) bool
    foot_pos_ref: np.ndarray  # (4, 3) world


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Time-sampled roll-out, stored column-wise."""

    t: np.ndarray
    com_pos: np.ndarray
    com_vel: np.ndarray
    euler: np.ndarray
    ang_vel: np.ndarray
    joint_q: np.ndarray
    contact: np.ndarray
    foot_pos_ref: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t)
        shapes = {
            "com_pos": (n, 3),
            "com_vel": (n, 3),
            "euler": (n, 3),
            "ang_vel": (n, 3),
            "joint_q": (n, N_LEGS, 3),
            "contact": (n, N_LEGS),
            "foot_pos_ref": (n, N_LEGS, 3),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=bool if name == "contact" else float)
            if arr.shape != shape:
                raise RolloutValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        t = np.asarray(self.t, dtype=float).copy()
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ReferenceSample:
        return ReferenceSample(
            float(self.t[i]),
            self.com_pos[i],
            self.com_vel[i],
            self.euler[i],
            self.ang_vel[i],
            self.joint_q[i],
            self.contact[i],
            self.foot_pos_ref[i],
        )

    def __iter__(self) -> Iterator[ReferenceSample]:
        return (self[i] for i in range(len(self)))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @classmethod
    def from_samples(cls, samples: Sequence[ReferenceSample]) -> "ReferenceTrajectory":
        return cls(
            t=np.array([s.t for s in samples]),
            com_pos=np.array([s.com_pos for s in samples]),
            com_vel=np.array([s.com_vel for s in samples]),
            euler=np.array([s.euler for s in samples]),
            ang_vel=np.array([s.ang_vel for s in samples]),
            joint_q=np.array([s.joint_q for s in samples]),
            contact=np.array([s.contact for s in samples], dtype=bool),
            foot_pos_ref=np.array([s.foot_pos_ref for s in samples]),
        )

    def validate(self) -> "ReferenceTrajectory":
        if len(self.t) == 0:
            raise RolloutValidationError("trajectory is empty")
        if np.any(np.diff(self.t) <= 0):
            i = int(np.argmax(np.diff(self.t) <= 0)) + 1
            raise RolloutValidationError(f"timestamps must be strictly increasing (sample {i})")
        for name in ("t", "com_pos", "com_vel", "euler", "ang_vel", "joint_q", "foot_pos_ref"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise RolloutValidationError(f"non-finite value in {name}")
        return self

    def body_states(self) -> np.ndarray:
        """(n, 12) body states in HKD order: euler, position, body rates, velocity."""
        return np.hstack([self.euler, self.com_pos, self.ang_vel, self.com_vel])


# ---------------------------------------------------------------------------
# CSV I/O


def load_rollout(path: str | Path) -> ReferenceTrajectory:
    """Read and validate a roll-out CSV.

    Raises:
        RolloutParseError: malformed header or row, with the offending line.
        RolloutValidationError: non-monotone time or non-finite values.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise RolloutParseError(1, "missing header row") from None
        if header != CSV_COLUMNS:
            raise RolloutParseError(1, "header does not match the roll-out column layout")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise RolloutParseError(line, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise RolloutParseError(line, str(exc)) from None
    if not rows:
        raise RolloutValidationError("roll-out has no samples")
    data = np.array(rows)
    n = len(data)
    traj = ReferenceTrajectory(
        t=data[:, 0],
        com_pos=data[:, 1:4],
        com_vel=data[:, 4:7],
        euler=data[:, 7:10],
        ang_vel=data[:, 10:13],
        joint_q=data[:, 13:25].reshape(n, N_LEGS, 3),
        contact=data[:, 25:29] > 0.5,
        foot_pos_ref=data[:, 29:41].reshape(n, N_LEGS, 3),
    )
    return traj.validate()


def save_rollout(traj: ReferenceTrajectory, path: str | Path) -> None:
    n = len(traj)
    data = np.hstack(
        [
            traj.t[:, None],
            traj.com_pos,
            traj.com_vel,
            traj.euler,
            traj.ang_vel,
            traj.joint_q.reshape(n, -1),
            traj.contact.astype(float),
            traj.foot_pos_ref.reshape(n, -1),
        ]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# Contacts and phases


def _debounce_1d(raw: np.ndarray, window: int) -> np.ndarray:
    out = np.zeros(len(raw), dtype=bool)
    active = False
    i = 0
    while i < len(raw):
        if active:
            out[i] = active = bool(raw[i])
            i += 1
        elif raw[i]:
            w = raw[i : i + window]
            if w.mean() > 0.5:
                out[i : i + len(w)] = True
                active = True
                i += len(w)
            else:
                i += 1
        else:
            i += 1
    return out


def debounce_contacts(flags: np.ndarray, window: int = 5) -> np.ndarray:
    """Suppress touchdown bounces.

    At each contact onset the raw flags over the next ``window`` steps (fewer at
    the series end) are averaged; the contact is latched for that window only if
    the mean exceeds 0.5, otherwise the onset is dropped.  Liftoffs pass through.
    Accepts a 1-D series or an ``(n, legs)`` array.
    """
    raw = np.asarray(flags).astype(bool)
    if raw.shape[0] < 1:
        raise ValueError("contact series must have at least one sample")
    if raw.ndim == 1:
        return _debounce_1d(raw.astype(float), window)
    return np.stack([_debounce_1d(raw[:, j].astype(float), window) for j in range(raw.shape[1])], axis=1)


@dataclass(frozen=True)
class Phase:
    mode: ContactMode
    duration: float


@dataclass(frozen=True)
class ContactSchedule:
    phases: tuple[Phase, ...]
    start: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        for a, b in zip(self.phases, self.phases[1:]):
            if a.mode == b.mode:
                raise ValueError("consecutive phases must differ in mode")
        if any(p.duration <= 0 for p in self.phases):
            raise ValueError("phase durations must be positive")
        ends = self.start + np.cumsum([p.duration for p in self.phases])
        ends.setflags(write=False)
        object.__setattr__(self, "_ends", ends)

    @property
    def total_duration(self) -> float:
        return float(self._ends[-1] - self.start)

    @property
    def end(self) -> float:
        return float(self._ends[-1])

    def switch_times(self) -> np.ndarray:
        """Absolute times at which the mode changes."""
        return self._ends[:-1]

    def index_at(self, t: float) -> int:
        i = int(np.searchsorted(self._ends, t + 1e-9, side="right"))
        return min(i, len(self.phases) - 1)

    def mode_at(self, t: float) -> ContactMode:
        """Mode active at time ``t``; the last mode holds past the end."""
        return self.phases[self.index_at(t)].mode

    def phase_bounds(self, i: int) -> tuple[float, float]:
        lo = self.start if i == 0 else float(self._ends[i - 1])
        return lo, float(self._ends[i])

    def expand(self, dt: float) -> np.ndarray:
        """Per-step ``(n, 4)`` contact flags (inverse of :func:`segment_phases`)."""
        rows = []
        for ph in self.phases:
            rows.extend([ph.mode.stance] * int(round(ph.duration / dt)))
        return np.array(rows, dtype=bool)

    def to_text(self) -> str:
        return "".join(f"{p.mode.bits} {float(p.duration)!r}\n" for p in self.phases)

    @classmethod
    def from_text(cls, text: str, start: float = 0.0) -> "ContactSchedule":
        phases = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                bits, dur = line.split()
                phases.append(Phase(ContactMode.from_bits(bits), float(dur)))
        return cls(tuple(phases), start)


def segment_phases(contacts: np.ndarray, dt: float, start: float = 0.0) -> ContactSchedule:
    """Run-length encode per-step contact flags into a schedule."""
    flags = np.asarray(contacts, dtype=bool)
    if flags.ndim != 2 or flags.shape[0] == 0:
        raise ValueError("need a non-empty (n, legs) contact array")
    change = np.flatnonzero(np.any(flags[1:] != flags[:-1], axis=1)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(flags)]])
    phases = tuple(Phase(ContactMode(tuple(flags[s])), float((e - s) * dt)) for s, e in zip(starts, ends))
    return ContactSchedule(phases, start)


def schedule_from_reference(traj: ReferenceTrajectory, debounce: bool = True) -> ContactSchedule:
    """Debounce the roll-out contacts and segment them into phases.

    Each sample's flag holds until the next sample, so the schedule starts at the
    first sample time with steps of the roll-out period.
    """
    flags = debounce_contacts(traj.contact) if debounce else traj.contact
    dt = float(np.median(np.diff(traj.t))) if len(traj) > 1 else 1.0 / ROLLOUT_RATE
    return segment_phases(flags, dt, start=float(traj.t[0]))


# ---------------------------------------------------------------------------
# Scaling and resampling


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t)[:, None], axis=0)
    return out


def scale_reference(
    traj: ReferenceTrajectory,
    vel_scale: float,
    height_cap: float,
    axis_scale: Sequence[float] | None = None,
) -> ReferenceTrajectory:
    """Scale horizontal CoM velocity and cap CoM height.

    Horizontal positions are shifted by the integral of the velocity change so
    position and velocity stay consistent.  ``axis_scale`` optionally multiplies
    the x/y velocity scale per axis.  Foot references keep their horizontal
    offset from the CoM; contacts, timing, and joint angles are unchanged.
    """
    if vel_scale <= 0 or height_cap <= 0:
        raise ValueError("vel_scale and height_cap must be positive")
    sx, sy = (1.0, 1.0) if axis_scale is None else (float(axis_scale[0]), float(axis_scale[1]))
    vel = np.array(traj.com_vel)
    vel[:, 0] *= vel_scale * sx
    vel[:, 1] *= vel_scale * sy
    pos = np.array(traj.com_pos)
    pos[:, :2] += _cumtrapz(vel[:, :2] - traj.com_vel[:, :2], traj.t)
    clipped = pos[:, 2] > height_cap
    pos[clipped, 2] = height_cap
    vel[clipped, 2] = 0.0
    feet = np.array(traj.foot_pos_ref)
    feet[:, :, :2] += (pos[:, None, :2] - traj.com_pos[:, None, :2])
    return replace(traj, com_pos=pos, com_vel=vel, foot_pos_ref=feet)


@dataclass(frozen=True)
class DenseReference:
    """Reference interpolated at arbitrary times (MPC grid)."""

    t: np.ndarray
    body: np.ndarray  # (n, 12): euler, pos, ang_vel, vel
    joint_q: np.ndarray  # (n, 4, 3)
    contact: np.ndarray  # (n, 4)
    foot_pos_ref: np.ndarray  # (n, 4, 3)


def interpolate(traj: ReferenceTrajectory, times: np.ndarray, tol: float = 1e-9) -> DenseReference:
    """Linear interpolation (Euler angles along the short arc, contacts held)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.min() < traj.t[0] - tol or times.max() > traj.t[-1] + tol:
        raise WindowError(
            f"window [{times.min():.4f}, {times.max():.4f}] outside reference [{traj.t[0]:.4f}, {traj.t[-1]:.4f}]"
        )
    t = traj.t

    def lin(arr):
        flat = arr.reshape(len(t), -1)
        out = np.empty((len(times), flat.shape[1]))
        for c in range(flat.shape[1]):
            out[:, c] = np.interp(times, t, flat[:, c])
        return out.reshape((len(times),) + arr.shape[1:])

    euler = lin(np.unwrap(traj.euler, axis=0))
    body = np.hstack([euler, lin(traj.com_pos), lin(traj.ang_vel), lin(traj.com_vel)])
    idx = np.clip(np.searchsorted(t, times + tol, side="right") - 1, 0, len(t) - 1)
    return DenseReference(times, body, lin(traj.joint_q), traj.contact[idx], lin(traj.foot_pos_ref))


def resample(
    traj: ReferenceTrajectory, dt_mpc: float, t0: float | None = None, t1: float | None = None
) -> DenseReference:
    """Interpolate onto a uniform grid ``t0, t0 + dt, ..`` up to ``t1``."""
    if dt_mpc <= 0:
        raise ValueError("dt_mpc must be positive")
    t0 = float(traj.t[0]) if t0 is None else t0
    t1 = float(traj.t[-1]) if t1 is None else t1
    n = int(math.floor((t1 - t0) / dt_mpc + 1e-9)) + 1
    return interpolate(traj, t0 + dt_mpc * np.arange(n))


# ---------------------------------------------------------------------------
# Synthetic gaits

GAIT_PAIRS = {
    # leg -> phase offset (fraction of the period)
    "trot": (0.0, 0.5, 0.5, 0.0),
    "pace": (0.0, 0.5, 0.0, 0.5),
}


def _com_path(t: np.ndarray, speed: float, yaw_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Planar CoM position and heading for a constant body-frame speed and turn rate."""
    yaw = yaw_rate * t
    if abs(yaw_rate) < 1e-12:
        xy = np.stack([speed * t, np.zeros_like(t)], axis=-1)
    else:
        r = speed / yaw_rate
        xy = np.stack([r * np.sin(yaw), r * (1.0 - np.cos(yaw))], axis=-1)
    return xy, yaw


def _hip_ground(t, j, speed, yaw_rate, params: RobotParams) -> np.ndarray:
    xy, yaw = _com_path(np.atleast_1d(t), speed, yaw_rate)
    off = params.nominal_foot_offset(j)
    c, s = np.cos(yaw), np.sin(yaw)
    hx = xy[:, 0] + c * off[0] - s * off[1]
    hy = xy[:, 1] + s * off[0] + c * off[1]
    return np.stack([hx, hy, np.zeros_like(hx)], axis=-1)


def synth_gait(
    gait: str,
    speed: float,
    yaw_rate: float,
    period: float,
    duty: float,
    duration: float,
    params: RobotParams,
    height: float | None = None,
    swing_height: float = 0.06,
    rate: float = ROLLOUT_RATE,
) -> ReferenceTrajectory:
    """Kinematically consistent trot or pace reference sampled at ``rate``.

    Zero speed and zero yaw rate give a standing (all-stance) reference.
    Footholds are placed under the hip at mid-stance (Raibert heuristic), i.e.
    shifted by ``v * stance_time / 2`` from the hip at touchdown.
    """
    if gait not in GAIT_PAIRS:
        raise ValueError(f"unknown gait {gait!r}; expected one of {sorted(GAIT_PAIRS)}")
    if not 0.0 < duty < 1.0:
        raise ValueError("duty must lie in (0, 1)")
    if period <= 0:
        raise ValueError("period must be positive")
    height = params.nominal_height if height is None else height
    n = max(int(round(duration * rate)), 2)  # samples at k / rate for k < n
    t = np.arange(n) / rate
    xy, yaw = _com_path(t, speed, yaw_rate)
    c, s = np.cos(yaw), np.sin(yaw)
    pos = np.stack([xy[:, 0], xy[:, 1], np.full(n, height)], axis=-1)
    vel = np.stack([speed * c, speed * s, np.zeros(n)], axis=-1)
    euler = np.stack([np.zeros(n), np.zeros(n), yaw], axis=-1)
    ang_vel = np.tile([0.0, 0.0, yaw_rate], (n, 1))

    standing = speed == 0.0 and yaw_rate == 0.0
    contact = np.ones((n, N_LEGS), dtype=bool)
    feet = np.zeros((n, N_LEGS, 3))
    t_stance = duty * period
    t_swing = period - t_stance
    for j in range(N_LEGS):
        if standing:
            feet[:, j] = _hip_ground(np.zeros(1), j, 0.0, 0.0, params)[0]
            continue
        # phase within the cycle; stance occupies [0, duty)
        cyc = np.mod(t / period + GAIT_PAIRS[gait][j] + 1e-9, 1.0)
        contact[:, j] = cyc < duty
        for i in range(n):
            if contact[i, j]:
                t_td = t[i] - cyc[i] * period
                feet[i, j] = _hip_ground(t_td + 0.5 * t_stance, j, speed, yaw_rate, params)[0]
            else:
                t_lo = t[i] - (cyc[i] - duty) * period
                t_td = t_lo + t_swing
                lo = _hip_ground(t_lo - 0.5 * t_stance, j, speed, yaw_rate, params)[0]
                td = _hip_ground(t_td + 0.5 * t_stance, j, speed, yaw_rate, params)[0]
                swing = SwingTrajectory(lo, td, swing_height, t_swing)
                feet[i, j] = bezier_eval(swing, float(np.clip((t[i] - t_lo) / t_swing, 0.0, 1.0)))[0]

    joint_q = np.zeros((n, N_LEGS, 3))
    for i in range(n):
        R = rotation_matrix(euler[i])
        for j in range(N_LEGS):
            q0 = joint_q[i - 1, j] if i else None
            joint_q[i, j] = leg_inverse_kinematics(R.T @ (feet[i, j] - pos[i]), j, params, q0)
    return ReferenceTrajectory(t, pos, vel, euler, ang_vel, joint_q, contact, feet)
