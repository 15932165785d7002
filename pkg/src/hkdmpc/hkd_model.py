"""Hybrid kinodynamic (HKD) quadruped model.

State layout (24): ``[euler(3), com_pos(3), ang_vel(3), lin_vel(3), leg0(3), .., leg3(3)]``
Control layout (12): ``[leg0(3), .., leg3(3)]``

A leg slot means different things depending on the contact mode:

    stance: state slot = foothold p_f (world), control slot = GRF lambda (world)
    swing:  state slot = joint angles q,       control slot = joint velocity u_J

Euler angles are stored as (roll, pitch, yaw) and composed in ZYX order, so the
body-to-world rotation is ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.  ``R`` has the
body axes as columns; ``R.T`` takes world vectors into body coordinates.

Legs are ordered FL, FR, HL, HR.  Each leg is an ab/ad joint about x followed by
hip and knee joints about y.  Left legs have a +l1 lateral link offset, right
legs -l1.

Most functions accept arrays with leading batch dimensions so the solver can
linearize a whole phase in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

GRAVITY = 9.81
GRAVITY_VEC = np.array([0.0, 0.0, -GRAVITY])

NX = 24
NU = 12
N_LEGS = 4
LEG_NAMES = ("FL", "FR", "HL", "HR")
LEG_SIDE = np.array([1.0, -1.0, 1.0, -1.0])

THETA = slice(0, 3)
POS = slice(3, 6)
OMEGA = slice(6, 9)
VEL = slice(9, 12)
BODY = slice(0, 12)

PITCH_MARGIN = 1e-3


def leg_slot(j: int) -> slice:
    """State slice holding leg ``j``'s foothold or joint angles."""
    return slice(12 + 3 * j, 15 + 3 * j)


def ctrl_slot(j: int) -> slice:
    return slice(3 * j, 3 * j + 3)


class SingularityError(ValueError):
    """Euler-angle parameterization hit gimbal lock (pitch near +-pi/2)."""


class ModeMismatchError(ValueError):
    """A state or control leg tag disagrees with the contact mode."""


@dataclass(frozen=True)
class ContactMode:
    """Stance flag per leg (FL, FR, HL, HR)."""

    stance: tuple[bool, bool, bool, bool]

    def __post_init__(self) -> None:
        flags = tuple(bool(s) for s in self.stance)
        if len(flags) != N_LEGS:
            raise ValueError(f"contact mode needs {N_LEGS} flags, got {len(flags)}")
        object.__setattr__(self, "stance", flags)

    @classmethod
    def from_bits(cls, bits: str) -> "ContactMode":
        """Parse a string such as ``"1001"`` (leg 0 first)."""
        if len(bits) != N_LEGS or any(c not in "01" for c in bits):
            raise ValueError(f"invalid mode bits {bits!r}")
        return cls(tuple(c == "1" for c in bits))

    @classmethod
    def all_stance(cls) -> "ContactMode":
        return cls((True,) * N_LEGS)

    @classmethod
    def all_swing(cls) -> "ContactMode":
        return cls((False,) * N_LEGS)

    @property
    def bits(self) -> str:
        return "".join("1" if s else "0" for s in self.stance)

    @property
    def n_stance(self) -> int:
        return sum(self.stance)

    def __iter__(self):
        return iter(self.stance)

    def __getitem__(self, j: int) -> bool:
        return self.stance[j]

    def __str__(self) -> str:
        return self.bits


ALL_MODES = tuple(ContactMode(tuple(bool(b >> j & 1) for j in range(N_LEGS))) for b in range(16))


@dataclass(frozen=True)
class RobotParams:
    """Rigid-body and leg-geometry parameters of one morphology.

    ``nominal_height`` is the standing CoM height used when synthesizing
    references and is not part of the dynamics.
    """

    mass: float
    body_inertia: np.ndarray
    hip_offsets: np.ndarray
    link_lengths: np.ndarray
    friction_mu: float
    default_swing_q: np.ndarray = field(default_factory=lambda: np.array([0.0, -0.8, 1.8]))
    nominal_height: float = 0.28
    name: str = "robot"
    inertia_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        inertia = np.array(self.body_inertia, dtype=float).reshape(3, 3)
        hips = np.array(self.hip_offsets, dtype=float).reshape(N_LEGS, 3)
        links = np.array(self.link_lengths, dtype=float).reshape(3)
        q_def = np.array(self.default_swing_q, dtype=float).reshape(3)
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not np.allclose(inertia, inertia.T):
            raise ValueError("body_inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise ValueError("body_inertia must be positive definite")
        if np.any(links <= 0):
            raise ValueError("link lengths must be positive")
        if not 0 < self.friction_mu <= 2:
            raise ValueError("friction_mu must lie in (0, 2]")
        for arr in (inertia, hips, links, q_def):
            arr.setflags(write=False)
        inv = np.linalg.inv(inertia)
        inv.setflags(write=False)
        object.__setattr__(self, "body_inertia", inertia)
        object.__setattr__(self, "hip_offsets", hips)
        object.__setattr__(self, "link_lengths", links)
        object.__setattr__(self, "default_swing_q", q_def)
        object.__setattr__(self, "inertia_inv", inv)

    def nominal_foot_offset(self, j: int) -> np.ndarray:
        """Body-frame xy of the foot under hip ``j`` with zero ab/ad."""
        return self.hip_offsets[j] + np.array([0.0, LEG_SIDE[j] * self.link_lengths[0], 0.0])

    def replace(self, **changes) -> "RobotParams":
        kw = dict(
            mass=self.mass,
            body_inertia=self.body_inertia,
            hip_offsets=self.hip_offsets,
            link_lengths=self.link_lengths,
            friction_mu=self.friction_mu,
            default_swing_q=self.default_swing_q,
            nominal_height=self.nominal_height,
            name=self.name,
        )
        kw.update(changes)
        return RobotParams(**kw)


def box_inertia(mass: float, length: float, width: float, height: float) -> np.ndarray:
    """Diagonal inertia of a solid box about its center."""
    return np.diag(
        [
            mass / 12.0 * (width**2 + height**2),
            mass / 12.0 * (length**2 + height**2),
            mass / 12.0 * (length**2 + width**2),
        ]
    )


# ---------------------------------------------------------------------------
# Rotations


def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rot_parts(euler):
    euler = np.asarray(euler, dtype=float)
    r, p, y = euler[..., 0], euler[..., 1], euler[..., 2]
    return np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)


def rotation_matrix(euler: np.ndarray) -> np.ndarray:
    """Body-to-world rotation ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    cr, sr, cp, sp, cy, sy = _rot_parts(euler)
    R = np.empty(np.shape(cr) + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def rotation_matrix_derivatives(euler: np.ndarray) -> np.ndarray:
    """Partials of :func:`rotation_matrix`; shape ``(..., 3, 3, 3)``, index 0 = angle."""
    cr, sr, cp, sp, cy, sy = _rot_parts(euler)
    d = np.zeros(np.shape(cr) + (3, 3, 3))
    # d/droll
    d[..., 0, 0, 1] = cy * sp * cr + sy * sr
    d[..., 0, 0, 2] = -cy * sp * sr + sy * cr
    d[..., 0, 1, 1] = sy * sp * cr - cy * sr
    d[..., 0, 1, 2] = -sy * sp * sr - cy * cr
    d[..., 0, 2, 1] = cp * cr
    d[..., 0, 2, 2] = -cp * sr
    # d/dpitch
    d[..., 1, 0, 0] = -cy * sp
    d[..., 1, 0, 1] = cy * cp * sr
    d[..., 1, 0, 2] = cy * cp * cr
    d[..., 1, 1, 0] = -sy * sp
    d[..., 1, 1, 1] = sy * cp * sr
    d[..., 1, 1, 2] = sy * cp * cr
    d[..., 1, 2, 0] = -cp
    d[..., 1, 2, 1] = -sp * sr
    d[..., 1, 2, 2] = -sp * cr
    # d/dyaw
    d[..., 2, 0, 0] = -sy * cp
    d[..., 2, 0, 1] = -sy * sp * sr - cy * cr
    d[..., 2, 0, 2] = -sy * sp * cr + cy * sr
    d[..., 2, 1, 0] = cy * cp
    d[..., 2, 1, 1] = cy * sp * sr - sy * cr
    d[..., 2, 1, 2] = cy * sp * cr + sy * sr
    return d


def _check_pitch(cp) -> None:
    if np.any(np.abs(cp) < np.sin(PITCH_MARGIN)):
        raise SingularityError("pitch within 1e-3 rad of +-pi/2; Euler rates undefined")


def euler_rate_matrix(euler: np.ndarray) -> np.ndarray:
    """Matrix ``T`` with ``d(euler)/dt = T @ omega_body``.

    Raises:
        SingularityError: if pitch is within 1e-3 rad of +-pi/2.
    """
    cr, sr, cp, sp, _, _ = _rot_parts(euler)
    _check_pitch(cp)
    tp = sp / cp
    T = np.zeros(np.shape(cr) + (3, 3))
    T[..., 0, 0] = 1.0
    T[..., 0, 1] = sr * tp
    T[..., 0, 2] = cr * tp
    T[..., 1, 1] = cr
    T[..., 1, 2] = -sr
    T[..., 2, 1] = sr / cp
    T[..., 2, 2] = cr / cp
    return T


def euler_rate_matrix_derivatives(euler: np.ndarray) -> np.ndarray:
    """Partials of :func:`euler_rate_matrix` w.r.t. (roll, pitch, yaw)."""
    cr, sr, cp, sp, _, _ = _rot_parts(euler)
    _check_pitch(cp)
    tp = sp / cp
    sec2 = 1.0 / cp**2
    d = np.zeros(np.shape(cr) + (3, 3, 3))
    d[..., 0, 0, 1] = cr * tp
    d[..., 0, 0, 2] = -sr * tp
    d[..., 0, 1, 1] = -sr
    d[..., 0, 1, 2] = -cr
    d[..., 0, 2, 1] = cr / cp
    d[..., 0, 2, 2] = -sr / cp
    d[..., 1, 0, 1] = sr * sec2
    d[..., 1, 0, 2] = cr * sec2
    d[..., 1, 2, 1] = sr * sp * sec2
    d[..., 1, 2, 2] = cr * sp * sec2
    return d


# ---------------------------------------------------------------------------
# Leg kinematics


def leg_forward_kinematics(q: np.ndarray, leg_index: int, params: RobotParams) -> np.ndarray:
    """Foot position of leg ``leg_index`` in the body frame (relative to the CoM)."""
    q = np.asarray(q, dtype=float)
    l1, l2, l3 = params.link_lengths
    c0, s0 = np.cos(q[..., 0]), np.sin(q[..., 0])
    q12 = q[..., 1] + q[..., 2]
    xs = -l2 * np.sin(q[..., 1]) - l3 * np.sin(q12)
    zs = -l2 * np.cos(q[..., 1]) - l3 * np.cos(q12)
    ys = LEG_SIDE[leg_index] * l1
    out = np.empty(q.shape)
    out[..., 0] = xs
    out[..., 1] = c0 * ys - s0 * zs
    out[..., 2] = s0 * ys + c0 * zs
    return out + params.hip_offsets[leg_index]


def leg_jacobian(q: np.ndarray, leg_index: int, params: RobotParams) -> np.ndarray:
    """Body-frame foot velocity per joint rate, ``d FK / d q`` (3x3)."""
    q = np.asarray(q, dtype=float)
    l1, l2, l3 = params.link_lengths
    c0, s0 = np.cos(q[..., 0]), np.sin(q[..., 0])
    c1, s1 = np.cos(q[..., 1]), np.sin(q[..., 1])
    q12 = q[..., 1] + q[..., 2]
    c12, s12 = np.cos(q12), np.sin(q12)
    zs = -l2 * c1 - l3 * c12
    ys = LEG_SIDE[leg_index] * l1
    J = np.empty(q.shape[:-1] + (3, 3))
    J[..., 0, 0] = 0.0
    J[..., 1, 0] = -s0 * ys - c0 * zs
    J[..., 2, 0] = c0 * ys - s0 * zs
    dx1, dz1 = -l2 * c1 - l3 * c12, l2 * s1 + l3 * s12
    dx2, dz2 = -l3 * c12, l3 * s12
    J[..., 0, 1] = dx1
    J[..., 1, 1] = -s0 * dz1
    J[..., 2, 1] = c0 * dz1
    J[..., 0, 2] = dx2
    J[..., 1, 2] = -s0 * dz2
    J[..., 2, 2] = c0 * dz2
    return J


def leg_inverse_kinematics(
    foot_body: np.ndarray,
    leg_index: int,
    params: RobotParams,
    q0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> np.ndarray:
    """Numerical IK (damped Newton) for a body-frame foot target.

    Unreachable targets return the least-squares closest configuration.
    """
    target = np.asarray(foot_body, dtype=float)
    q = np.array(params.default_swing_q if q0 is None else q0, dtype=float)
    damping = 1e-8
    for _ in range(max_iter):
        err = target - leg_forward_kinematics(q, leg_index, params)
        if err @ err < tol**2:
            break
        J = leg_jacobian(q, leg_index, params)
        q = q + np.linalg.solve(J.T @ J + damping * np.eye(3), J.T @ err)
    return q


# ---------------------------------------------------------------------------
# Typed state / control


@dataclass(frozen=True)
class Stance:
    foothold: np.ndarray


@dataclass(frozen=True)
class Swing:
    joints: np.ndarray


@dataclass(frozen=True)
class GroundForce:
    grf: np.ndarray


@dataclass(frozen=True)
class JointVelocity:
    joint_vel: np.ndarray


LegState = Union[Stance, Swing]
LegControl = Union[GroundForce, JointVelocity]


@dataclass(frozen=True)
class HkdState:
    euler: np.ndarray
    com_pos: np.ndarray
    ang_vel: np.ndarray
    lin_vel: np.ndarray
    legs: tuple[LegState, LegState, LegState, LegState]

    @property
    def mode(self) -> ContactMode:
        return ContactMode(tuple(isinstance(leg, Stance) for leg in self.legs))

    def to_vector(self) -> np.ndarray:
        x = np.empty(NX)
        x[THETA], x[POS], x[OMEGA], x[VEL] = self.euler, self.com_pos, self.ang_vel, self.lin_vel
        for j, leg in enumerate(self.legs):
            x[leg_slot(j)] = leg.foothold if isinstance(leg, Stance) else leg.joints
        return x

    @classmethod
    def from_vector(cls, x: np.ndarray, mode: ContactMode) -> "HkdState":
        x = np.asarray(x, dtype=float)
        legs = tuple(
            Stance(x[leg_slot(j)].copy()) if mode[j] else Swing(x[leg_slot(j)].copy())
            for j in range(N_LEGS)
        )
        return cls(x[THETA].copy(), x[POS].copy(), x[OMEGA].copy(), x[VEL].copy(), legs)


@dataclass(frozen=True)
class HkdControl:
    legs: tuple[LegControl, LegControl, LegControl, LegControl]

    @property
    def mode(self) -> ContactMode:
        return ContactMode(tuple(isinstance(leg, GroundForce) for leg in self.legs))

    def to_vector(self) -> np.ndarray:
        u = np.empty(NU)
        for j, leg in enumerate(self.legs):
            u[ctrl_slot(j)] = leg.grf if isinstance(leg, GroundForce) else leg.joint_vel
        return u

    @classmethod
    def from_vector(cls, u: np.ndarray, mode: ContactMode) -> "HkdControl":
        u = np.asarray(u, dtype=float)
        return cls(
            tuple(
                GroundForce(u[ctrl_slot(j)].copy()) if mode[j] else JointVelocity(u[ctrl_slot(j)].copy())
                for j in range(N_LEGS)
            )
        )


def _check_tags(state: HkdState, control: HkdControl | None, mode: ContactMode) -> None:
    if state.mode != mode:
        raise ModeMismatchError(f"state legs tagged {state.mode} but mode is {mode}")
    if control is not None and control.mode != mode:
        raise ModeMismatchError(f"control legs tagged {control.mode} but mode is {mode}")


# ---------------------------------------------------------------------------
# Dynamics (vector layer)


def dynamics(x: np.ndarray, u: np.ndarray, stance: Sequence[bool], params: RobotParams) -> np.ndarray:
    """Continuous HKD dynamics ``xdot = f(x, u)`` for one contact mode."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    th, p, w, v = x[..., THETA], x[..., POS], x[..., OMEGA], x[..., VEL]
    R = rotation_matrix(th)
    T = euler_rate_matrix(th)
    xdot = np.zeros(np.broadcast_shapes(x.shape, u.shape[:-1] + (NX,)))
    xdot[..., THETA] = np.einsum("...ij,...j->...i", T, w)
    xdot[..., POS] = v
    moment = np.zeros(p.shape)
    force = np.zeros(p.shape)
    for j in range(N_LEGS):
        uj = u[..., ctrl_slot(j)]
        if stance[j]:
            moment = moment + np.cross(x[..., leg_slot(j)] - p, uj)
            force = force + uj
        else:
            xdot[..., leg_slot(j)] = uj
    I = params.body_inertia
    Iw = w @ I.T
    torque = -np.cross(w, Iw) + np.einsum("...ji,...j->...i", R, moment)
    xdot[..., OMEGA] = torque @ params.inertia_inv.T
    xdot[..., VEL] = GRAVITY_VEC + force / params.mass
    return xdot


def dynamics_point(x: np.ndarray, u: np.ndarray, stance: Sequence[bool], params: RobotParams) -> np.ndarray:
    """Unbatched :func:`dynamics` in scalar arithmetic (rollouts call this per node)."""
    xl = x.tolist()
    ul = u.tolist()
    roll, pitch, yaw = xl[0], xl[1], xl[2]
    cr, sr, cp, sp = math.cos(roll), math.sin(roll), math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    if abs(cp) < math.sin(PITCH_MARGIN):
        raise SingularityError("pitch within 1e-3 rad of +-pi/2; Euler rates undefined")
    px, py, pz = xl[3], xl[4], xl[5]
    wx, wy, wz = xl[6], xl[7], xl[8]
    out = [0.0] * NX
    tp = sp / cp
    out[0] = wx + sr * tp * wy + cr * tp * wz
    out[1] = cr * wy - sr * wz
    out[2] = (sr * wy + cr * wz) / cp
    out[3], out[4], out[5] = xl[9], xl[10], xl[11]
    mx = my = mz = fx = fy = fz = 0.0
    for j in range(N_LEGS):
        a = 12 + 3 * j
        b = 3 * j
        if stance[j]:
            rx, ry, rz = xl[a] - px, xl[a + 1] - py, xl[a + 2] - pz
            lx, ly, lz = ul[b], ul[b + 1], ul[b + 2]
            mx += ry * lz - rz * ly
            my += rz * lx - rx * lz
            mz += rx * ly - ry * lx
            fx += lx
            fy += ly
            fz += lz
        else:
            out[a], out[a + 1], out[a + 2] = ul[b], ul[b + 1], ul[b + 2]
    # R^T @ moment
    bx = cy * cp * mx + sy * cp * my - sp * mz
    by = (cy * sp * sr - sy * cr) * mx + (sy * sp * sr + cy * cr) * my + cp * sr * mz
    bz = (cy * sp * cr + sy * sr) * mx + (sy * sp * cr - cy * sr) * my + cp * cr * mz
    I = params.body_inertia
    Iw = I @ x[6:9]
    bx -= wy * Iw[2] - wz * Iw[1]
    by -= wz * Iw[0] - wx * Iw[2]
    bz -= wx * Iw[1] - wy * Iw[0]
    out[6:9] = (params.inertia_inv @ np.array([bx, by, bz])).tolist()
    m = params.mass
    out[9], out[10], out[11] = fx / m, fy / m, fz / m - GRAVITY
    return np.array(out)


def linearize(
    x: np.ndarray, u: np.ndarray, stance: Sequence[bool], params: RobotParams
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(df/dx, df/du)`` of :func:`dynamics`; batched over leading dims."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = x.shape[:-1]
    th, p, w = x[..., THETA], x[..., POS], x[..., OMEGA]
    R = rotation_matrix(th)
    dR = rotation_matrix_derivatives(th)
    T = euler_rate_matrix(th)
    dT = euler_rate_matrix_derivatives(th)
    I, Iinv = params.body_inertia, params.inertia_inv

    A = np.zeros(batch + (NX, NX))
    B = np.zeros(batch + (NX, NU))
    A[..., THETA, THETA] = np.einsum("...kij,...j->...ik", dT, w)
    A[..., THETA, OMEGA] = T
    A[..., 3:6, 9:12] = np.eye(3)

    moment = np.zeros(p.shape)
    lam_sum_skew = np.zeros(batch + (3, 3))
    RtIinv = None
    for j in range(N_LEGS):
        if not stance[j]:
            B[..., leg_slot(j), ctrl_slot(j)] = np.eye(3)
            continue
        lam = u[..., ctrl_slot(j)]
        r = x[..., leg_slot(j)] - p
        moment = moment + np.cross(r, lam)
        lam_skew = skew(lam)
        lam_sum_skew = lam_sum_skew + lam_skew
        if RtIinv is None:
            # Iinv @ R^T, shared by every moment term
            RtIinv = np.einsum("ab,...cb->...ac", Iinv, R)
        A[..., OMEGA, leg_slot(j)] = -RtIinv @ lam_skew
        B[..., OMEGA, ctrl_slot(j)] = RtIinv @ skew(r)
        B[..., VEL, ctrl_slot(j)] = np.eye(3) / params.mass

    # d omega_dot / d theta: Iinv (dR_k^T M)
    dRtM = np.einsum("...kji,...j->...ik", dR, moment)
    A[..., OMEGA, THETA] = np.einsum("ab,...bk->...ak", Iinv, dRtM)
    if RtIinv is not None:
        A[..., OMEGA, POS] = RtIinv @ lam_sum_skew
    Iw = w @ I.T
    A[..., OMEGA, OMEGA] = np.einsum("ab,...bc->...ac", Iinv, -skew(w) @ I + skew(Iw))
    return A, B


def foot_world(x: np.ndarray, leg_index: int, stance: bool, params: RobotParams) -> np.ndarray:
    """Foot position in the world: stored foothold in stance, ``p + R FK(q)`` in swing."""
    x = np.asarray(x, dtype=float)
    slot = x[..., leg_slot(leg_index)]
    if stance:
        return slot.copy()
    if x.ndim == 1:
        return _swing_foot_point(x.tolist(), leg_index, params)
    R = rotation_matrix(x[..., THETA])
    fk = leg_forward_kinematics(slot, leg_index, params)
    return x[..., POS] + np.einsum("...ij,...j->...i", R, fk)


def _swing_foot_point(xl: list, leg_index: int, params: RobotParams) -> np.ndarray:
    """Scalar ``p + R FK(q)`` for one state (reset maps and touchdown residuals)."""
    l1, l2, l3 = params.link_lengths
    a = 12 + 3 * leg_index
    q0, q1, q2 = xl[a], xl[a + 1], xl[a + 2]
    c0, s0 = math.cos(q0), math.sin(q0)
    xs = -l2 * math.sin(q1) - l3 * math.sin(q1 + q2)
    zs = -l2 * math.cos(q1) - l3 * math.cos(q1 + q2)
    ys = float(LEG_SIDE[leg_index]) * l1
    h = params.hip_offsets[leg_index].tolist()
    bx, by, bz = xs + h[0], c0 * ys - s0 * zs + h[1], s0 * ys + c0 * zs + h[2]
    cr, sr = math.cos(xl[0]), math.sin(xl[0])
    cp, sp = math.cos(xl[1]), math.sin(xl[1])
    cy, sy = math.cos(xl[2]), math.sin(xl[2])
    return np.array(
        [
            xl[3] + cy * cp * bx + (cy * sp * sr - sy * cr) * by + (cy * sp * cr + sy * sr) * bz,
            xl[4] + sy * cp * bx + (sy * sp * sr + cy * cr) * by + (sy * sp * cr - cy * sr) * bz,
            xl[5] - sp * bx + cp * sr * by + cp * cr * bz,
        ]
    )


def swing_foot_jacobian(x: np.ndarray, leg_index: int, params: RobotParams) -> np.ndarray:
    """``d(p + R FK(q_j))/dx`` for a swing leg; shape ``(..., 3, 24)``."""
    x = np.asarray(x, dtype=float)
    q = x[..., leg_slot(leg_index)]
    R = rotation_matrix(x[..., THETA])
    dR = rotation_matrix_derivatives(x[..., THETA])
    fk = leg_forward_kinematics(q, leg_index, params)
    J = leg_jacobian(q, leg_index, params)
    out = np.zeros(x.shape[:-1] + (3, NX))
    out[..., :, THETA] = np.einsum("...kij,...j->...ik", dR, fk)
    out[..., :, POS] = np.eye(3)
    out[..., :, leg_slot(leg_index)] = R @ J
    return out


# ---------------------------------------------------------------------------
# Reset map


def reset_vector(x: np.ndarray, from_mode: ContactMode, to_mode: ContactMode, params: RobotParams) -> np.ndarray:
    """Apply the touchdown / liftoff reset to a state vector."""
    xp = np.array(x, dtype=float)
    for j in range(N_LEGS):
        if from_mode[j] == to_mode[j]:
            continue
        if to_mode[j]:
            xp[leg_slot(j)] = foot_world(x, j, False, params)
        else:
            xp[leg_slot(j)] = params.default_swing_q
    return xp


def reset_jacobian(x: np.ndarray, from_mode: ContactMode, to_mode: ContactMode, params: RobotParams) -> np.ndarray:
    P = np.eye(NX)
    for j in range(N_LEGS):
        if from_mode[j] == to_mode[j]:
            continue
        s = leg_slot(j)
        P[s, :] = swing_foot_jacobian(x, j, params) if to_mode[j] else 0.0
    return P


# ---------------------------------------------------------------------------
# Typed layer


def continuous_dynamics(
    state: HkdState, control: HkdControl, mode: ContactMode, params: RobotParams
) -> HkdState:
    """HKD state derivative, returned with the same leg tags as ``state``."""
    _check_tags(state, control, mode)
    xdot = dynamics(state.to_vector(), control.to_vector(), mode.stance, params)
    return HkdState.from_vector(xdot, mode)


def dynamics_jacobians(
    state: HkdState, control: HkdControl, mode: ContactMode, params: RobotParams
) -> tuple[np.ndarray, np.ndarray]:
    _check_tags(state, control, mode)
    return linearize(state.to_vector(), control.to_vector(), mode.stance, params)


def reset_map(state: HkdState, from_mode: ContactMode, to_mode: ContactMode, params: RobotParams) -> HkdState:
    """Touchdown captures the world foot position, liftoff resets joints to default."""
    _check_tags(state, None, from_mode)
    return HkdState.from_vector(reset_vector(state.to_vector(), from_mode, to_mode, params), to_mode)


def world_foot_position(state: HkdState, leg_index: int, params: RobotParams) -> np.ndarray:
    leg = state.legs[leg_index]
    return foot_world(state.to_vector(), leg_index, isinstance(leg, Stance), params)


def hover_control(params: RobotParams, mode: ContactMode) -> np.ndarray:
    """Control vector sharing the weight evenly among stance legs."""
    u = np.zeros(NU)
    n = mode.n_stance
    for j in range(N_LEGS):
        if mode[j] and n:
            u[ctrl_slot(j)][2] = params.mass * GRAVITY / n
    return u
