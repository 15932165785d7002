"""Swing-foot Bezier trajectories and joint-torque maps for swing and stance legs.

GRF sign convention: ``lambda`` is the world-frame force the ground exerts on the
body through the foot.  A stance leg therefore pushes on the ground with
``-lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hkd_model import RobotParams, leg_forward_kinematics, leg_jacobian, rotation_matrix


@dataclass(frozen=True)
class LegControlConfig:
    swing_height: float = 0.06  # m
    kp: np.ndarray = field(default_factory=lambda: np.full(3, 350.0))  # N/m
    kd: np.ndarray = field(default_factory=lambda: np.full(3, 10.0))  # N*s/m

    def __post_init__(self) -> None:
        object.__setattr__(self, "kp", np.broadcast_to(np.asarray(self.kp, dtype=float), (3,)).copy())
        object.__setattr__(self, "kd", np.broadcast_to(np.asarray(self.kd, dtype=float), (3,)).copy())
        if self.swing_height <= 0:
            raise ValueError("swing_height must be positive")


@dataclass(frozen=True)
class SwingTrajectory:
    p_liftoff: np.ndarray
    p_touchdown: np.ndarray
    swing_height: float
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("swing duration must be positive")
        if self.swing_height <= 0:
            raise ValueError("swing height must be positive")

    def control_points(self) -> np.ndarray:
        p0 = np.asarray(self.p_liftoff, dtype=float)
        p3 = np.asarray(self.p_touchdown, dtype=float)
        # interior z weighted 3/8 + 3/8 at s = 0.5, hence the 4/3 factor
        z_ctrl = 0.5 * (p0[2] + p3[2]) + 4.0 / 3.0 * self.swing_height
        p1 = np.array([p0[0], p0[1], z_ctrl])
        p2 = np.array([p3[0], p3[1], z_ctrl])
        return np.stack([p0, p1, p2, p3])


def bezier_eval(traj: SwingTrajectory, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Foot position and velocity (world) at normalized swing time ``s``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"swing fraction {s} outside [0, 1]")
    p0, p1, p2, p3 = traj.control_points()
    t = 1.0 - s
    pos = t**3 * p0 + 3 * t**2 * s * p1 + 3 * t * s**2 * p2 + s**3 * p3
    dpos = 3 * t**2 * (p1 - p0) + 6 * t * s * (p2 - p1) + 3 * s**2 * (p3 - p2)
    return pos, dpos / traj.duration


def swing_torque(
    q: np.ndarray,
    qdot: np.ndarray,
    p_des: np.ndarray,
    v_des: np.ndarray,
    kp: np.ndarray,
    kd: np.ndarray,
    leg: int,
    params: RobotParams,
) -> np.ndarray:
    """Cartesian impedance torque ``J^T [Kp (p_des - FK) + Kd (v_des - J qdot)]``.

    ``p_des`` and ``v_des`` are in the body frame, same origin as the FK.
    """
    J = leg_jacobian(q, leg, params)
    force = np.asarray(kp) * (p_des - leg_forward_kinematics(q, leg, params)) + np.asarray(kd) * (
        v_des - J @ qdot
    )
    return J.T @ force


def stance_torque(q: np.ndarray, grf: np.ndarray, euler: np.ndarray, leg: int, params: RobotParams) -> np.ndarray:
    """Joint torques producing the world-frame GRF ``grf`` on the body."""
    R = rotation_matrix(euler)
    return leg_jacobian(q, leg, params).T @ (R.T @ -np.asarray(grf, dtype=float))
