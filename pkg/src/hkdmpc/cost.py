"""Tracking, foot-regularization, and smoothness costs with exact derivatives.

Quadratic norms use ``||e||_Q^2 = e^T Q e`` (no 1/2 factor).  All functions are
batched over leading node dimensions for a fixed contact mode.

Per-node reference data (:class:`NodeReference`):

    body   (.., 12)   euler, position, body rates, velocity
    joints (.., 12)   joint angles, leg-major
    p_rel  (.., 4, 3) world-frame foot offset from the CoM
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hkd_model import BODY, N_LEGS, NU, NX, POS, ctrl_slot, leg_slot

DEFAULT_Q_BODY = (10.0, 10.0, 30.0, 50.0, 50.0, 80.0, 1.0, 1.0, 1.0, 5.0, 5.0, 10.0)


def _vec12(value) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (12,)).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CostWeights:
    Q_b: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_Q_BODY))
    Q_J: np.ndarray = field(default_factory=lambda: np.full(12, 0.1))
    R_lambda: np.ndarray = field(default_factory=lambda: np.full(12, 1e-3))
    w_foot: float = 5.0
    w_smooth: float = 1e-2
    terminal: float = 10.0

    def __post_init__(self) -> None:
        for name in ("Q_b", "Q_J", "R_lambda"):
            arr = _vec12(getattr(self, name))
            if np.any(arr < 0):
                raise ValueError(f"{name} weights must be nonnegative")
            object.__setattr__(self, name, arr)
        if min(self.w_foot, self.w_smooth, self.terminal) < 0:
            raise ValueError("scalar cost weights must be nonnegative")
        if np.any(self.Q_b[[5, 9, 10, 11]] <= 0):
            raise ValueError("height and velocity tracking weights must be positive")


@dataclass(frozen=True)
class NodeReference:
    body: np.ndarray
    joints: np.ndarray
    p_rel: np.ndarray
    u_prev: np.ndarray | None = None


def nominal_foot_offsets(params, yaw: np.ndarray, height: np.ndarray) -> np.ndarray:
    """``p_rel`` per leg: nominal foot under each hip, yawed, on the ground.

    Returns shape ``(.., 4, 3)`` for ``yaw``/``height`` of shape ``(..)``.
    """
    yaw = np.asarray(yaw, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    out = np.empty(yaw.shape + (N_LEGS, 3))
    for j in range(N_LEGS):
        off = params.nominal_foot_offset(j)
        out[..., j, 0] = c * off[0] - s * off[1]
        out[..., j, 1] = s * off[0] + c * off[1]
        out[..., j, 2] = -np.asarray(height, dtype=float)
    return out


def _masks(stance: Sequence[bool]) -> tuple[np.ndarray, np.ndarray]:
    """(swing joint mask over 12, stance GRF mask over 12)."""
    st = np.repeat(np.asarray(stance, dtype=bool), 3)
    return (~st).astype(float), st.astype(float)


def running_cost(x, u, stance, ref: NodeReference, weights: CostWeights) -> np.ndarray:
    """Integrand of the running cost (not multiplied by the time step)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    swing_m, stance_m = _masks(stance)
    cost = _state_terms(x, stance, ref, weights, swing_m)
    cost = cost + np.sum(stance_m * weights.R_lambda * u**2, axis=-1)
    if ref.u_prev is not None:
        cost = cost + weights.w_smooth * np.sum((u - ref.u_prev) ** 2, axis=-1)
    return cost


def terminal_cost(x, stance, ref: NodeReference, weights: CostWeights) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    swing_m, _ = _masks(stance)
    return weights.terminal * _state_terms(x, stance, ref, weights, swing_m)


def _state_terms(x, stance, ref, weights, swing_m):
    db = x[..., BODY] - ref.body
    cost = np.sum(weights.Q_b * db**2, axis=-1)
    dq = x[..., 12:] - ref.joints
    cost = cost + np.sum(swing_m * weights.Q_J * dq**2, axis=-1)
    for j in range(N_LEGS):
        if stance[j]:
            e = x[..., leg_slot(j)] - x[..., POS] - ref.p_rel[..., j, :]
            cost = cost + weights.w_foot * np.sum(e**2, axis=-1)
    return cost


def _state_derivatives(x, stance, ref, weights, swing_m):
    batch = x.shape[:-1]
    lx = np.zeros(batch + (NX,))
    lxx_diag = np.zeros(NX)
    lx[..., BODY] = 2.0 * weights.Q_b * (x[..., BODY] - ref.body)
    lxx_diag[BODY] = 2.0 * weights.Q_b
    wq = swing_m * weights.Q_J
    lx[..., 12:] = 2.0 * wq * (x[..., 12:] - ref.joints)
    lxx_diag[12:] = 2.0 * wq
    lxx = np.zeros(batch + (NX, NX))
    idx = np.arange(NX)
    lxx[..., idx, idx] = lxx_diag
    w = weights.w_foot
    if w:
        eye = 2.0 * w * np.eye(3)
        for j in range(N_LEGS):
            if not stance[j]:
                continue
            s = leg_slot(j)
            e = x[..., s] - x[..., POS] - ref.p_rel[..., j, :]
            lx[..., s] += 2.0 * w * e
            lx[..., POS] -= 2.0 * w * e
            lxx[..., s, s] += eye
            lxx[..., POS, POS] += eye
            lxx[..., s, POS] -= eye
            lxx[..., POS, s] -= eye
    return lx, lxx


def cost_derivatives(x, u, stance, ref: NodeReference, weights: CostWeights):
    """Exact ``(l_x, l_u, l_xx, l_uu, l_ux)`` of :func:`running_cost`."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    swing_m, stance_m = _masks(stance)
    lx, lxx = _state_derivatives(np.broadcast_to(x, batch + (NX,)), stance, ref, weights, swing_m)
    r = stance_m * weights.R_lambda
    lu = 2.0 * r * u
    luu_diag = 2.0 * r
    if ref.u_prev is not None:
        lu = lu + 2.0 * weights.w_smooth * (u - ref.u_prev)
        luu_diag = luu_diag + 2.0 * weights.w_smooth
    lu = np.broadcast_to(lu, batch + (NU,))
    luu = np.zeros(batch + (NU, NU))
    idx = np.arange(NU)
    luu[..., idx, idx] = luu_diag
    lux = np.zeros(batch + (NU, NX))
    return lx, lu, lxx, luu, lux


def terminal_cost_derivatives(x, stance, ref: NodeReference, weights: CostWeights):
    x = np.asarray(x, dtype=float)
    swing_m, _ = _masks(stance)
    lx, lxx = _state_derivatives(x, stance, ref, weights, swing_m)
    return weights.terminal * lx, weights.terminal * lxx


def grf_slots(stance: Sequence[bool]) -> list[slice]:
    return [ctrl_slot(j) for j in range(N_LEGS) if stance[j]]
