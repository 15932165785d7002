"""Central finite-difference checks of the analytic model and cost derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cost import CostWeights, NodeReference, cost_derivatives, running_cost
from .hkd_model import (
    ALL_MODES,
    GRAVITY,
    N_LEGS,
    NU,
    NX,
    ContactMode,
    RobotParams,
    ctrl_slot,
    dynamics,
    leg_jacobian,
    leg_forward_kinematics,
    leg_slot,
    linearize,
)

FD_STEP = 1e-6
REL_TOL = 1e-5


def central_difference(
    f: Callable[[np.ndarray], np.ndarray], z: np.ndarray, h: float = FD_STEP, batched: bool = True
) -> np.ndarray:
    """Jacobian of ``f`` at the vector ``z`` by central differences; columns follow ``z``.

    With ``batched`` the function is called once on all ``2 n`` perturbed points
    stacked along a leading axis.
    """
    z = np.asarray(z, dtype=float)
    E = h * np.eye(z.size)
    pts = np.concatenate([z + E, z - E])
    vals = np.asarray(f(pts)) if batched else np.stack([np.asarray(f(p)) for p in pts])
    diff = (vals[: z.size] - vals[z.size :]) / (2.0 * h)
    return np.moveaxis(diff, 0, -1)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|A - N|_F / max(|N|_F, 1)``; the floor keeps all-zero blocks meaningful."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(n), 1.0))


def random_state(rng: np.random.Generator, mode: ContactMode, params: RobotParams) -> np.ndarray:
    x = np.zeros(NX)
    x[0:2] = rng.uniform(-0.4, 0.4, 2)
    x[2] = rng.uniform(-np.pi, np.pi)
    x[3:6] = rng.normal(0.0, 0.5, 3) + [0.0, 0.0, params.nominal_height]
    x[6:12] = rng.normal(0.0, 1.0, 6)
    for j in range(N_LEGS):
        if mode[j]:
            x[leg_slot(j)] = x[3:6] + params.nominal_foot_offset(j) + rng.normal(0.0, 0.05, 3)
            x[leg_slot(j)][2] = rng.uniform(-0.01, 0.01)
        else:
            x[leg_slot(j)] = params.default_swing_q + rng.normal(0.0, 0.4, 3)
    return x


def random_control(rng: np.random.Generator, mode: ContactMode, params: RobotParams) -> np.ndarray:
    u = rng.normal(0.0, 3.0, NU)
    for j in range(N_LEGS):
        if mode[j]:
            u[ctrl_slot(j)][2] += params.mass * GRAVITY / 2.0
    return u


def random_reference(rng: np.random.Generator, with_prev: bool = True) -> NodeReference:
    return NodeReference(
        body=rng.normal(0.0, 0.5, 12),
        joints=rng.normal(0.0, 0.5, 12),
        p_rel=rng.normal(0.0, 0.2, (N_LEGS, 3)),
        u_prev=rng.normal(0.0, 5.0, NU) if with_prev else None,
    )


@dataclass(frozen=True)
class CheckResult:
    """Worst relative error of one derivative block across all samples."""

    name: str
    worst: float
    worst_mode: str
    samples: int

    @property
    def passed(self) -> bool:
        return self.worst < REL_TOL


def _worst(results: dict, name: str, err: float, mode: ContactMode) -> None:
    prev = results.get(name)
    if prev is None or err > prev[0]:
        results[name] = (err, mode.bits)


def check_derivatives(
    params: RobotParams,
    samples: int,
    seed: int = 0,
    modes=ALL_MODES,
    weights: CostWeights = CostWeights(),
    jacobian_fn=linearize,
) -> list[CheckResult]:
    """FD-check dynamics, running cost, and leg Jacobians over ``samples`` draws per mode.

    ``jacobian_fn`` defaults to the analytic dynamics linearization and is
    injectable so a corrupted implementation can be shown to fail.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    worst: dict = {}
    for mode in modes:
        st = mode.stance
        for _ in range(samples):
            x = random_state(rng, mode, params)
            u = random_control(rng, mode, params)
            A, B = jacobian_fn(x, u, st, params)
            _worst(worst, "dynamics df/dx", relative_error(A, central_difference(lambda z: dynamics(z, u, st, params), x)), mode)
            _worst(worst, "dynamics df/du", relative_error(B, central_difference(lambda z: dynamics(x, z, st, params), u)), mode)

            ref = random_reference(rng)
            lx, lu, lxx, luu, lux = cost_derivatives(x, u, st, ref, weights)
            fx = central_difference(lambda z: running_cost(z, u, st, ref, weights), x)
            fu = central_difference(lambda z: running_cost(x, z, st, ref, weights), u)
            gx = lambda z: cost_derivatives(z, u, st, ref, weights)[0]
            gu_x = lambda z: cost_derivatives(z, u, st, ref, weights)[1]
            gu_u = lambda z: cost_derivatives(x, z, st, ref, weights)[1]
            _worst(worst, "cost l_x", relative_error(lx, fx), mode)
            _worst(worst, "cost l_u", relative_error(lu, fu), mode)
            _worst(worst, "cost l_xx", relative_error(lxx, central_difference(gx, x)), mode)
            _worst(worst, "cost l_uu", relative_error(luu, central_difference(gu_u, u)), mode)
            _worst(worst, "cost l_ux", relative_error(lux, central_difference(gu_x, x)), mode)

            j = int(rng.integers(N_LEGS))
            q = params.default_swing_q + rng.normal(0.0, 0.5, 3)
            J = leg_jacobian(q, j, params)
            _worst(worst, "leg jacobian", relative_error(J, central_difference(lambda z: leg_forward_kinematics(z, j, params), q, batched=False)), mode)
    return [CheckResult(name, err, bits, samples * len(modes)) for name, (err, bits) in worst.items()]
