"""Multi-phase constrained DDP for hybrid systems.

The problem is a sequence of :class:`Phase` objects.  Phase ``i`` owns states
``x_0 .. x_N`` and controls ``u_0 .. u_{N-1}``; the first state of phase ``i+1``
is ``phase_i.reset(x_N)``.  The value function is carried backwards across that
boundary through the reset Jacobian.

Constraint handling:

* terminal equalities ``h(x_N) = 0`` use an augmented Lagrangian
  ``lam * h + rho / 2 * h^2`` whose multipliers are keyed by
  :attr:`Phase.equality_keys` so they can persist between solves;
* path inequalities ``g(x, u) >= 0`` use a relaxed log barrier weighted by the
  phase time step.

Both enter the backward pass in Gauss-Newton form (no constraint curvature).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Sequence

import numpy as np
from scipy.linalg import lapack

DIVERGENCE_BOUND = 1e8  # rollouts leaving this box are rejected as diverged


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.011  # s
    horizon: float = 0.462  # s
    max_iterations: int = 3
    line_search_factor: float = 0.5
    min_step: float = 1.0 / 64.0
    reg_init: float = 1e-6
    reg_growth: float = 10.0
    reg_shrink: float = 2.0
    reg_max: float = 1e10
    al_penalty_init: float = 1e3
    al_penalty_growth: float = 10.0
    al_penalty_max: float = 1e6
    al_progress_ratio: float = 0.25
    reb_delta: float = 0.01
    reb_weight: float = 0.1
    tolerance: float = 1e-7
    constraint_tolerance: float = 1e-4

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.line_search_factor < 1:
            raise ValueError("line_search_factor must lie in (0, 1)")

    @property
    def n_nodes(self) -> int:
        return int(round(self.horizon / self.dt))


class SolverFailure(RuntimeError):
    """Raised when no valid trajectory can be produced; carries the last one."""

    def __init__(self, message: str, solution: "Solution | None" = None):
        super().__init__(message)
        self.solution = solution


class _NotPositiveDefinite(Exception):
    pass


class Phase:
    """One constant-mode phase.  Subclasses implement dynamics and costs.

    Cost methods return quantities already weighted by the time step.
    """

    nx: int
    nu: int
    n_nodes: int
    dt: float
    t0: float = 0.0
    tag: Hashable = None
    n_ineq: int = 0
    equality_keys: tuple = ()

    def step(self, k: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def linearize(self, xs: np.ndarray, us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Discrete Jacobians, shapes ``(N, nx, nx)`` and ``(N, nx, nu)``."""
        raise NotImplementedError

    def stage_cost(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stage_cost_derivatives(self, xs, us):
        raise NotImplementedError

    def terminal_cost(self, x: np.ndarray) -> float:
        return 0.0

    def terminal_cost_derivatives(self, x: np.ndarray):
        return np.zeros(self.nx), np.zeros((self.nx, self.nx))

    def inequality(self, xs, us) -> np.ndarray:
        return np.zeros((len(us), 0))

    def inequality_jacobians(self, xs, us):
        n = len(us)
        return np.zeros((n, 0, self.nx)), np.zeros((n, 0, self.nu))

    def terminal_equality(self, x) -> np.ndarray:
        return np.zeros(0)

    def terminal_equality_jacobian(self, x) -> np.ndarray:
        return np.zeros((0, self.nx))

    def reset(self, x: np.ndarray) -> np.ndarray:
        return x

    def reset_jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.eye(self.nx)

    def default_controls(self) -> np.ndarray:
        return np.zeros((self.n_nodes, self.nu))

    def adapt_control(self, k: int, u: np.ndarray, tag: Hashable) -> np.ndarray:
        """Re-tag a control produced for a phase with ``tag``."""
        return u

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_nodes + 1)


def discretize(f: Callable[[np.ndarray, np.ndarray], np.ndarray], dt: float):
    """Forward-Euler step ``x + dt f(x, u)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def step(x, u):
        return x + dt * f(x, u)

    return step


def discretize_jacobians(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    return np.eye(A.shape[-1]) + dt * A, dt * B


def relaxed_log_barrier(z: np.ndarray, delta: float):
    """Value, first and second derivative of the relaxed barrier of ``z >= 0``.

    ``-ln z`` above ``delta``, quadratic extension below it (C2 at ``delta``).
    """
    z = np.asarray(z, dtype=float)
    inner = z > delta
    zs = np.where(inner, z, delta)
    val = np.where(inner, -np.log(zs), 0.5 * (((z - 2 * delta) / delta) ** 2 - 1.0) - math.log(delta))
    d1 = np.where(inner, -1.0 / zs, (z - 2 * delta) / delta**2)
    d2 = np.where(inner, 1.0 / zs**2, 1.0 / delta**2)
    return val, d1, d2


@dataclass
class Dual:
    lam: float
    rho: float
    residual: float = math.inf


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost_before: float
    cost_after: float
    expected_decrease: float
    step: float
    regularization: float
    eq_residual: float
    ineq_violation: float
    accepted: bool


@dataclass(frozen=True)
class Solution:
    states: tuple[np.ndarray, ...]
    controls: tuple[np.ndarray, ...]
    gains: tuple[np.ndarray, ...]
    feedforward: tuple[np.ndarray, ...]
    times: tuple[np.ndarray, ...]
    tags: tuple
    cost: float
    iterations: int = 0
    accepted_steps: int = 0
    converged: bool = False
    eq_residual: float = 0.0
    ineq_violation: float = 0.0
    duals: dict = field(default_factory=dict, compare=False)
    trace: tuple[IterationRecord, ...] = ()
    message: str = ""

    @property
    def t0(self) -> float:
        return float(self.times[0][0])

    @property
    def dt(self) -> float:
        for t in self.times:
            if len(t) > 1:
                return float(t[1] - t[0])
        raise ValueError("solution has no control nodes")

    @property
    def node_times(self) -> np.ndarray:
        return np.concatenate([t[:-1] for t in self.times])

    @property
    def node_states(self) -> np.ndarray:
        return np.concatenate([x[:-1] for x in self.states])

    @property
    def node_controls(self) -> np.ndarray:
        return np.concatenate(self.controls)

    @property
    def node_gains(self) -> np.ndarray:
        return np.concatenate(self.gains)

    @property
    def node_feedforward(self) -> np.ndarray:
        return np.concatenate(self.feedforward)

    @property
    def node_tags(self) -> list:
        return [tag for tag, u in zip(self.tags, self.controls) for _ in range(len(u))]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1][-1]


# ---------------------------------------------------------------------------
# Trajectory evaluation


def _rollout(phases, x0, controls, ref_states=None, gains=None, ff=None, alpha=0.0, adapt_tags=None):
    """Closed-loop rollout ``u = u_bar + alpha k + K (x - x_bar)``.

    Returns (states, controls) per phase or None on divergence.
    """
    xs_all, us_all = [], []
    x = np.asarray(x0, dtype=float)
    try:
        with np.errstate(over="raise", invalid="raise"):
            for i, ph in enumerate(phases):
                n = ph.n_nodes
                xs = np.empty((n + 1, ph.nx))
                us = np.empty((n, ph.nu))
                xs[0] = x
                for k in range(n):
                    u = np.array(controls[i][k], dtype=float)
                    if ff is not None and alpha:
                        u += alpha * ff[i][k]
                    if gains is not None and gains[i] is not None and gains[i][k] is not None:
                        u += gains[i][k] @ (x - ref_states[i][k])
                    us[k] = u
                    x = ph.step(k, x, u)
                    if not np.abs(x).max() < DIVERGENCE_BOUND:  # also catches nan
                        return None
                    xs[k + 1] = x
                xs_all.append(xs)
                us_all.append(us)
                if i + 1 < len(phases):
                    x = ph.reset(xs[-1])
    except (ValueError, ArithmeticError):
        return None
    return xs_all, us_all


def _duals_for(ph: Phase, duals: dict, config: SolverConfig):
    lam = np.empty(len(ph.equality_keys))
    rho = np.empty(len(ph.equality_keys))
    for r, key in enumerate(ph.equality_keys):
        d = duals.get(key)
        if d is None:
            d = duals[key] = Dual(0.0, config.al_penalty_init)
        lam[r], rho[r] = d.lam, d.rho
    return lam, rho


def evaluate(phases, xs_all, us_all, duals, config: SolverConfig) -> tuple[float, float, float]:
    """Total objective (cost + penalties), max |h|, max inequality violation."""
    total = 0.0
    viol = 0.0
    for i, ph in enumerate(phases):
        xs, us = xs_all[i], us_all[i]
        if ph.n_nodes:
            total += float(np.sum(ph.stage_cost(xs[:-1], us)))
        if ph.n_ineq:
            g = ph.inequality(xs[:-1], us)
            val, _, _ = relaxed_log_barrier(g, config.reb_delta)
            total += config.reb_weight * ph.dt * float(np.sum(val))
            if g.size:
                viol = max(viol, float(np.max(-g)))
        total += float(ph.terminal_cost(xs[-1]))
    penalty, eq_res = equality_penalty(phases, xs_all, duals, config)
    return total + penalty, eq_res, max(viol, 0.0)


def equality_penalty(phases, xs_all, duals, config: SolverConfig) -> tuple[float, float]:
    """Augmented-Lagrangian terms ``lam h + rho/2 h^2`` and max ``|h|``."""
    total = 0.0
    eq_res = 0.0
    for i, ph in enumerate(phases):
        if ph.equality_keys:
            h = ph.terminal_equality(xs_all[i][-1])
            lam, rho = _duals_for(ph, duals, config)
            total += float(lam @ h + 0.5 * np.sum(rho * h**2))
            eq_res = max(eq_res, float(np.max(np.abs(h))))
    return total, eq_res


# ---------------------------------------------------------------------------
# Backward pass


@dataclass
class BackwardResult:
    gains: list
    feedforward: list
    dV1: float
    dV2: float
    regularization: float

    def expected_decrease(self, alpha: float = 1.0) -> float:
        return -(alpha * self.dV1 + alpha**2 * self.dV2)


def _terminal_value(ph: Phase, x, duals, config):
    Vx, Vxx = ph.terminal_cost_derivatives(x)
    Vx = np.array(Vx, dtype=float)
    Vxx = np.array(Vxx, dtype=float)
    if ph.equality_keys:
        h = ph.terminal_equality(x)
        hx = ph.terminal_equality_jacobian(x)
        lam, rho = _duals_for(ph, duals, config)
        Vx += hx.T @ (lam + rho * h)
        Vxx += hx.T @ (rho[:, None] * hx)
    return Vx, Vxx


def _stage_expansion(ph: Phase, xs, us, config):
    A, B = ph.linearize(xs, us)
    lx, lu, lxx, luu, lux = ph.stage_cost_derivatives(xs, us)
    lx, lu, lxx, luu, lux = (np.array(a, dtype=float) for a in (lx, lu, lxx, luu, lux))
    if ph.n_ineq:
        g = ph.inequality(xs, us)
        gx, gu = ph.inequality_jacobians(xs, us)
        _, d1, d2 = relaxed_log_barrier(g, config.reb_delta)
        w = config.reb_weight * ph.dt
        d1, d2 = w * d1, w * d2
        gxT = gx.transpose(0, 2, 1)
        guT = gu.transpose(0, 2, 1)
        lx += (gxT @ d1[:, :, None])[..., 0]
        lu += (guT @ d1[:, :, None])[..., 0]
        guT_d2 = guT * d2[:, None, :]
        lxx += (gxT * d2[:, None, :]) @ gx
        luu += guT_d2 @ gu
        lux += guT_d2 @ gx
    return A, B, lx, lu, lxx, luu, lux


def _augmented_stage(ph: Phase, expansion, reg: float):
    """Batched dynamics and cost expansions in the augmented coordinates ``(dx, 1, du)``.

    Returns ``F`` (N, nx+1, nx+1+nu) with ``[dx'; 1] = F [dx; 1; du]`` and the stage
    Hessian ``L`` (N, nz, nz) carrying gradients in the middle row/column.  The
    Tikhonov term ``reg B^T B`` / ``reg B^T A`` is folded into the control rows.
    """
    A, B, lx, lu, lxx, luu, lux = expansion
    n, nx, nu = ph.n_nodes, ph.nx, ph.nu
    nz = nx + 1 + nu
    F = np.zeros((n, nx + 1, nz))
    F[:, :nx, :nx] = A
    F[:, :nx, nx + 1 :] = B
    F[:, nx, nx] = 1.0
    L = np.zeros((n, nz, nz))
    L[:, :nx, :nx] = lxx
    L[:, :nx, nx] = lx
    L[:, nx, :nx] = lx
    L[:, nx + 1 :, :nx] = lux
    L[:, :nx, nx + 1 :] = lux.transpose(0, 2, 1)
    L[:, nx + 1 :, nx] = lu
    L[:, nx, nx + 1 :] = lu
    L[:, nx + 1 :, nx + 1 :] = luu
    if reg:
        Bt = B.transpose(0, 2, 1)
        L[:, nx + 1 :, :nx] += reg * (Bt @ A)
        L[:, nx + 1 :, nx + 1 :] += reg * (Bt @ B)
    return F, L


def _backward_sweep(phases, expansions, terminals, resets, reg):
    """Riccati sweep on the augmented value matrix ``[[Vxx, Vx], [Vx^T, *]]``.

    With ``k = -Quu^-1 Qu`` the quadratic model change is ``dV2 = -dV1 / 2``.
    """
    n_ph = len(phases)
    gains = [None] * n_ph
    ffs = [None] * n_ph
    dV1 = 0.0
    V = None
    for i in reversed(range(n_ph)):
        ph = phases[i]
        nx = ph.nx
        tVx, tVxx = terminals[i]
        T = np.zeros((nx + 1, nx + 1))
        T[:nx, :nx] = tVxx
        T[:nx, nx] = tVx
        T[nx, :nx] = tVx
        if V is None:
            V = T
        else:
            P = np.zeros((nx + 1, nx + 1))
            P[:nx, :nx] = resets[i + 1]
            P[nx, nx] = 1.0
            V = P.T @ V @ P + T
        F, L = _augmented_stage(ph, expansions[i], reg)
        Ft = F.transpose(0, 2, 1).copy()
        n = ph.n_nodes
        Kk = np.empty((n, ph.nu, nx + 1))
        for k in reversed(range(n)):
            Q = Ft[k] @ V @ F[k] + L[k]
            chol, info = lapack.dpotrf(Q[nx + 1 :, nx + 1 :], lower=1)
            if info != 0:
                raise _NotPositiveDefinite
            rhs = Q[nx + 1 :, : nx + 1]
            sol, _ = lapack.dpotrs(chol, rhs, lower=1)
            Kk[k] = sol
            dV1 -= sol[:, nx] @ rhs[:, nx]
            V = Q[: nx + 1, : nx + 1] - sol.T @ rhs
        Kk = -Kk
        gains[i], ffs[i] = Kk[:, :, :nx], Kk[:, :, nx]
    return BackwardResult(gains, ffs, dV1, -0.5 * dV1, reg)


def backward_pass(phases, xs_all, us_all, duals, config: SolverConfig, reg: float | None = None) -> BackwardResult:
    """Riccati-like sweep over all phases with regularization retries.

    Raises:
        SolverFailure: if ``Q_uu`` stays indefinite up to ``reg_max``.
    """
    reg = config.reg_init if reg is None else reg
    expansions, terminals, resets = [], [], []
    for i, ph in enumerate(phases):
        xs, us = xs_all[i], us_all[i]
        expansions.append(_stage_expansion(ph, xs[:-1], us, config))
        terminals.append(_terminal_value(ph, xs[-1], duals, config))
        resets.append(phases[i - 1].reset_jacobian(xs_all[i - 1][-1]) if i else None)
    while True:
        try:
            return _backward_sweep(phases, expansions, terminals, resets, reg)
        except _NotPositiveDefinite:
            reg = max(reg * config.reg_growth, config.reg_init)
            if reg > config.reg_max:
                raise SolverFailure("Q_uu not positive definite at maximum regularization") from None


def forward_pass(phases, x0, nominal_states, nominal_controls, bwd: BackwardResult, alpha: float):
    """Closed-loop rollout along the new policy; None if the state diverges."""
    return _rollout(
        phases, x0, nominal_controls, ref_states=nominal_states, gains=bwd.gains, ff=bwd.feedforward, alpha=alpha
    )


# ---------------------------------------------------------------------------
# Solve


def _update_duals(phases, xs_all, duals, config: SolverConfig) -> None:
    for i, ph in enumerate(phases):
        if not ph.equality_keys:
            continue
        h = ph.terminal_equality(xs_all[i][-1])
        for r, key in enumerate(ph.equality_keys):
            d = duals[key]
            res = abs(float(h[r]))
            d.lam += d.rho * float(h[r])
            if res > config.al_progress_ratio * d.residual and res > config.constraint_tolerance:
                d.rho = min(d.rho * config.al_penalty_growth, config.al_penalty_max)
            d.residual = res


def _copy_duals(duals) -> dict:
    return {k: Dual(d.lam, d.rho, d.residual) for k, d in (duals or {}).items()}


def _structure_matches(phases, sol: Solution | None) -> bool:
    if sol is None or len(sol.controls) != len(phases):
        return False
    return all(len(u) == ph.n_nodes for u, ph in zip(sol.controls, phases))


def initial_trajectory(phases, x0, warm_start: Solution | None):
    if _structure_matches(phases, warm_start):
        traj = _rollout(phases, x0, warm_start.controls, warm_start.states, warm_start.gains)
        if traj is not None:
            return traj
        traj = _rollout(phases, x0, warm_start.controls)
        if traj is not None:
            return traj
    return _rollout(phases, x0, [ph.default_controls() for ph in phases])


def solve(
    phases: Sequence[Phase],
    x0: np.ndarray,
    warm_start: Solution | None = None,
    config: SolverConfig = SolverConfig(),
    duals: dict | None = None,
    max_iterations: int | None = None,
) -> Solution:
    """Run up to ``max_iterations`` DDP iterations from a (warm-started) guess.

    One iteration is a backward pass followed, unless the expected decrease is
    already below tolerance, by a backtracking line search.  Terminal-equality
    multipliers are updated after every accepted step.  Multipliers come from
    ``duals`` if given, else from ``warm_start.duals``.

    Raises:
        SolverFailure: when no finite trajectory exists or the backward pass
            cannot be regularized; ``exc.solution`` holds the last valid one.
    """
    phases = list(phases)
    max_iterations = config.max_iterations if max_iterations is None else max_iterations
    duals = _copy_duals(duals if duals is not None else (warm_start.duals if warm_start else None))
    traj = initial_trajectory(phases, x0, warm_start)
    if traj is None:
        raise SolverFailure("initial rollout diverged", warm_start)
    xs, us = traj
    J, eq_res, viol = evaluate(phases, xs, us, duals, config)
    reg = config.reg_init
    alphas = []
    a = 1.0
    while a >= config.min_step * (1 - 1e-12):
        alphas.append(a)
        a *= config.line_search_factor

    gains = [np.zeros((ph.n_nodes, ph.nu, ph.nx)) for ph in phases]
    ffs = [np.zeros((ph.n_nodes, ph.nu)) for ph in phases]
    trace = []
    iterations = accepted_steps = 0
    converged = False
    message = ""

    def package(msg):
        return Solution(
            states=tuple(xs),
            controls=tuple(us),
            gains=tuple(gains),
            feedforward=tuple(ffs),
            times=tuple(ph.times for ph in phases),
            tags=tuple(ph.tag for ph in phases),
            cost=J,
            iterations=iterations,
            accepted_steps=accepted_steps,
            converged=converged,
            eq_residual=eq_res,
            ineq_violation=viol,
            duals=duals,
            trace=tuple(trace),
            message=msg,
        )

    for _ in range(max_iterations):
        iterations += 1
        try:
            bwd = backward_pass(phases, xs, us, duals, config, reg)
        except SolverFailure as exc:
            raise SolverFailure(str(exc), package(str(exc))) from None
        reg = bwd.regularization
        gains, ffs = bwd.gains, bwd.feedforward
        expected = bwd.expected_decrease()
        if expected < config.tolerance * max(1.0, abs(J)):
            if eq_res <= config.constraint_tolerance:
                converged = True
                trace.append(IterationRecord(iterations, J, J, expected, 0.0, reg, eq_res, viol, False))
                break
            before, _ = equality_penalty(phases, xs, duals, config)
            _update_duals(phases, xs, duals, config)
            after, _ = equality_penalty(phases, xs, duals, config)
            trace.append(IterationRecord(iterations, J, J, expected, 0.0, reg, eq_res, viol, False))
            J += after - before
            continue
        accepted = False
        for alpha in alphas:
            cand = forward_pass(phases, x0, xs, us, bwd, alpha)
            if cand is None:
                continue
            J_c, eq_c, viol_c = evaluate(phases, cand[0], cand[1], duals, config)
            if J_c < J:
                trace.append(IterationRecord(iterations, J, J_c, expected, alpha, reg, eq_c, viol_c, True))
                xs, us = cand
                J, eq_res, viol = J_c, eq_c, viol_c
                accepted = True
                break
        if accepted:
            accepted_steps += 1
            reg = max(reg / config.reg_shrink, config.reg_init)
            if any(ph.equality_keys for ph in phases):
                before, _ = equality_penalty(phases, xs, duals, config)
                _update_duals(phases, xs, duals, config)
                after, _ = equality_penalty(phases, xs, duals, config)
                J += after - before
        else:
            trace.append(IterationRecord(iterations, J, J, expected, 0.0, reg, eq_res, viol, False))
            reg = min(reg * config.reg_growth, config.reg_max)
            message = "line search failed"
    return package(message or ("converged" if converged else "iteration limit"))


def shift_warm_start(prev: Solution, elapsed: float, phases: Sequence[Phase], x0: np.ndarray | None = None):
    """Time-shift ``prev`` onto a new phase structure.

    Nodes older than ``elapsed`` are dropped, the remaining controls are re-tagged
    for the new phases, missing tail nodes hold the last control, and the whole
    guess is rolled out from ``x0`` (default: the old state at the new start)
    using the old feedback gains where tags agree.  Returns None (cold start)
    when ``elapsed`` exceeds the previous horizon or the rollout diverges.
    """
    if elapsed < 0:
        raise ValueError("elapsed must be nonnegative")
    t_old = prev.node_times
    dt = prev.dt
    horizon = len(t_old) * dt
    if elapsed > horizon + 1e-9:
        return None
    n_drop = int(math.ceil(elapsed / dt - 1e-6))
    old_x = prev.node_states
    old_u = prev.node_controls
    old_K = prev.node_gains
    old_tags = prev.node_tags
    n_old = len(old_u)
    if x0 is None:
        x0 = old_x[n_drop] if n_drop < n_old else prev.final_state

    controls, ref_states, gains = [], [], []
    m = 0
    for ph in phases:
        uc = np.empty((ph.n_nodes, ph.nu))
        xr = np.zeros((ph.n_nodes, ph.nx))
        gk = [None] * ph.n_nodes
        for k in range(ph.n_nodes):
            i = min(m + n_drop, n_old - 1)
            uc[k] = ph.adapt_control(k, old_u[i], old_tags[i])
            if m + n_drop < n_old and old_tags[i] == ph.tag:
                xr[k] = old_x[i]
                gk[k] = old_K[i]
            m += 1
        controls.append(uc)
        ref_states.append(xr)
        gains.append(gk)
    traj = _rollout(phases, x0, controls, ref_states, gains)
    if traj is None:
        return None
    xs, us = traj
    fill = [np.array([g if g is not None else np.zeros((ph.nu, ph.nx)) for g in gk]).reshape(ph.n_nodes, ph.nu, ph.nx)
            for gk, ph in zip(gains, phases)]
    return Solution(
        states=tuple(xs),
        controls=tuple(us),
        gains=tuple(fill),
        feedforward=tuple(np.zeros((ph.n_nodes, ph.nu)) for ph in phases),
        times=tuple(ph.times for ph in phases),
        tags=tuple(ph.tag for ph in phases),
        cost=math.nan,
        duals=_copy_duals(prev.duals),
        message="shifted warm start",
    )


def write_trace(solution: Solution, path) -> None:
    """Per-iteration diagnostics as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f.name for f in IterationRecord.__dataclass_fields__.values()])
        for rec in solution.trace:
            w.writerow([getattr(rec, f) for f in IterationRecord.__dataclass_fields__])
