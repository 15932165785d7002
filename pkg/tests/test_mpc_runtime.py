import numpy as np
import pytest

import hkdmpc.mpc_runtime as rt
from hkdmpc.config import run_config_from_dict
from hkdmpc.experiment import _PlanState, build_spec
from hkdmpc.hkd_model import ContactMode
from hkdmpc.hkd_problem import initial_state_from_reference
from hkdmpc.hsddp import SolverFailure
from hkdmpc.mpc_runtime import (
    ControlBundle,
    MpcController,
    emulate_policy_lag,
    select_control,
    select_node,
    swing_interval,
)
from hkdmpc.sim import initial_sim_state, sim_step

DT = 0.011
A, B = ContactMode.from_bits("1001"), ContactMode.from_bits("0110")


def _bundle(n=42, modes=None, t0=0.0, delivered=0.0, seed=0):
    rng = np.random.default_rng(seed)
    return ControlBundle(
        bundle_id=7,
        node_times=t0 + DT * np.arange(n),
        states=rng.normal(size=(n, 24)),
        controls=rng.normal(size=(n, 12)),
        gains=rng.normal(size=(n, 12, 24)),
        modes=tuple(modes or [A] * n),
        footholds={},
        t_request=t0,
        t_delivered=delivered,
    )


@pytest.fixture(scope="module")
def trot_spec():
    return build_spec(run_config_from_dict({"duration": 2.0}))


def _plan_state(spec, t):
    mode = spec.schedule.mode_at(t)
    return _PlanState(initial_state_from_reference(spec, t, mode), mode)


# --- node selection -------------------------------------------------------------


def test_exact_node_time_selects_that_node():
    b = _bundle()
    for k in (0, 5, 41):
        assert select_node(b, k * DT)[0] == k


def test_nearest_node_not_earlier_only():
    assert select_node(_bundle(), 0.006)[0] == 1
    assert select_node(_bundle(), 0.005)[0] == 0


def test_zero_feedback_at_nominal_state():
    b = _bundle()
    u, stale = select_control(b, 3 * DT, b.states[3, :12])
    np.testing.assert_array_equal(u, b.controls[3])
    assert not stale


def test_feedback_uses_body_gains():
    b = _bundle()
    dx = np.zeros(12)
    dx[5] = 0.01
    u, _ = select_control(b, 0.0, b.states[0, :12] + dx)
    np.testing.assert_allclose(u, b.controls[0] + b.gains[0, :, 5] * 0.01)


def test_exhausted_bundle_holds_last_and_flags_stale():
    b = _bundle(10)
    idx, stale = select_node(b, 1.0)
    assert idx == 9 and stale
    assert not select_node(b, 9 * DT)[1]


def test_mode_mismatch_picks_nearest_matching_node():
    modes = [A] * 10 + [B] * 10 + [A] * 10
    b = _bundle(30, modes)
    assert select_node(b, 12 * DT, A)[0] == 9
    assert select_node(b, 12 * DT, B)[0] == 12
    assert select_node(b, 12 * DT, ContactMode.all_stance())[0] is None
    with pytest.raises(LookupError):
        select_control(b, 0.0, np.zeros(12), ContactMode.all_stance())


def test_selection_is_deterministic():
    b = _bundle()
    x = np.random.default_rng(1).normal(size=12)
    u1, _ = select_control(b, 0.1234, x)
    u2, _ = select_control(b, 0.1234, x)
    np.testing.assert_array_equal(u1, u2)


def test_bundle_validation():
    with pytest.raises(ValueError):
        ControlBundle(0, np.array([0.0, 0.0]), np.zeros((2, 24)), np.zeros((2, 12)), np.zeros((2, 12, 24)),
                      (A, A), {}, 0.0, 0.0)


# --- policy lag ---------------------------------------------------------------------


def test_lag_zero_is_immediate():
    b = emulate_policy_lag(_bundle(), 0.0)
    assert b.t_delivered == b.t_request
    assert select_node(b, b.t_delivered)[0] == 0


def test_lag_six_ms_skips_half_a_node():
    b = emulate_policy_lag(_bundle(), 0.006)
    assert b.t_delivered == pytest.approx(0.006)
    assert select_node(b, b.t_delivered)[0] == 1


def test_lag_beyond_horizon_is_stale():
    b = emulate_policy_lag(_bundle(), 0.5)
    assert select_node(b, b.t_delivered)[1]
    with pytest.raises(ValueError):
        emulate_policy_lag(b, -0.001)


def test_controller_delivers_after_lag(trot_spec):
    ctrl = MpcController(trot_spec, policy_lag=0.006)
    ctrl.mpc_step(0.0, _plan_state(trot_spec, 0.0))  # startup plan, delivered at once
    ctrl._deliver(0.0)
    assert ctrl.active_bundle_id == 0
    rec = ctrl.mpc_step(0.02, _plan_state(trot_spec, 0.02))
    assert rec["t_delivered"] == pytest.approx(0.026)
    ctrl._deliver(0.024)
    assert ctrl.active_bundle_id == 0
    ctrl._deliver(0.026)
    assert ctrl.active_bundle_id == 1


# --- replanning -----------------------------------------------------------------------


def test_rate_limiting(trot_spec):
    ctrl = MpcController(trot_spec)
    s = _plan_state(trot_spec, 0.0)
    assert ctrl.mpc_step(0.0, s) is not None
    assert ctrl.mpc_step(0.002, s) is None
    assert ctrl.mpc_step(0.018, s) is None
    assert ctrl.mpc_step(0.020, s) is not None
    with pytest.raises(ValueError):
        ctrl.mpc_step(0.010, s)


def test_solver_failure_keeps_previous_bundle(trot_spec):
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) > 1:
            raise SolverFailure("injected")
        return rt.solve(*args, **kwargs)

    ctrl = MpcController(trot_spec, solve_fn=flaky)
    ctrl.mpc_step(0.0, _plan_state(trot_spec, 0.0))
    ctrl._deliver(0.0)
    first = ctrl.slot.latest()
    rec = ctrl.mpc_step(0.02, _plan_state(trot_spec, 0.02))
    ctrl._deliver(0.03)
    assert rec["failed"] and ctrl.degraded
    assert ctrl.slot.latest() is first
    u, _ = select_control(first, 0.03, first.states[3, :12])
    assert np.all(np.isfinite(u))


def test_control_loop_never_uses_mismatched_mode(trot_spec, mc, monkeypatch):
    seen = []
    real = rt.node_control

    def spy(bundle, idx, body):
        seen.append(bundle.modes[idx])
        return real(bundle, idx, body)

    monkeypatch.setattr(rt, "node_control", spy)
    ctrl = MpcController(trot_spec)
    t = 0.0
    mode = trot_spec.schedule.mode_at(t)
    state = initial_sim_state(ctrl.reference_body(t), mode, mc, t, trot_spec.reference.joint_q[0])
    for _ in range(150):
        mode = trot_spec.schedule.mode_at(state.t)
        n = len(seen)
        tau = ctrl.step(state.t, state)
        assert len(seen) == n + 1 and seen[-1] == mode
        state, _ = sim_step(state, tau, mode, mc)


def test_swing_interval(trot_spec):
    sched = trot_spec.schedule
    t_sw = sched.switch_times()
    leg = next(j for j in range(4) if not sched.mode_at(t_sw[0] + 1e-3)[j])
    lo, hi = swing_interval(sched, leg, t_sw[0] + 0.05)
    assert lo == pytest.approx(t_sw[0])
    assert hi == pytest.approx(t_sw[1])


# --- replan consistency ------------------------------------------------------------------


def _consistency_errors(spec, n_replans=25, steady_from=5):
    """Per replan, the state-norm gap between the new plan and the previous plan on shared nodes.

    Replans are spaced two nodes apart so node times line up exactly, and the measured state is
    the previous plan's own prediction (no disturbance, no model error).
    """
    ctrl = MpcController(spec, replan_period=2 * DT, startup_iterations=100)
    t = 0.0
    state = _plan_state(spec, t)
    prev = None
    out = []
    for k in range(n_replans):
        ctrl.mpc_step(t, state)
        sol = ctrl.solution
        if prev is not None and k >= steady_from:
            shared = prev.node_states[2:, :12]
            out.append(np.linalg.norm(shared - sol.node_states[: len(shared), :12], axis=1))
        prev = sol
        t += 2 * DT
        state = _PlanState(np.array(sol.node_states[2]), sol.node_tags[2])
    return np.array(out)


@pytest.fixture(scope="module")
def consistency(trot_spec):
    return _consistency_errors(trot_spec)


def test_replan_agrees_with_shifted_plan_near_term(consistency):
    assert consistency[:, :3].max() < 1e-2
    assert np.median(consistency[:, :21]) < 5e-3


@pytest.mark.xfail(strict=True, reason="3-iteration replans differ from the shifted plan by ~1e-2 on the horizon tail")
def test_replan_agrees_with_shifted_plan_to_1e3(consistency):
    assert consistency.max() < 1e-3
