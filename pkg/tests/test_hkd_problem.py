import numpy as np
import pytest

from hkdmpc.hkd_model import GRAVITY, ContactMode, foot_world, leg_slot
from hkdmpc.hkd_problem import (
    ProblemSpec,
    align_initial_state,
    build_phases,
    friction_residuals,
    initial_state_from_reference,
    min_swing_clearance,
    predicted_footholds,
)
from hkdmpc.hsddp import solve
from hkdmpc.reference import schedule_from_reference, synth_gait

CONVERGE_ITERS = 40


@pytest.fixture(scope="module")
def trot_spec(mc):
    traj = synth_gait("trot", 0.5, 0.0, 0.4, 0.5, 3.0, mc)
    return ProblemSpec(traj, schedule_from_reference(traj), mc)


@pytest.fixture(scope="module")
def converged(trot_spec):
    out = []
    for now in (0.0, 0.5, 0.61):
        phases = build_phases(trot_spec, now)
        x0 = initial_state_from_reference(trot_spec, now, phases[0].mode)
        out.append((phases, solve(phases, x0, max_iterations=CONVERGE_ITERS)))
    return out


def test_phase_structure_covers_horizon(trot_spec):
    phases = build_phases(trot_spec, 0.5)
    assert sum(p.n_nodes for p in phases) == 42
    assert phases[0].t0 == 0.5
    for a, b in zip(phases, phases[1:]):
        assert a.mode != b.mode
        assert b.t0 == pytest.approx(a.t0 + a.n_nodes * 0.011)
        assert a.next_mode == b.mode
        # legs that swing in a and stand in b carry a touchdown equality
        assert a.touchdown_legs == [j for j in range(4) if not a.mode[j] and b.mode[j]]
    assert phases[-1].next_mode is None and phases[-1].equality_keys == ()


def test_touchdown_keys_stable_across_replans(trot_spec):
    keys_a = {k for p in build_phases(trot_spec, 0.5) for k in p.equality_keys}
    keys_b = {k for p in build_phases(trot_spec, 0.52) for k in p.equality_keys}
    assert keys_a & keys_b


def test_initial_state_from_reference(trot_spec, mc):
    x = initial_state_from_reference(trot_spec, 0.0)
    mode = trot_spec.schedule.mode_at(0.0)
    assert x[5] == pytest.approx(mc.nominal_height)
    for j in range(4):
        if mode[j]:
            assert x[leg_slot(j)][2] == 0.0
        else:
            np.testing.assert_allclose(x[leg_slot(j)], trot_spec.reference.joint_q[0, j])


def test_align_initial_state_applies_reset(trot_spec, mc):
    a, b = ContactMode.from_bits("1001"), ContactMode.from_bits("1111")
    x = initial_state_from_reference(trot_spec, 0.0, a)
    np.testing.assert_array_equal(align_initial_state(x, a, a, mc), x)
    y = align_initial_state(x, a, b, mc)
    np.testing.assert_allclose(y[leg_slot(1)], foot_world(x, 1, False, mc))


def test_converged_trot_satisfies_friction_cone(converged, mc):
    tol = 1e-3 * mc.mass * GRAVITY
    for phases, sol in converged:
        assert sol.converged
        worst_fz, worst_cone = friction_residuals(sol, phases)
        assert worst_fz <= tol
        assert worst_cone <= tol


def test_converged_trot_swing_clearance(converged):
    for phases, sol in converged:
        assert min_swing_clearance(sol, phases) > -1e-3


def test_converged_trot_touchdown_residual(converged):
    for phases, sol in converged:
        assert sol.eq_residual < 1e-3
        for j, (t, p) in predicted_footholds(sol, phases).items():
            assert abs(p[2]) < 1e-3


def test_accepted_iterations_decrease_objective(converged):
    for _, sol in converged:
        acc = [r for r in sol.trace if r.accepted]
        assert acc
        for r in acc:
            assert r.cost_after < r.cost_before


def test_objective_monotone_without_equalities(mc):
    # standing: a single all-stance phase, so no multiplier updates re-weight the objective
    traj = synth_gait("trot", 0.0, 0.0, 0.4, 0.5, 2.0, mc)
    spec = ProblemSpec(traj, schedule_from_reference(traj), mc)
    phases = build_phases(spec, 0.0)
    assert len(phases) == 1
    x0 = initial_state_from_reference(spec, 0.0)
    x0[[0, 5, 9]] += [0.05, -0.03, 0.2]
    sol = solve(phases, x0, max_iterations=15)
    costs = [sol.trace[0].cost_before] + [r.cost_after for r in sol.trace if r.accepted]
    assert len(costs) > 5
    assert np.all(np.diff(costs) < 0)


def test_three_iteration_budget_is_respected(trot_spec):
    phases = build_phases(trot_spec, 0.0)
    sol = solve(phases, initial_state_from_reference(trot_spec, 0.0, phases[0].mode))
    assert sol.iterations <= 3
    assert np.all(np.isfinite(sol.node_states))
