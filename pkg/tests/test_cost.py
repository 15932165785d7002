import numpy as np
import pytest

from hkdmpc.cost import (
    CostWeights,
    NodeReference,
    cost_derivatives,
    nominal_foot_offsets,
    running_cost,
    terminal_cost,
    terminal_cost_derivatives,
)
from hkdmpc.derivcheck import central_difference, random_control, random_reference, random_state, relative_error
from hkdmpc.hkd_model import ALL_MODES, NU, NX, ContactMode, ctrl_slot, leg_slot

W = CostWeights()


def _exact_reference(x, stance, u_prev=None):
    """A reference that the state tracks exactly, so every tracking term is zero."""
    p_rel = np.zeros((4, 3))
    for j in range(4):
        if stance[j]:
            p_rel[j] = x[leg_slot(j)] - x[3:6]
    return NodeReference(body=x[:12].copy(), joints=x[12:].copy(), p_rel=p_rel, u_prev=u_prev)


def test_default_weights():
    np.testing.assert_array_equal(W.Q_b, [10, 10, 30, 50, 50, 80, 1, 1, 1, 5, 5, 10])
    assert (W.Q_J == 0.1).all() and (W.R_lambda == 1e-3).all()
    assert (W.w_foot, W.w_smooth, W.terminal) == (5.0, 1e-2, 10.0)


def test_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(Q_J=-1.0)
    with pytest.raises(ValueError):
        CostWeights(Q_b=np.r_[np.ones(5), 0.0, np.ones(6)])
    with pytest.raises(ValueError):
        CostWeights(w_foot=-1.0)


@pytest.mark.parametrize("mode", [ContactMode.all_stance(), ContactMode.from_bits("1001"), ContactMode.all_swing()])
def test_zero_at_reference(mc, rng, mode):
    x = random_state(rng, mode, mc)
    u_prev = np.zeros(NU)
    for j in range(4):
        if not mode[j]:
            u_prev[ctrl_slot(j)] = rng.normal(size=3)
    u = u_prev.copy()  # GRFs zero, joint velocities equal to the previous plan
    ref = _exact_reference(x, mode.stance, u_prev)
    assert running_cost(x, u, mode.stance, ref, W) == pytest.approx(0.0, abs=1e-15)
    assert terminal_cost(x, mode.stance, ref, W) == pytest.approx(0.0, abs=1e-15)
    lx, *_ = cost_derivatives(x, u, mode.stance, ref, W)
    np.testing.assert_allclose(lx, 0.0, atol=1e-12)


def test_unit_height_error_costs_height_weight(mc, rng):
    mode = ContactMode.all_swing()
    x = random_state(rng, mode, mc)
    ref = _exact_reference(x, mode.stance)
    x2 = x.copy()
    x2[5] += 1.0
    assert running_cost(x2, np.zeros(NU), mode.stance, ref, W) == pytest.approx(W.Q_b[5])


def test_terminal_multiplier_zero(mc, rng):
    w0 = CostWeights(terminal=0.0)
    for mode in ALL_MODES[:4]:
        x = random_state(rng, mode, mc)
        assert terminal_cost(x, mode.stance, random_reference(rng), w0) == 0.0


def test_terminal_is_state_terms_times_multiplier(mc, rng):
    mode = ContactMode.from_bits("0110")
    x = random_state(rng, mode, mc)
    ref = random_reference(rng, with_prev=False)
    u = np.zeros(NU)
    assert terminal_cost(x, mode.stance, ref, W) == pytest.approx(W.terminal * running_cost(x, u, mode.stance, ref, W))


@pytest.mark.parametrize("mode", ALL_MODES, ids=lambda m: m.bits)
def test_running_cost_derivatives_match_central_differences(mc, mode):
    rng = np.random.default_rng(int(mode.bits, 2) + 100)
    st = mode.stance
    for _ in range(5):
        x = random_state(rng, mode, mc)
        u = random_control(rng, mode, mc)
        ref = random_reference(rng)
        lx, lu, lxx, luu, lux = cost_derivatives(x, u, st, ref, W)
        assert relative_error(lx, central_difference(lambda z: running_cost(z, u, st, ref, W), x)) < 1e-6
        assert relative_error(lu, central_difference(lambda z: running_cost(x, z, st, ref, W), u)) < 1e-6
        assert relative_error(lxx, central_difference(lambda z: cost_derivatives(z, u, st, ref, W)[0], x)) < 1e-6
        assert relative_error(luu, central_difference(lambda z: cost_derivatives(x, z, st, ref, W)[1], u)) < 1e-6
        assert relative_error(lux, central_difference(lambda z: cost_derivatives(z, u, st, ref, W)[1], x)) < 1e-6


@pytest.mark.parametrize("mode", ALL_MODES[::5], ids=lambda m: m.bits)
def test_terminal_cost_derivatives_match_central_differences(mc, mode):
    rng = np.random.default_rng(7)
    st = mode.stance
    x = random_state(rng, mode, mc)
    ref = random_reference(rng, with_prev=False)
    lx, lxx = terminal_cost_derivatives(x, st, ref, W)
    assert relative_error(lx, central_difference(lambda z: terminal_cost(z, st, ref, W), x)) < 1e-6
    assert relative_error(lxx, central_difference(lambda z: terminal_cost_derivatives(z, st, ref, W)[0], x)) < 1e-6


def test_masks_zero_inactive_slots(mc, rng):
    mode = ContactMode.from_bits("1100")
    x = random_state(rng, mode, mc)
    u = random_control(rng, mode, mc)
    ref = random_reference(rng, with_prev=False)
    lx, lu, lxx, luu, _ = cost_derivatives(x, u, mode.stance, ref, W)
    for j in range(2):  # stance legs: no joint tracking, hence nothing on the state slot except foot regularization
        np.testing.assert_array_equal(lxx[leg_slot(j), leg_slot(j)], 2 * W.w_foot * np.eye(3))
    for j in (2, 3):  # swing legs: no GRF cost
        np.testing.assert_array_equal(lu[ctrl_slot(j)], 0.0)
        np.testing.assert_array_equal(luu[ctrl_slot(j), ctrl_slot(j)], 0.0)


def test_hessians_are_psd(mc, rng):
    for mode in ALL_MODES:
        x = random_state(rng, mode, mc)
        _, _, lxx, luu, _ = cost_derivatives(x, random_control(rng, mode, mc), mode.stance, random_reference(rng), W)
        assert np.linalg.eigvalsh(lxx).min() > -1e-12
        assert np.linalg.eigvalsh(luu).min() > -1e-12


def test_quadratic_expansion_is_exact(mc, rng):
    mode = ContactMode.from_bits("1010")
    st = mode.stance
    x = random_state(rng, mode, mc)
    u = random_control(rng, mode, mc)
    ref = random_reference(rng)
    lx, lu, lxx, luu, lux = cost_derivatives(x, u, st, ref, W)
    dx, du = rng.normal(size=NX), rng.normal(size=NU)
    taylor = running_cost(x, u, st, ref, W) + lx @ dx + lu @ du + 0.5 * (dx @ lxx @ dx + du @ luu @ du) + du @ lux @ dx
    assert running_cost(x + dx, u + du, st, ref, W) == pytest.approx(taylor, rel=1e-12)


def test_batched_evaluation_matches_pointwise(mc, rng):
    mode = ContactMode.from_bits("0111")
    xs = np.stack([random_state(rng, mode, mc) for _ in range(4)])
    us = np.stack([random_control(rng, mode, mc) for _ in range(4)])
    ref = random_reference(rng)
    batched = running_cost(xs, us, mode.stance, ref, W)
    for i in range(4):
        assert batched[i] == pytest.approx(running_cost(xs[i], us[i], mode.stance, ref, W))


def test_nominal_foot_offsets_yaw(mc):
    p = nominal_foot_offsets(mc, np.array([0.0, np.pi / 2]), np.array([0.3, 0.3]))
    np.testing.assert_allclose(p[1, :, 0], -p[0, :, 1], atol=1e-15)
    np.testing.assert_allclose(p[1, :, 1], p[0, :, 0], atol=1e-15)
    np.testing.assert_allclose(p[..., 2], -0.3)
