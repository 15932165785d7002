import numpy as np
import pytest

from hkdmpc.hkd_model import leg_forward_kinematics, leg_jacobian, rotation_matrix
from hkdmpc.leg_control import LegControlConfig, SwingTrajectory, bezier_eval, stance_torque, swing_torque

Q_NOM = np.array([0.0, -0.8, 1.8])


def _traj(p0=(0.0, 0.0, 0.0), p3=(0.2, 0.05, 0.0), h=0.06, T=0.2):
    return SwingTrajectory(np.array(p0), np.array(p3), h, T)


def test_bezier_endpoints_exact():
    tr = _traj(p0=(0.1, -0.2, 0.01), p3=(0.3, -0.1, 0.02))
    np.testing.assert_array_equal(bezier_eval(tr, 0.0)[0], tr.p_liftoff)
    np.testing.assert_array_equal(bezier_eval(tr, 1.0)[0], tr.p_touchdown)


def test_bezier_midpoint_apex():
    tr = _traj()
    pos, _ = bezier_eval(tr, 0.5)
    P = tr.control_points()
    np.testing.assert_allclose(pos, (P[0] + 3 * P[1] + 3 * P[2] + P[3]) / 8)
    assert pos[2] == pytest.approx(0.06)


def test_bezier_stays_above_ground_inside():
    tr = _traj(p0=(0, 0, 0.0), p3=(0.2, 0, 0.01))
    for s in np.linspace(0.01, 0.99, 99):
        assert bezier_eval(tr, s)[0][2] > 0.0


def test_bezier_velocity_matches_finite_difference():
    tr = _traj()
    h = 1e-6
    for s in (0.1, 0.5, 0.8):
        fd = (bezier_eval(tr, s + h)[0] - bezier_eval(tr, s - h)[0]) / (2 * h * tr.duration)
        np.testing.assert_allclose(bezier_eval(tr, s)[1], fd, atol=1e-7)


def test_bezier_rejects_out_of_range():
    with pytest.raises(ValueError):
        bezier_eval(_traj(), 1.01)
    with pytest.raises(ValueError):
        SwingTrajectory(np.zeros(3), np.zeros(3), 0.06, 0.0)


def test_leg_config_defaults():
    cfg = LegControlConfig()
    assert cfg.swing_height == 0.06
    np.testing.assert_array_equal(cfg.kp, 350.0)
    np.testing.assert_array_equal(cfg.kd, 10.0)


def test_swing_torque_zero_at_target(mc):
    qd = np.array([0.3, -0.5, 1.0])
    p = leg_forward_kinematics(Q_NOM, 0, mc)
    v = leg_jacobian(Q_NOM, 0, mc) @ qd
    np.testing.assert_allclose(swing_torque(Q_NOM, qd, p, v, 350.0, 10.0, 0, mc), 0.0, atol=1e-12)


def test_swing_torque_pure_position_error(mc):
    e = np.array([0.01, -0.02, 0.03])
    p = leg_forward_kinematics(Q_NOM, 1, mc) + e
    J = leg_jacobian(Q_NOM, 1, mc)
    tau = swing_torque(Q_NOM, np.zeros(3), p, np.zeros(3), np.array([300.0, 350.0, 400.0]), 0.0, 1, mc)
    np.testing.assert_allclose(tau, J.T @ (np.array([300.0, 350.0, 400.0]) * e))


def test_swing_torque_random_matches_composition(mc, rng):
    for _ in range(10):
        leg = int(rng.integers(4))
        q, qd = Q_NOM + rng.normal(0, 0.3, 3), rng.normal(size=3)
        p, v = rng.normal(0, 0.1, 3), rng.normal(size=3)
        J = leg_jacobian(q, leg, mc)
        expect = J.T @ (350 * (p - leg_forward_kinematics(q, leg, mc)) + 10 * (v - J @ qd))
        np.testing.assert_allclose(swing_torque(q, qd, p, v, 350.0, 10.0, leg, mc), expect)


def test_swing_torque_linear_in_error(mc):
    p0 = leg_forward_kinematics(Q_NOM, 2, mc)
    e1, e2 = np.array([0.01, 0, 0.02]), np.array([-0.03, 0.01, 0.0])
    f = lambda e: swing_torque(Q_NOM, np.zeros(3), p0 + e, np.zeros(3), 350.0, 10.0, 2, mc)
    np.testing.assert_allclose(f(e1 + 2 * e2), f(e1) + 2 * f(e2), atol=1e-12)


def test_stance_torque_zero_force(mc):
    np.testing.assert_array_equal(stance_torque(Q_NOM, np.zeros(3), np.zeros(3), 0, mc), 0.0)


def test_stance_torque_vertical_load_knee_moment_arm(mc):
    F = 22.0
    tau = stance_torque(Q_NOM, np.array([0, 0, F]), np.zeros(3), 0, mc)
    l3 = mc.link_lengths[2]
    # the foot pushes down with F; the lower link's horizontal lever arm is l3 sin(q1 + q2)
    assert tau[2] == pytest.approx(-F * l3 * np.sin(Q_NOM[1] + Q_NOM[2]))


def test_stance_torque_yaw_covariance(mc, rng):
    lam = rng.normal(size=3)
    euler = np.array([0.0, 0.0, np.pi / 2])
    R = rotation_matrix(euler)
    np.testing.assert_allclose(
        stance_torque(Q_NOM, R @ lam, euler, 3, mc), stance_torque(Q_NOM, lam, np.zeros(3), 3, mc), atol=1e-12
    )


def test_stance_torque_odd_in_force(mc, rng):
    lam, e = rng.normal(size=3), rng.normal(0, 0.2, 3)
    np.testing.assert_allclose(stance_torque(Q_NOM, -lam, e, 1, mc), -stance_torque(Q_NOM, lam, e, 1, mc))
