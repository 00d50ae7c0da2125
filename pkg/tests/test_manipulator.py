import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twin_sentinel import manipulator as arm
from twin_sentinel.lqg import LqrWeights, solve_lqr

P = arm.RobotParams()


def reachable_pose(rng):
    g1 = rng.uniform(-np.pi, np.pi)
    g2 = rng.choice([-1, 1]) * rng.uniform(0.2, np.pi - 0.2)
    return np.array([g1, g2]), rng.uniform(-1, 1, 2)


def test_inertia_constants():
    assert P.a == pytest.approx(4.14)
    assert P.b == pytest.approx(0.48)
    assert P.delta == pytest.approx(1.16)


def test_mass_matrix():
    M = arm.mass_matrix([0.3, np.pi / 2], P)
    assert M[0, 1] == pytest.approx(1.16) and M[1, 0] == pytest.approx(1.16)
    for g2 in np.linspace(-np.pi, np.pi, 721):
        M = arm.mass_matrix([0.0, g2], P)
        assert np.allclose(M, M.T) and np.linalg.det(M) > 0


def test_coriolis_examples():
    assert not arm.coriolis_matrix([0.2, 1.0], [0.0, 0.0], P).any()
    assert not arm.coriolis_matrix([0.2, 0.0], [1.0, 2.0], P).any()
    np.testing.assert_allclose(arm.coriolis_matrix([0.0, np.pi / 2], [1.0, 1.0], P),
                               [[-0.48, -0.96], [0.48, 0.0]])


def test_rest_needs_no_torque():
    s = arm.ArmState(np.array([0.4, 1.1]), np.zeros(2))
    np.testing.assert_allclose(arm.feedback_linearize(s, np.zeros(2), P), 0.0, atol=1e-15)


def test_straight_arm_is_singular():
    with pytest.raises(arm.SingularityError):
        arm.feedback_linearize(arm.ArmState(np.zeros(2), np.zeros(2)), [1.0, 0.0], P)
    assert np.linalg.det(arm.jacobian([0.7, 0.9], P)) == pytest.approx(P.l1 * P.l2 * np.sin(0.9))


def test_feedback_linearization_is_exact():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g, gd = reachable_pose(rng)
        s = arm.ArmState(g, gd)
        u = rng.uniform(-2, 2, 2)
        acc = arm.probe_task_acceleration(s, arm.feedback_linearize(s, u, P), P)
        np.testing.assert_allclose(acc, u, atol=1e-6)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    g, gd = reachable_pose(rng)
    h = 1e-6
    num = np.column_stack([(arm.forward_kinematics(g + h * e, P) - arm.forward_kinematics(g - h * e, P)) / (2 * h)
                           for e in np.eye(2)])
    np.testing.assert_allclose(arm.jacobian(g, P), num, atol=1e-8)
    dH = (arm.jacobian(g + h * gd, P) - arm.jacobian(g - h * gd, P)) / (2 * h)
    np.testing.assert_allclose(arm.jacobian_dot(g, gd, P), dH, atol=1e-8)


def test_energy_rate_matches_power_imbalance():
    # the Coriolis matrix as used here does not conserve energy; the probe
    # checks that the simulated drift is exactly the predicted imbalance
    rng = np.random.default_rng(5)
    for _ in range(10):
        g, gd = reachable_pose(rng)
        s = arm.ArmState(g, gd)
        h = 1e-5
        dE = (arm.kinetic_energy(arm.rk4_step(s, np.zeros(2), P, h), P)
              - arm.kinetic_energy(arm.rk4_step(s, np.zeros(2), P, -h), P)) / (2 * h)
        assert dE == pytest.approx(arm.power_imbalance(s, P), abs=1e-7)


@settings(max_examples=100)
@given(st.floats(-np.pi, np.pi), st.floats(0.05, np.pi - 0.05), st.booleans())
def test_inverse_kinematics_roundtrip(g1, g2, up):
    g = np.array([g1, g2 if up else -g2])
    p = arm.forward_kinematics(g, P)
    back = arm.inverse_kinematics(p, P, elbow_up=up)
    np.testing.assert_allclose(arm.forward_kinematics(back, P), p, atol=1e-9)


def test_out_of_reach():
    with pytest.raises(ValueError):
        arm.inverse_kinematics([2.0, 0.0], P)


def test_scenario_shapes_and_selector():
    sc = arm.build_scenario()
    m = sc.model
    assert (m.n_x, m.n_y, m.n_z, m.n_u) == (4, 4, 2, 2)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(m.D @ x, x[:2])
    with pytest.raises(ValueError):
        arm.build_scenario(dt=0.0)


def test_reference_is_exact_for_the_model():
    sc = arm.build_scenario()
    A, B = sc.model.A, sc.model.B
    ref = sc.reference
    for k in range(len(ref) - 1):
        np.testing.assert_allclose(ref.x[k + 1], A @ ref.x[k] + B @ ref.u_ff[k], atol=1e-12)
    # sampled positions stay on the curve
    t = np.arange(len(ref)) * sc.model.dt
    pos = np.array([sc.curve.position(tk) for tk in t])
    assert np.abs(ref.x[:, :2] - pos).max() < 1e-3


def test_noiseless_arm_tracks_half_circle():
    sc = arm.build_scenario()
    K = solve_lqr(sc.model.A, sc.model.B, LqrWeights(1e-3 * np.eye(4), np.eye(2))).K
    ref = sc.reference
    g = arm.inverse_kinematics(ref.x[0, :2], P)
    s = arm.ArmState(g, np.linalg.solve(arm.jacobian(g, P), ref.x[0, 2:]))
    worst = 0.0
    for k in range(1000):
        x = np.r_[arm.forward_kinematics(s.g, P), arm.end_effector_velocity(s, P)]
        worst = max(worst, np.linalg.norm(x[:2] - ref.state(k)[:2]))
        u = ref.feedforward(k) + K @ (x - ref.state(k))
        for _ in range(10):
            s = arm.rk4_step(s, arm.feedback_linearize(s, u, P), P, sc.model.dt / 10)
    assert worst < 1e-3
