import numpy as np
import pytest
from scipy.linalg import expm

from twin_sentinel.lqg import LqrWeights, solve_lqr
from twin_sentinel.mathkit import make_rng
from twin_sentinel.plant import DivergenceError, PlantModel, PlantState, discretize_zoh, is_detectable, step

from conftest import random_stable


def scalar(A=1.0, noise=0.0):
    z = np.array([[noise]])
    return PlantModel([[A]], [[1.0]], [[1.0]], [[1.0]], z, z, z, z)


def test_noiseless_scalar_step():
    nxt, y, z = step(scalar(), PlantState(0, np.array([2.0])), [-1.0], make_rng(0))
    assert nxt.x[0] == 1.0 and y[0] == 2.0 and z[0] == 2.0


def test_zero_everything_stays_zero():
    Z2 = np.zeros((2, 2))
    m = PlantModel(np.eye(2), np.eye(2), np.eye(2), np.eye(2), Z2, Z2, Z2, Z2)
    nxt, y, z = step(m, PlantState(0, np.zeros(2)), np.zeros(2), make_rng(0))
    assert not nxt.x.any() and not y.any() and not z.any()


def test_process_noise_covariance():
    rng = make_rng(3)
    m = PlantModel(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(2), np.eye(2),
                   np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    st = PlantState(0, np.zeros(2))
    xs = np.empty((100_000, 2))
    for k in range(len(xs)):
        st, _, _ = step(m, st, [0.0], rng)
        xs[k] = st.x
    assert np.abs(np.cov(xs.T) - np.eye(2)).max() < 0.05


def test_observation_noises_independent():
    rng = make_rng(4)
    m = PlantModel(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(2), np.eye(2),
                   np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), np.eye(2))
    st = PlantState(0, np.zeros(2))
    ys, zs = np.empty((100_000, 2)), np.empty((100_000, 2))
    for k in range(len(ys)):
        _, ys[k], zs[k] = step(m, st, [0.0], rng)
    cross = (ys - ys.mean(0)).T @ (zs - zs.mean(0)) / len(ys)
    assert np.abs(cross).max() < 0.02


def test_zoh_closed_forms():
    h = 0.1
    A, B = discretize_zoh(np.zeros((2, 2)), np.eye(2), h)
    np.testing.assert_allclose(A, np.eye(2))
    np.testing.assert_allclose(B, h * np.eye(2))
    A, B = discretize_zoh([[0, 1], [0, 0]], [[0], [1]], h)
    np.testing.assert_allclose(A, [[1, h], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(B, [[h * h / 2], [h]], atol=1e-15)


def test_zoh_semigroup(rng):
    Ac = random_stable(rng, 3) - 1.5 * np.eye(3)
    Bc = rng.standard_normal((3, 1))
    A1, _ = discretize_zoh(Ac, Bc, 0.2)
    A2, _ = discretize_zoh(Ac, Bc, 0.1)
    np.testing.assert_allclose(A1, A2 @ A2, atol=1e-9)
    np.testing.assert_allclose(A1, expm(0.2 * Ac), atol=1e-12)


def test_closed_loop_decays_without_noise(rng):
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    K = solve_lqr(A, B, LqrWeights(np.eye(3), np.eye(2))).K
    Z = np.zeros((3, 3))
    m = PlantModel(A, B, np.eye(3), np.eye(3), Z, Z, Z, Z)
    st = PlantState(0, np.ones(3))
    norms = []
    for _ in range(200):
        st, _, _ = step(m, st, K @ st.x, make_rng(0))
        norms.append(np.linalg.norm(st.x))
    assert norms[-1] < 1e-6 * norms[0]


def test_divergence_is_reported():
    st = PlantState(0, np.array([1.0]))
    with pytest.raises(DivergenceError):
        for _ in range(100):
            st, _, _ = step(scalar(A=10.0), st, [0.0], make_rng(0))


def test_structure_checks():
    m = PlantModel(np.diag([2.0, 0.5]), [[0.0], [1.0]], [[1.0, 0.0]], [[1.0, 0.0]],
                   np.eye(2), np.eye(2), [[1.0]], [[1.0]])
    assert "(A, B) is not stabilizable" in m.check_structure()
    assert not is_detectable(np.diag([2.0, 0.5]), np.array([[0.0, 1.0]]))


def test_rejects_bad_covariance():
    with pytest.raises(ValueError):
        PlantModel([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[-1.0]], [[1.0]], [[1.0]], [[1.0]])
