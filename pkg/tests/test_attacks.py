import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twin_sentinel.attacks import (
    NAIVE,
    STEALTHY,
    EllipsoidProblem,
    SenderKind,
    displacement_bound_check,
    produce_message,
    solve_ellipsoid_argmax,
)
from twin_sentinel.detector import DETRIMENTAL, DetectorConfig, detect
from twin_sentinel.estimation import ResidualModel
from twin_sentinel.mathkit import make_rng


def problem(Sigma, center, c, rho):
    Sigma = np.asarray(Sigma, dtype=float)
    return EllipsoidProblem(np.asarray(center, float), np.linalg.inv(Sigma), rho, np.asarray(c, float))


def boundary_samples(Sigma, center, rho, n, rng):
    # uniform directions mapped onto the ellipsoid surface
    y = rng.standard_normal((n, len(center)))
    y *= np.sqrt(rho) / np.linalg.norm(y, axis=1, keepdims=True)
    S = np.linalg.cholesky(Sigma)
    return center + y @ S.T


def test_circle_example():
    xi = solve_ellipsoid_argmax(problem(np.eye(2), [0, 0], [1, 0], 4.0))
    np.testing.assert_allclose(xi, [-2, 0], atol=1e-8)


def test_tie_break_when_center_coincides():
    xi = solve_ellipsoid_argmax(problem(np.eye(2), [1, 1], [1, 1], 4.0))
    assert np.linalg.norm(xi - [1, 1]) == pytest.approx(2.0)
    xi = solve_ellipsoid_argmax(problem(np.diag([1.0, 4.0]), [0, 0], [0, 0], 1.0))
    np.testing.assert_allclose(xi, [0, 2], atol=1e-12)


def test_grid_oracle_2d():
    Sigma = np.diag([4.0, 1.0])
    p = problem(Sigma, [0, 0], [0, 0.5], 1.0)
    xi = solve_ellipsoid_argmax(p)
    t = np.linspace(0, 2 * np.pi, 100_000, endpoint=False)
    grid = np.stack([2 * np.cos(t), np.sin(t)], axis=1)
    best = np.max(np.sum((grid - [0, 0.5]) ** 2, axis=1))
    assert p.objective(xi) == pytest.approx(best, abs=1e-3)
    assert p.objective(xi) >= best - 1e-9


def test_displacement_bound_equality_cases():
    xi = solve_ellipsoid_argmax(problem(np.eye(2), [0, 0], [1, 0], 4.0))
    assert displacement_bound_check(xi, [0, 0], np.eye(2), 4.0)
    assert np.sum(xi ** 2) == pytest.approx(4.0)
    Sigma = np.diag([4.0, 1.0])
    xi = solve_ellipsoid_argmax(problem(Sigma, [0, 0], [-0.1, 0], 1.0))
    assert np.sum(xi ** 2) == pytest.approx(4.0)
    assert displacement_bound_check(xi, [0, 0], Sigma, 1.0)


def random_spd(rng, n):
    G = rng.standard_normal((n, n))
    return G @ G.T + 0.05 * np.eye(n)


def test_random_trials_respect_bound_and_boundary():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = rng.integers(2, 5)
        Sigma = random_spd(rng, n)
        center, c = rng.standard_normal((2, n))
        rho = rng.uniform(0.1, 20)
        p = problem(Sigma, center, c, rho)
        xi = solve_ellipsoid_argmax(p)
        assert displacement_bound_check(xi, center, Sigma, rho)
        assert abs(p.constraint(xi) - rho) <= 1e-8 * rho


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([2, 3]))
def test_beats_random_boundary_samples(seed, n):
    rng = np.random.default_rng(seed)
    Sigma = random_spd(rng, n)
    center, c = rng.standard_normal((2, n))
    p = problem(Sigma, center, c, 2.0)
    xi = solve_ellipsoid_argmax(p)
    best = p.objective(boundary_samples(Sigma, center, 2.0, 100_000, rng)).max()
    assert p.objective(xi) >= (1 - 1e-4) * best


@pytest.mark.parametrize("s", [0.25, 4.0])
def test_scaling_covariance(s):
    rng = np.random.default_rng(5)
    Sigma = random_spd(rng, 3)
    center = rng.standard_normal(3)
    # move the objective center with the scale so the whitened geometry is fixed
    c = center + rng.standard_normal(3)
    base = solve_ellipsoid_argmax(problem(Sigma, center, c, 1.0))
    scaled = solve_ellipsoid_argmax(problem(s * Sigma, center, center + np.sqrt(s) * (c - center), 1.0))
    assert np.sum((scaled - center) ** 2) == pytest.approx(s * np.sum((base - center) ** 2), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_stealthy_never_detrimental(seed):
    rng = np.random.default_rng(seed)
    cfg = DetectorConfig(9.49, 18.47, 4, ResidualModel(random_spd(rng, 4)))
    x_hat, x_twin = 3 * rng.standard_normal((2, 4))
    m = produce_message(SenderKind(STEALTHY), x_hat, x_twin, cfg, rng)
    assert detect(x_twin, m, cfg).q != DETRIMENTAL


def test_stealthy_inner_frequency():
    rng = make_rng(4)
    cfg = DetectorConfig(9.49, 18.47, 4, ResidualModel(np.diag([1.0, 2.0, 0.5, 3.0])))
    qs = [detect(np.zeros(4), produce_message(SenderKind(STEALTHY), np.ones(4), np.zeros(4), cfg, rng), cfg).q
          for _ in range(10_000)]
    assert np.mean(np.array(qs) == 0) == pytest.approx(0.95, abs=0.01)
    assert max(qs) <= 1


def test_benign_and_naive_messages():
    x_hat = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(produce_message(SenderKind(), x_hat, None, None), x_hat)
    naive = SenderKind(NAIVE, [5.0, 0, 0, 0])
    np.testing.assert_array_equal(produce_message(naive, np.zeros(4), None, None), [5, 0, 0, 0])


def test_sender_kind_validation():
    with pytest.raises(ValueError):
        SenderKind("loud")
    with pytest.raises(ValueError):
        SenderKind(NAIVE)
    with pytest.raises(ValueError):
        SenderKind(NAIVE, [np.inf])
    with pytest.raises(ValueError):
        produce_message(SenderKind(STEALTHY), np.zeros(2), np.zeros(2), DetectorConfig(1.0, 2.0, 2))
