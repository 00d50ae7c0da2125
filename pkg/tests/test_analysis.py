import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twin_sentinel.analysis import empirical_cost, mse_series, stage_costs, stealthy_loss_bound, windowed_mean
from twin_sentinel.runner import RunLog, bound_report, run_scenario


def test_zero_gain_gives_zero_bound():
    r = stealthy_loss_bound(np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(1), np.zeros((1, 2)), 1.0, 4.0, 2)
    assert r.alpha0 == 0.0 and r.alpha1 == 0.0 and r.bound == 0.0


def test_scalar_arithmetic():
    # R_K = 4, G = 7; hand-evaluated constants
    r = stealthy_loss_bound([[0.1]], [[0.5]], [[2.0]], [[3.0]], [[1.0]], [[2.0]], 1.0, 4.0, 1)
    a0, a1 = 12 / 7, 72 / 7
    F1 = math.erf(1 / math.sqrt(2))
    expect = a1 * 0.5 - a0 * 0.1 + a1 * 1.0 * 2.0 * F1 + a1 * 4.0 * 2.0 * (1 - F1)
    assert r.alpha0 == pytest.approx(a0, rel=1e-14)
    assert r.alpha1 == pytest.approx(a1, rel=1e-14)
    assert r.bound == pytest.approx(expect, rel=1e-12)


def test_alphas_reproducible(manip):
    r = bound_report(manip)
    lr, lg = np.linalg.eigvalsh(r.R_K), np.linalg.eigvalsh(r.G)
    rmin = lr[0] if lr[0] > 1e-12 * max(lr[-1], 1.0) else 0.0
    assert r.alpha0 == pytest.approx(rmin * (lg[0] - rmin) / lg[0], abs=1e-12)
    assert r.alpha1 == pytest.approx(lr[-1] * (lr[-1] + 2 * lg[-1]) / lg[-1], abs=1e-12)
    assert np.isfinite(r.bound) and r.bound > 0
    assert "bound on J1 - J0" in r.to_text()


def fake_log(x, u):
    n = len(x)
    log = RunLog.empty(n, x.shape[1], u.shape[1], "none")
    log.x_dev[:] = x
    log.u[:] = u
    return log


def test_stage_cost_examples():
    assert stage_costs(np.zeros((3, 4)), np.zeros((3, 2)), np.eye(4), np.eye(2)).sum() == 0.0
    assert stage_costs([[1.0, 0, 0, 0]], [[0.0, 0.0]], np.eye(4), np.eye(2))[0] == 1.0
    log = fake_log(np.array([[1.0, 0, 0, 0]]), np.zeros((1, 2)))
    assert empirical_cost(log, np.eye(4), np.eye(2), burn_in=0) == 1.0
    with pytest.raises(ValueError):
        empirical_cost(log, np.eye(4), np.eye(2), burn_in=1)


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_cost_invariant_to_order(seed):
    rng = np.random.default_rng(seed)
    x, u = rng.standard_normal((20, 4)), rng.standard_normal((20, 2))
    perm = np.r_[np.arange(5), 5 + rng.permutation(15)]
    a = empirical_cost(fake_log(x, u), np.eye(4), 2 * np.eye(2), burn_in=5)
    b = empirical_cost(fake_log(x[perm], u[perm]), np.eye(4), 2 * np.eye(2), burn_in=5)
    assert a == pytest.approx(b, rel=1e-12)


def test_mse_zero_for_exact_messages():
    x = np.random.default_rng(0).standard_normal((50, 4))
    log = fake_log(x, np.zeros((50, 2)))
    log.m[:] = x
    out = mse_series(log, window=10)
    assert not out["message"].any() and out["message_mean"] == 0.0
    assert len(out["message_windowed"]) == 5


def test_windowed_mean():
    np.testing.assert_allclose(windowed_mean(np.arange(6), 2), [0.5, 2.5, 4.5])
    np.testing.assert_allclose(windowed_mean([1.0, 3.0], 5), [2.0])


def test_benign_cost_stable_across_seeds(manip_cfg, manip):
    costs = [run_scenario(manip_cfg.with_overrides(seed=s, steps=6000), manip).reports["cost"] for s in (1, 2)]
    assert costs[0] == pytest.approx(costs[1], rel=0.10)


def test_physical_estimate_beats_twin(manip_cfg, manip):
    mse = run_scenario(manip_cfg, manip).reports["mse"]
    assert mse["xhat_mean"] < mse["xtilde_mean"]
