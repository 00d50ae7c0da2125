"""Post-run metrics: quadratic costs, the closed-form loss bound, MSE series."""
from dataclasses import dataclass

import numpy as np

from .mathkit import chi_square_cdf, sym_eigen, symmetrize


@dataclass(frozen=True)
class CostReport:
    J0: float
    J1: float
    steps: int
    burn_in: int

    @property
    def deltaJ(self):
        return self.J1 - self.J0


@dataclass(frozen=True)
class BoundReport:
    alpha0: float
    alpha1: float
    bound: float
    R_K: np.ndarray
    G: np.ndarray
    lam_max_sigma_phi: float
    terms: dict

    def to_text(self):
        lines = [
            "Loss bound for the stealthy attack",
            f"alpha0 = {self.alpha0:.10g}",
            f"alpha1 = {self.alpha1:.10g}",
            f"lambda_max(Sigma_phi) = {self.lam_max_sigma_phi:.10g}",
        ]
        lines += [f"{name} = {val:.10g}" for name, val in self.terms.items()]
        lines.append(f"bound on J1 - J0 = {self.bound:.10g}")
        return "\n".join(lines) + "\n"


def stage_costs(x, u, Q, R):
    """Per-step ``x^T Q x + u^T R u`` for stacked rows of states and inputs."""
    x = np.atleast_2d(x)
    u = np.atleast_2d(u)
    return np.einsum("ki,ij,kj->k", x, Q, x) + np.einsum("ki,ij,kj->k", u, R, u)


def empirical_cost(log, Q, R, burn_in=200):
    """Average stage cost over the steps after ``burn_in``.

    Uses the regulated (deviation) state and the feedback input that was
    actually applied.
    """
    n = len(log)
    if n <= burn_in:
        raise ValueError(f"run has {n} steps, nothing left after a burn-in of {burn_in}")
    return float(np.mean(stage_costs(log.x_dev[burn_in:], log.u[burn_in:], Q, R)))


def cost_report(benign_log, attack_log, Q, R, burn_in=200):
    return CostReport(empirical_cost(benign_log, Q, R, burn_in), empirical_cost(attack_log, Q, R, burn_in),
                      min(len(benign_log), len(attack_log)), burn_in)


def stealthy_loss_bound(P_hat, P_tilde, Sigma_phi, Q, R, K, rho1, rho2, n_x):
    """Closed-form upper bound on the cost increase under the stealthy attack.

    ``alpha0`` and ``alpha1`` come from the extreme eigenvalues of
    ``R_K = K^T R K`` and ``G = Q + R_K``.
    """
    K = np.atleast_2d(K)
    R_K = symmetrize(K.T @ np.atleast_2d(R) @ K)
    G = symmetrize(np.atleast_2d(Q) + R_K)
    eR, eG = sym_eigen(R_K), sym_eigen(G)
    rk_max = max(eR.lam_max, 0.0)
    # K^T R K is rank deficient whenever n_u < n_x; its zero eigenvalue comes back as roundoff
    rk_min = eR.lam_min if eR.lam_min > 1e-12 * max(rk_max, 1.0) else 0.0
    g_min, g_max = eG.lam_min, eG.lam_max
    alpha0 = rk_min * (g_min - rk_min) / g_min
    alpha1 = rk_max * (rk_max + 2.0 * g_max) / g_max
    lam_phi = sym_eigen(Sigma_phi).lam_max
    F1 = chi_square_cdf(rho1, n_x)
    terms = {
        "alpha1*tr(P_tilde)": alpha1 * float(np.trace(P_tilde)),
        "alpha0*tr(P_hat)": alpha0 * float(np.trace(P_hat)),
        "inner term": alpha1 * rho1 * lam_phi * F1,
        "band term": alpha1 * rho2 * lam_phi * (1.0 - F1),
    }
    bound = terms["alpha1*tr(P_tilde)"] - terms["alpha0*tr(P_hat)"] + terms["inner term"] + terms["band term"]
    return BoundReport(alpha0, alpha1, bound, R_K, G, lam_phi, terms)


def windowed_mean(series, window):
    series = np.asarray(series, dtype=float)
    n = len(series) // window
    if n == 0:
        return np.array([series.mean()]) if len(series) else np.array([])
    return series[: n * window].reshape(n, window).mean(axis=1)


def mse_series(log, window=100, burn_in=0):
    """Per-step squared errors (averaged over state components) against the true state.

    Returns a dict with the raw series for the physical estimate, the twin
    estimate and the message, their windowed averages and post-burn-in means.
    """
    if len(log) == 0:
        raise ValueError("empty run")
    out = {}
    for name, est in (("xhat", log.x_hat), ("xtilde", log.x_tilde), ("message", log.m)):
        err = np.mean((est - log.x_dev) ** 2, axis=1)
        out[name] = err
        out[name + "_windowed"] = windowed_mean(err, window)
        out[name + "_mean"] = float(err[burn_in:].mean()) if len(err) > burn_in else float(err.mean())
    return out
