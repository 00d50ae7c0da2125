"""Physical and digital-twin Kalman filters and the residual covariance.

Both filters run the one-step predictor

    x_{k+1} = A_K x_k + L_k (obs_k - Obs x_k)
    L_k     = A_K P_k Obs^T (Sigma_noise + Obs P_k Obs^T)^{-1}
    P_{k+1} = Sigma_w + (A_K - L_k Obs) P_k A_K^T

with ``A_K = A + B K``. The physical filter reads ``y`` through ``C``; the twin
reads ``z`` through ``D``. ``phi = x_twin - x_hat`` is the detector residual.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .mathkit import (
    ConvergenceError,
    as_sym_matrix,
    gaussian_factor,
    is_positive_definite,
    solve_discrete_lyapunov,
    symmetrize,
)


class SingularInnovationError(np.linalg.LinAlgError):
    pass


def kalman_gain(A_K, Obs, Sigma_noise, P):
    S = Sigma_noise + Obs @ P @ Obs.T
    try:
        # L = A_K P Obs^T S^{-1}, solved from the transposed system
        return np.linalg.solve(S.T, (A_K @ P @ Obs.T).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc


def covariance_update(A_K, Obs, Sigma_noise, Sigma_w, P, L):
    # Joseph form; equals Sigma_w + (A_K - L Obs) P A_K^T at the optimal gain
    # but stays PSD under roundoff.
    F = A_K - L @ Obs
    return symmetrize(F @ P @ F.T + L @ Sigma_noise @ L.T + Sigma_w)


@dataclass(eq=False)
class KalmanFilter:
    """One predictor-form filter.

    ``L`` is always the gain computed from the current ``P``; a frozen filter
    keeps ``L`` and ``P`` fixed and only propagates the estimate.
    """

    A_K: np.ndarray
    Obs: np.ndarray
    Sigma_noise: np.ndarray
    Sigma_w: np.ndarray
    P: np.ndarray
    x_est: np.ndarray
    L: np.ndarray = None
    frozen: bool = False
    last_delta: float = field(default=np.inf)

    def __post_init__(self):
        self.A_K = np.atleast_2d(np.asarray(self.A_K, dtype=float))
        self.Obs = np.atleast_2d(np.asarray(self.Obs, dtype=float))
        self.Sigma_noise = as_sym_matrix(self.Sigma_noise, "Sigma_noise")
        self.Sigma_w = as_sym_matrix(self.Sigma_w, "Sigma_w")
        self.P = as_sym_matrix(self.P, "P")
        self.x_est = np.atleast_1d(np.asarray(self.x_est, dtype=float)).copy()
        if self.L is None:
            self.L = kalman_gain(self.A_K, self.Obs, self.Sigma_noise, self.P)
        else:
            self.L = np.atleast_2d(np.asarray(self.L, dtype=float))

    @classmethod
    def physical(cls, model, K):
        """Filter on the physical channel, started at x = 0, P = Sigma_x."""
        A_K = model.A + model.B @ K
        return cls(A_K, model.C, model.Sigma_v, model.Sigma_w, model.Sigma_x, np.zeros(model.n_x))

    @classmethod
    def twin(cls, model, K):
        """Digital-twin filter on the secure channel."""
        A_K = model.A + model.B @ K
        return cls(A_K, model.D, model.Sigma_d, model.Sigma_w, model.Sigma_x, np.zeros(model.n_x))

    def step(self, obs):
        """Consume one observation in place and return ``self``."""
        obs = np.atleast_1d(obs)
        if obs.shape[0] != self.Obs.shape[0]:
            raise ValueError(f"observation has length {obs.shape[0]}, expected {self.Obs.shape[0]}")
        self.x_est = self.A_K @ self.x_est + self.L @ (obs - self.Obs @ self.x_est)
        if not self.frozen:
            P_next = covariance_update(self.A_K, self.Obs, self.Sigma_noise, self.Sigma_w, self.P, self.L)
            self.last_delta = float(np.max(np.abs(P_next - self.P)))
            self.P = P_next
            self.L = kalman_gain(self.A_K, self.Obs, self.Sigma_noise, self.P)
        return self

    def copy(self):
        return replace(self, P=self.P.copy(), x_est=self.x_est.copy(), L=self.L.copy())

    def at_steady_state(self, tol=1e-12, max_iter=10_000):
        """Copy with ``P`` and ``L`` replaced by their fixed point, frozen."""
        P, _, _ = riccati_fixed_point(self, tol=tol, max_iter=max_iter)
        f = replace(self, P=P, x_est=self.x_est.copy(), L=None, frozen=True)
        return f


def filter_step(f, obs):
    """Functional form of :meth:`KalmanFilter.step`; ``f`` is left untouched."""
    return f.copy().step(obs)


def riccati_fixed_point(f, tol=1e-10, max_iter=10_000):
    """Iterate the filter covariance recursion from ``f.P``.

    Returns ``(P_star, iterations, residual)`` where the residual is the
    max-abs change of the last update. ``tol`` is absolute for covariances of
    order one and below, relative above.
    """
    P = f.P
    residual = np.inf
    for it in range(1, max_iter + 1):
        L = kalman_gain(f.A_K, f.Obs, f.Sigma_noise, P)
        P_next = covariance_update(f.A_K, f.Obs, f.Sigma_noise, f.Sigma_w, P, L)
        residual = float(np.max(np.abs(P_next - P)))
        P = P_next
        if not np.isfinite(residual):
            break
        if residual <= tol * max(1.0, float(np.max(np.abs(P)))):
            return P, it, residual
    raise ConvergenceError(f"filter covariance did not converge in {max_iter} iterations (residual {residual:.3e})")


def steady_state_covariance(f, tol=1e-10, max_iter=10_000):
    return riccati_fixed_point(f, tol, max_iter)[0]


@dataclass(frozen=True, eq=False)
class ResidualModel:
    """Covariance of ``phi = x_twin - x_hat`` with its cached inverse."""

    Sigma_phi: np.ndarray
    source: str = "analytic"
    regularization: float = 0.0
    Sigma_phi_inv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        S = as_sym_matrix(self.Sigma_phi, "Sigma_phi")
        object.__setattr__(self, "Sigma_phi", S)
        if self.usable and self.Sigma_phi_inv is None:
            object.__setattr__(self, "Sigma_phi_inv", symmetrize(np.linalg.inv(S)))

    @property
    def usable(self):
        """The detector needs a well-conditioned positive-definite Sigma_phi.

        A matrix no bigger than its own regularizer carries no information and
        is rejected too.
        """
        if not is_positive_definite(self.Sigma_phi, tol=10.0 * self.regularization):
            return False
        return np.linalg.cond(self.Sigma_phi) < 1e12

    @property
    def dim(self):
        return self.Sigma_phi.shape[0]

    def require_usable(self):
        if not self.usable:
            raise ValueError(f"residual covariance ({self.source}) is degenerate; the detector needs it positive definite")
        return self


def joint_error_dynamics(model, K, L_hat, L_tilde):
    """Stacked recursion ``[e_hat; e_tilde]+ = F [e_hat; e_tilde] + G [w; v; d]``.

    Derived for the benign loop ``u = K x_hat``; errors are estimate minus
    truth.
    """
    n = model.n_x
    A, B = model.A, model.B
    A_K = A + B @ K
    F = np.block([
        [A - L_hat @ model.C, np.zeros((n, n))],
        [-B @ K, A_K - L_tilde @ model.D],
    ])
    I = np.eye(n)
    G = np.block([
        [-I, L_hat, np.zeros((n, model.n_z))],
        [-I, np.zeros((n, model.n_y)), L_tilde],
    ])
    noise = np.zeros((n + model.n_y + model.n_z,) * 2)
    noise[:n, :n] = model.Sigma_w
    noise[n:n + model.n_y, n:n + model.n_y] = model.Sigma_v
    noise[n + model.n_y:, n + model.n_y:] = model.Sigma_d
    return F, G, noise


def residual_covariance_analytic(model, K, physical=None, twin=None, tol=1e-12):
    """Steady-state Sigma_phi from the stacked error Lyapunov equation.

    The two errors share the process noise, so their cross-covariance is
    carried through. ``physical`` / ``twin`` default to fresh filters built
    from ``model``; only their fixed-point gains are used.
    """
    n = model.n_x
    if not (model.Sigma_w.any() or model.Sigma_v.any() or model.Sigma_d.any()):
        # noiseless loop: both errors decay to zero
        return ResidualModel(np.zeros((n, n)), source="analytic")
    physical = physical if physical is not None else KalmanFilter.physical(model, K)
    twin = twin if twin is not None else KalmanFilter.twin(model, K)
    L_hat = physical.at_steady_state(tol).L
    L_tilde = twin.at_steady_state(tol).L
    F, G, noise = joint_error_dynamics(model, K, L_hat, L_tilde)
    J = solve_discrete_lyapunov(F, G @ noise @ G.T)
    T = np.hstack([-np.eye(n), np.eye(n)])
    return ResidualModel(symmetrize(T @ J @ T.T), source="analytic")


def residual_covariance_monte_carlo(model, K, steps, rng, burn_in=1000):
    """Empirical covariance of ``phi`` over a benign closed-loop run.

    The loop is the real one (plant, both filters, ``u = K x_hat``), not the
    stacked error recursion, so it checks the analytic route independently.
    Filters freeze once their covariance update stops moving.
    """
    from .plant import DivergenceError

    n = model.n_x
    phys = KalmanFilter.physical(model, K)
    twin = KalmanFilter.twin(model, K)
    Sw, Sv, Sd = (model.noise_factor(k) for k in ("Sigma_w", "Sigma_v", "Sigma_d"))
    x = gaussian_factor(model.Sigma_x) @ rng.standard_normal(n)
    A, B, C, D = model.A, model.B, model.C, model.D
    total = burn_in + steps
    acc = np.zeros((n, n))
    mean = np.zeros(n)
    chunk = 50_000
    k = 0
    while k < total:
        m = min(chunk, total - k)
        W = rng.standard_normal((m, n)) @ Sw.T
        Vn = rng.standard_normal((m, model.n_y)) @ Sv.T
        Dn = rng.standard_normal((m, model.n_z)) @ Sd.T
        for i in range(m):
            if k >= burn_in:
                phi = twin.x_est - phys.x_est
                acc += np.outer(phi, phi)
                mean += phi
            y = C @ x + Vn[i]
            z = D @ x + Dn[i]
            x = A @ x + B @ (K @ phys.x_est) + W[i]
            phys.step(y)
            twin.step(z)
            if not phys.frozen and phys.last_delta < 1e-14:
                phys.frozen = True
            if not twin.frozen and twin.last_delta < 1e-14:
                twin.frozen = True
            k += 1
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e9:
            raise DivergenceError(k, float(np.linalg.norm(x)))
    cov = acc / steps - np.outer(mean / steps, mean / steps)
    return ResidualModel(symmetrize(cov) + 1e-9 * np.eye(n), source="monte_carlo", regularization=1e-9)


def save_residual_model(path, residual, scenario="custom", seed=None):
    """Write Sigma_phi as a plain-text matrix with an identifying header."""
    header = f"Sigma_phi scenario={scenario} seed={seed} source={residual.source} dim={residual.dim}"
    np.savetxt(path, residual.Sigma_phi, fmt="%.17g", header=header)


def load_residual_model(path):
    with open(path) as fh:
        first = fh.readline()
    source = "analytic"
    for token in first.lstrip("# ").split():
        if token.startswith("source="):
            source = token.split("=", 1)[1]
    return ResidualModel(np.atleast_2d(np.loadtxt(path)), source=source)
