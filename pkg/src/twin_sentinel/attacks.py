"""Message-producing senders: benign, naive bias injection, stealthy attacker.

The stealthy attacker keeps its message on the boundary of a chi-square
ellipsoid around the twin estimate while pushing it as far as possible from
its own (true) Kalman estimate.
"""
from dataclasses import dataclass

import numpy as np

from .mathkit import sym_eigen

BENIGN, NAIVE, STEALTHY = "benign", "naive", "stealthy"


@dataclass(frozen=True)
class SenderKind:
    variant: str = BENIGN
    bias: np.ndarray = None

    def __post_init__(self):
        if self.variant not in (BENIGN, NAIVE, STEALTHY):
            raise ValueError(f"unknown sender variant {self.variant!r}")
        if self.variant == NAIVE:
            if self.bias is None:
                raise ValueError("naive sender needs a bias vector")
            bias = np.atleast_1d(np.asarray(self.bias, dtype=float))
            if not np.all(np.isfinite(bias)):
                raise ValueError("naive bias must be finite")
            object.__setattr__(self, "bias", bias)

    @property
    def malicious(self):
        return self.variant != BENIGN


@dataclass(frozen=True)
class EllipsoidProblem:
    """maximize |m - c|^2  s.t.  (m - center)^T shape (m - center) = radius2."""

    center: np.ndarray
    shape: np.ndarray
    radius2: float
    objective_center: np.ndarray

    def objective(self, m):
        d = np.asarray(m) - self.objective_center
        return float(np.sum(d * d, axis=-1)) if np.ndim(m) == 1 else np.sum(d * d, axis=-1)

    def constraint(self, m):
        d = np.asarray(m) - self.center
        return float(d @ self.shape @ d)


def _secular_root(lam, b, r2, tol=1e-10, max_iter=200):
    # largest mu > lam[0] with sum b_i^2 / (mu - lam_i)^2 = r2; g is decreasing there
    def g(mu):
        return np.sum((b / (mu - lam)) ** 2) - r2

    lo = lam[0]
    hi = lam[0] + np.linalg.norm(b) / np.sqrt(r2)
    mu = hi
    for _ in range(max_iter):
        mu = 0.5 * (lo + hi)
        if mu <= lo or mu >= hi:
            break
        val = g(mu)
        if abs(val) <= tol * r2:
            break
        if val > 0:
            lo = mu
        else:
            hi = mu
    return mu


def solve_ellipsoid_argmax(p, tol=1e-10, max_iter=200):
    """Farthest point from ``p.objective_center`` on the ellipsoid boundary.

    Works in whitened coordinates ``y = S^{-1}(m - center)`` with
    ``S = shape^{-1/2}``, where the problem becomes the maximization of the
    convex quadratic ``y^T Sigma y - 2 b^T y`` over the sphere ``|y|^2 =
    radius2``. The multiplier is found by bisection on the secular equation;
    the degenerate case with no gradient along the top eigenspace fills the
    remaining radius along the leading eigenvector (positive first nonzero
    component).
    """
    if not p.radius2 > 0:
        raise ValueError("ellipsoid radius must be positive")
    shape = np.asarray(p.shape, dtype=float)
    if sym_eigen(shape).lam_min <= 0:
        raise ValueError("ellipsoid shape must be positive definite")
    Sigma = np.linalg.inv(shape)
    eig = sym_eigen(0.5 * (Sigma + Sigma.T))
    lam, V = eig.eigenvalues, eig.eigenvectors
    S = V @ np.diag(np.sqrt(lam)) @ V.T

    g = np.asarray(p.objective_center, dtype=float) - np.asarray(p.center, dtype=float)
    b = V.T @ (S @ g)  # linear term in the eigenbasis
    r2 = float(p.radius2)

    top = np.abs(lam - lam[0]) <= 1e-12 * max(1.0, abs(lam[0]))
    b_top = np.linalg.norm(b[top])
    hard = False
    if b_top <= 1e-14 * max(1.0, np.linalg.norm(b)):
        rest = ~top
        y_rest = np.zeros_like(b)
        y_rest[rest] = b[rest] / (lam[rest] - lam[0])
        if float(y_rest @ y_rest) <= r2:
            hard = True
            t = np.sqrt(r2 - float(y_rest @ y_rest))
            y_bar = y_rest
            y_bar[np.flatnonzero(top)[0]] = t
    if not hard:
        mu = _secular_root(lam, b, r2, tol=tol, max_iter=max_iter)
        y_bar = b / (lam - mu)
        # put the point exactly on the sphere
        y_bar *= np.sqrt(r2) / np.linalg.norm(y_bar)

    y = V @ y_bar
    xi = np.asarray(p.center, dtype=float) + S @ y
    # never let roundoff push the point outside the ellipsoid
    c = p.constraint(xi)
    if c > r2:
        xi = p.center + (xi - p.center) * np.sqrt(r2 / c) * (1.0 - 1e-15)
    return xi


def displacement_bound_check(xi, x_twin, Sigma_phi, rho):
    """rho * lambda_max(Sigma_phi) >= |x_twin - xi|^2 (with roundoff slack)."""
    d = np.asarray(x_twin, dtype=float) - np.asarray(xi, dtype=float)
    bound = rho * sym_eigen(Sigma_phi).lam_max
    return bool(float(d @ d) <= bound * (1.0 + 1e-10))


class Sender:
    """Produces the message for each step; owns its random stream."""

    def __init__(self, kind, rng=None):
        self.kind = kind
        self.rng = rng

    def produce(self, x_hat, x_twin, cfg):
        return produce_message(self.kind, x_hat, x_twin, cfg, self.rng)


def produce_message(kind, x_hat, x_twin, cfg, rng=None):
    """Message sent to the twin.

    ``cfg`` is the detector configuration (thresholds and calibrated residual);
    only the stealthy sender reads it.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if kind.variant == BENIGN:
        return x_hat.copy()
    if kind.variant == NAIVE:
        return x_hat + kind.bias
    if cfg is None or cfg.residual is None or not cfg.residual.usable:
        raise ValueError("stealthy sender needs a calibrated residual covariance")
    inner = rng.random() < cfg.cdf_rho1
    rho = cfg.rho1 if inner else cfg.rho2
    problem = EllipsoidProblem(np.asarray(x_twin, dtype=float), cfg.residual.Sigma_phi_inv, rho, x_hat)
    return solve_ellipsoid_argmax(problem)
