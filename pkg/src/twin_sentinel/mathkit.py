"""Special functions and small matrix-analysis helpers.

Everything here is pure. Random draws always go through an explicit
``numpy.random.Generator``; nothing touches global random state.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

_GAMMA_EPS = 1e-12
_GAMMA_MAX_TERMS = 10_000
_TINY = 1e-300


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance."""


def _lower_gamma_series(a, x):
    # P(a, x) by the power series; good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise ConvergenceError(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a, x):
    # Q(a, x) by the modified Lentz continued fraction; good for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise ConvergenceError(f"incomplete gamma fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _lower_gamma_series(a, x))
    return max(0.0, 1.0 - _upper_gamma_cf(a, x))


def _chi_square_sf(x, dof):
    # upper tail, computed directly where 1 - cdf would cancel
    a, h = dof / 2.0, x / 2.0
    if h >= a + 1.0:
        return _upper_gamma_cf(a, h)
    return 1.0 - regularized_lower_gamma(a, h)


def _check_dof(dof):
    if int(dof) != dof or dof < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {dof}")


def chi_square_cdf(x, dof):
    """CDF of the chi-square distribution with ``dof`` degrees of freedom.

    >>> round(chi_square_cdf(2.0, 2), 5)
    0.63212
    """
    _check_dof(dof)
    if not x >= 0:
        raise ValueError(f"chi-square argument must be >= 0, got {x}")
    return regularized_lower_gamma(dof / 2.0, x / 2.0)


def chi_square_pdf(x, dof):
    _check_dof(dof)
    if x < 0:
        return 0.0
    k = dof / 2.0
    if x == 0:
        return 0.5 if dof == 2 else (math.inf if dof == 1 else 0.0)
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - math.lgamma(k))


def chi_square_quantile(p, dof, tol=1e-12, max_iter=200):
    """Inverse of :func:`chi_square_cdf` in its first argument.

    Bracketed bisection with Newton refinement; every Newton step that would
    leave the current bracket is replaced by a bisection step. ``tol`` is
    the relative size of the last Newton step. Above the median the residual
    is measured in the upper tail.
    """
    _check_dof(dof)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0

    lo, hi = 0.0, max(1.0, float(dof))
    while chi_square_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise ConvergenceError(f"could not bracket quantile p={p}")

    upper = p > 0.5
    q = 1.0 - p
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        # signed distance from the target, in whichever tail keeps precision
        err = (q - _chi_square_sf(x, dof)) if upper else (chi_square_cdf(x, dof) - p)
        if err == 0.0:
            return x
        if err > 0:
            hi = x
        else:
            lo = x
        dens = chi_square_pdf(x, dof)
        step_ok = dens > 0 and math.isfinite(dens)
        if step_ok:
            x_new = x - err / dens
            step_ok = lo < x_new < hi
            if step_ok and abs(x_new - x) <= tol * max(1.0, x):
                return x_new
        x = x_new if step_ok else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, hi):
            return x
    raise ConvergenceError(f"chi-square quantile did not converge (p={p}, dof={dof})")


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def is_symmetric(M, rtol=1e-12):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return bool(np.all(np.abs(M - M.T) <= rtol * scale))


def as_sym_matrix(M, name="matrix"):
    """Validate a square symmetric matrix and return it as a float array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not is_symmetric(M):
        raise ValueError(f"{name} is not symmetric")
    return symmetrize(M)


@dataclass(frozen=True)
class EigenDecomp:
    """Symmetric eigendecomposition with eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lam_max(self):
        return float(self.eigenvalues[0])

    @property
    def lam_min(self):
        return float(self.eigenvalues[-1])


def sym_eigen(M):
    """Eigendecomposition of a symmetric matrix, sorted descending.

    Ties keep their LAPACK order (stable sort) and every eigenvector is signed
    so its first nonzero component is positive, which makes the result
    reproducible.
    """
    M = as_sym_matrix(M)
    w, V = np.linalg.eigh(M)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return EigenDecomp(w, V)


def lam_max(M):
    return sym_eigen(M).lam_max


def lam_min(M):
    return sym_eigen(M).lam_min


def is_positive_definite(M, tol=1e-12):
    try:
        return sym_eigen(M).lam_min > tol
    except ValueError:
        return False


def is_psd(M, tol=1e-10):
    try:
        return sym_eigen(M).lam_min >= -tol
    except ValueError:
        return False


def spectral_radius(F):
    F = np.atleast_2d(np.asarray(F, dtype=float))
    return float(np.max(np.abs(np.linalg.eigvals(F)))) if F.size else 0.0


def solve_discrete_lyapunov(F, W):
    """Solve ``X = F X F^T + W`` for a stable ``F``.

    Backed by SciPy's direct solver; the result is symmetrized and the
    fixed-point residual is checked before returning.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    W = as_sym_matrix(W, "W")
    if F.shape != W.shape:
        raise ValueError(f"shape mismatch: F {F.shape} vs W {W.shape}")
    rho = spectral_radius(F)
    if rho >= 1.0 - 1e-9:
        raise ConvergenceError(f"Lyapunov equation has no stable solution (spectral radius {rho:.6g})")
    X = symmetrize(scipy.linalg.solve_discrete_lyapunov(F, W))
    resid = np.linalg.norm(F @ X @ F.T + W - X)
    if resid > 1e-9 * max(1.0, np.linalg.norm(X)):
        raise ConvergenceError(f"Lyapunov residual too large: {resid:.3e}")
    return X


def make_rng(seed):
    """Root random stream for one run."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def split_rng(rng, n):
    """Independent child streams, deterministic given the parent's seed."""
    return rng.spawn(n)


def gaussian_factor(cov):
    """Matrix ``S`` with ``S S^T = cov``, valid for singular PSD ``cov``."""
    cov = as_sym_matrix(cov, "covariance")
    w, V = np.linalg.eigh(cov)
    if w.size and w.min() < -1e-10:
        raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian(mean, cov, rng, size=None):
    """Draw from N(mean, cov). ``size`` adds leading sample dimensions."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    S = gaussian_factor(cov)
    if S.shape[0] != mean.shape[0]:
        raise ValueError("mean and covariance dimensions differ")
    shape = (mean.shape[0],) if size is None else tuple(np.atleast_1d(size)) + (mean.shape[0],)
    z = rng.standard_normal(shape)
    return mean + z @ S.T
