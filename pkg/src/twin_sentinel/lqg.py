"""Infinite-horizon LQR synthesis by Riccati value iteration."""
from dataclasses import dataclass

import numpy as np

from .mathkit import ConvergenceError, as_sym_matrix, is_positive_definite, spectral_radius, symmetrize


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_sym_matrix(self.Q, "Q")
        R = as_sym_matrix(self.R, "R")
        if not is_positive_definite(Q):
            raise ValueError("Q must be positive definite")
        if not is_positive_definite(R):
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class LqrSolution:
    V: np.ndarray
    K: np.ndarray
    iterations: int
    residual: float

    def closed_loop(self, A, B):
        return np.asarray(A) + np.asarray(B) @ self.K


def lqr_gain(A, B, R, V):
    """K = -(R + B^T V B)^{-1} B^T V A."""
    return -np.linalg.solve(R + B.T @ V @ B, B.T @ V @ A)


def riccati_step(A, B, Q, R, V):
    # V+ = Q + A^T V (A + B K) with K the gain at V, i.e. the usual
    # Q + A^T V A - A^T V B (R + B^T V B)^{-1} B^T V A
    K = lqr_gain(A, B, R, V)
    return symmetrize(Q + A.T @ V @ (A + B @ K))


def solve_lqr(A, B, weights, tol=1e-10, max_iter=10_000):
    """Iterate the discrete Riccati recursion from ``V0 = I`` to its fixed point.

    Parameters
    ----------
    A, B : array_like
        Plant matrices.
    weights : LqrWeights
        State and input cost.
    tol : float
        Stop once ``max|V_{k+1} - V_k| <= tol``.
    max_iter : int
        Iteration cap.

    Returns
    -------
    LqrSolution
        Converged value matrix, feedback gain ``K`` (so that ``u = K x``),
        iteration count and final residual.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q, R = weights.Q, weights.R
    V = np.eye(A.shape[0])
    residual = np.inf
    for it in range(1, max_iter + 1):
        V_next = riccati_step(A, B, Q, R, V)
        residual = float(np.max(np.abs(V_next - V)))
        V = V_next
        if not np.isfinite(residual) or residual > 1e12:
            raise ConvergenceError("Riccati iteration diverged; (A, B) is likely not stabilizable")
        if residual <= tol:
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} steps (residual {residual:.3e})")
    K = lqr_gain(A, B, R, V)
    rho = spectral_radius(A + B @ K)
    if rho >= 1.0:
        raise ConvergenceError(f"converged gain does not stabilize the plant (spectral radius {rho:.6g})")
    return LqrSolution(V=V, K=K, iterations=it, residual=residual)


def control_law(K, x_est):
    """u = K x_est."""
    return np.asarray(K) @ np.atleast_1d(np.asarray(x_est, dtype=float))
