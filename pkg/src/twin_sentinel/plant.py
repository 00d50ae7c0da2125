"""Discrete-time LTI plant with a physical and a secure observation channel.

    x_{k+1} = A x_k + B u_k + w_k,    y_k = C x_k + v_k,    z_k = D x_k + d_k

``y`` feeds the physical Kalman filter; ``z`` is the integrity-protected
channel read only by the digital twin.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .mathkit import as_sym_matrix, gaussian_factor, is_psd, sample_gaussian

DIVERGENCE_LIMIT = 1e9


class DivergenceError(RuntimeError):
    """The simulated state left the finite operating envelope."""

    def __init__(self, k, norm):
        super().__init__(f"state diverged at step {k}: |x| = {norm:.3e}")
        self.k = k
        self.norm = norm


def _uncontrollable_modes(A, B, tol=1e-9):
    # PBH test on the modes with |lambda| >= 1
    n = A.shape[0]
    bad = []
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-12:
            continue
        M = np.hstack([lam * np.eye(n) - A, B])
        if np.linalg.matrix_rank(M, tol) < n:
            bad.append(lam)
    return bad


def is_stabilizable(A, B):
    A = np.atleast_2d(A)
    return not _uncontrollable_modes(A, np.atleast_2d(B))


def is_detectable(A, C):
    A = np.atleast_2d(A)
    return not _uncontrollable_modes(A.T, np.atleast_2d(C).T)


@dataclass(frozen=True, eq=False)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Sigma_x: np.ndarray
    Sigma_w: np.ndarray
    Sigma_v: np.ndarray
    Sigma_d: np.ndarray
    dt: float = 1.0
    _factors: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("Sigma_x", "Sigma_w", "Sigma_v", "Sigma_d"):
            M = as_sym_matrix(getattr(self, name), name)
            if not is_psd(M):
                raise ValueError(f"{name} is not positive semidefinite")
            object.__setattr__(self, name, M)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n or self.C.shape[1] != n or self.D.shape[1] != n:
            raise ValueError("B, C, D dimensions do not match A")
        expect = {"Sigma_x": n, "Sigma_w": n, "Sigma_v": self.C.shape[0], "Sigma_d": self.D.shape[0]}
        for name, dim in expect.items():
            if getattr(self, name).shape != (dim, dim):
                raise ValueError(f"{name} must be {dim}x{dim}")
        for name in ("Sigma_w", "Sigma_v", "Sigma_d"):
            self._factors[name] = gaussian_factor(getattr(self, name))

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_y(self):
        return self.C.shape[0]

    @property
    def n_z(self):
        return self.D.shape[0]

    def noise_factor(self, name):
        return self._factors[name]

    def check_structure(self, K=None):
        """Rank tests required before the loop is assembled.

        Returns a list of human-readable problems; empty means the model is
        usable.
        """
        problems = []
        if not is_stabilizable(self.A, self.B):
            problems.append("(A, B) is not stabilizable")
        if not is_detectable(self.A, self.C):
            problems.append("(A, C) is not detectable")
        if K is not None and not is_detectable(self.A + self.B @ K, self.D):
            problems.append("(A + BK, D) is not detectable")
        return problems


@dataclass(frozen=True)
class PlantState:
    k: int
    x: np.ndarray


def initial_state(model, rng, x0=None):
    """x0 ~ N(0, Sigma_x) unless a fixed x0 is supplied."""
    if x0 is None:
        x0 = sample_gaussian(np.zeros(model.n_x), model.Sigma_x, rng)
    return PlantState(0, np.asarray(x0, dtype=float).copy())


def discretize_zoh(A_c, B_c, dt):
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_c = np.atleast_2d(np.asarray(B_c, dtype=float))
    n, m = B_c.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A_c
    aug[:n, n:] = B_c
    E = scipy.linalg.expm(aug * dt)
    return E[:n, :n], E[:n, n:]


def step(model, state, u, rng):
    """Advance one sample.

    Observations are taken from the pre-transition state, so the filters
    that read ``y_k`` produce their estimate for step ``k + 1``.
    Returns ``(next_state, y, z)``.
    """
    x = state.x
    u = np.atleast_1d(np.asarray(u, dtype=float))
    w = model.noise_factor("Sigma_w") @ rng.standard_normal(model.n_x)
    v = model.noise_factor("Sigma_v") @ rng.standard_normal(model.n_y)
    d = model.noise_factor("Sigma_d") @ rng.standard_normal(model.n_z)
    y = model.C @ x + v
    z = model.D @ x + d
    x_next = model.A @ x + model.B @ u + w
    nrm = float(np.linalg.norm(x_next))
    if not np.isfinite(nrm) or nrm >= DIVERGENCE_LIMIT:
        raise DivergenceError(state.k + 1, nrm)
    return PlantState(state.k + 1, x_next), y, z
