"""Two-link planar manipulator and its feedback-linearized tracking scenario.

Joint dynamics ``M(g) g_dd + S(g, g_d) g_d = tau`` (no gravity). Feedback
linearization turns the end effector into a double integrator ``p_dd = u``,
which is the LTI plant the estimators and the detector run on.
"""
from dataclasses import dataclass

import numpy as np

from .mathkit import ConvergenceError
from .plant import PlantModel, discretize_zoh


class SingularityError(ValueError):
    """The arm Jacobian is (nearly) singular."""


@dataclass(frozen=True)
class RobotParams:
    l1: float = 0.6
    l2: float = 0.4
    r1: float = 0.3
    r2: float = 0.2
    eta1: float = 6.0
    eta2: float = 4.0
    I1: float = 1.0
    I2: float = 1.0

    def __post_init__(self):
        for name in ("l1", "l2", "r1", "r2", "eta1", "eta2", "I1", "I2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"robot parameter {name} must be positive")

    @property
    def a(self):
        return self.I1 + self.I2 + self.eta1 * self.r1 ** 2 + self.eta2 * (self.l1 ** 2 + self.r2 ** 2)

    @property
    def b(self):
        return self.eta2 * self.l1 * self.r2

    @property
    def delta(self):
        return self.I2 + self.eta2 * self.r2 ** 2


@dataclass(frozen=True)
class ArmState:
    g: np.ndarray
    g_dot: np.ndarray


def mass_matrix(g, params):
    # lower-left entry carries the same b*cos(g2) as the upper-right (symmetry)
    c = params.b * np.cos(g[1])
    return np.array([[params.a + c, params.delta + c],
                     [params.delta + c, params.delta]])


def coriolis_matrix(g, g_dot, params):
    s = params.b * np.sin(g[1])
    return np.array([[-s * g_dot[1], -s * (g_dot[0] + g_dot[1])],
                     [s * g_dot[0], 0.0]])


def forward_kinematics(g, params):
    g1, g12 = g[0], g[0] + g[1]
    return np.array([params.l1 * np.cos(g1) + params.l2 * np.cos(g12),
                     params.l1 * np.sin(g1) + params.l2 * np.sin(g12)])


def jacobian(g, params):
    g1, g12 = g[0], g[0] + g[1]
    s1, c1, s12, c12 = np.sin(g1), np.cos(g1), np.sin(g12), np.cos(g12)
    return np.array([[-params.l1 * s1 - params.l2 * s12, -params.l2 * s12],
                     [params.l1 * c1 + params.l2 * c12, params.l2 * c12]])


def jacobian_dot(g, g_dot, params):
    g1, g12 = g[0], g[0] + g[1]
    w1, w12 = g_dot[0], g_dot[0] + g_dot[1]
    s1, c1, s12, c12 = np.sin(g1), np.cos(g1), np.sin(g12), np.cos(g12)
    return np.array([[-params.l1 * c1 * w1 - params.l2 * c12 * w12, -params.l2 * c12 * w12],
                     [-params.l1 * s1 * w1 - params.l2 * s12 * w12, -params.l2 * s12 * w12]])


def end_effector_velocity(state, params):
    return jacobian(state.g, params) @ state.g_dot


def joint_acceleration(state, tau, params):
    """Solve the joint dynamics for ``g_dd``."""
    M = mass_matrix(state.g, params)
    S = coriolis_matrix(state.g, state.g_dot, params)
    return np.linalg.solve(M, np.asarray(tau, dtype=float) - S @ state.g_dot)


def feedback_linearize(state, u_task, params, min_det=1e-6):
    """Joint torque that makes the end effector accelerate at ``u_task``."""
    H = jacobian(state.g, params)
    if abs(np.linalg.det(H)) <= min_det:
        raise SingularityError(f"arm Jacobian is singular at g = {np.asarray(state.g)}")
    a_g = np.linalg.solve(H, np.asarray(u_task, dtype=float) - jacobian_dot(state.g, state.g_dot, params) @ state.g_dot)
    M = mass_matrix(state.g, params)
    S = coriolis_matrix(state.g, state.g_dot, params)
    return M @ a_g + S @ state.g_dot


def inverse_kinematics(p, params, elbow_up=True):
    """Joint angles reaching ``p``; ``elbow_up`` picks the positive-g2 branch."""
    x, y = p
    c2 = (x * x + y * y - params.l1 ** 2 - params.l2 ** 2) / (2 * params.l1 * params.l2)
    if abs(c2) > 1.0:
        raise ValueError(f"point {p} is out of reach")
    g2 = np.arccos(c2) * (1.0 if elbow_up else -1.0)
    g1 = np.arctan2(y, x) - np.arctan2(params.l2 * np.sin(g2), params.l1 + params.l2 * np.cos(g2))
    return np.array([g1, g2])


def kinetic_energy(state, params):
    return 0.5 * float(state.g_dot @ mass_matrix(state.g, params) @ state.g_dot)


def power_imbalance(state, params):
    """``dE/dt`` under zero torque: ``g_d^T (M_dot / 2 - S) g_d``.

    Zero for a Coriolis matrix satisfying the skew-symmetry property; with
    the matrices used here it is ``b sin(g2) g1_d^2 g2_d / 2``.
    """
    s = params.b * np.sin(state.g[1])
    g2d = state.g_dot[1]
    M_dot = -s * g2d * np.array([[1.0, 1.0], [1.0, 0.0]])
    S = coriolis_matrix(state.g, state.g_dot, params)
    return float(state.g_dot @ (0.5 * M_dot - S) @ state.g_dot)


def rk4_step(state, tau, params, h):
    """One RK4 step of the joint dynamics with the torque held constant."""
    def f(g, gd):
        return gd, joint_acceleration(ArmState(g, gd), tau, params)

    g, gd = np.asarray(state.g, dtype=float), np.asarray(state.g_dot, dtype=float)
    k1g, k1v = f(g, gd)
    k2g, k2v = f(g + 0.5 * h * k1g, gd + 0.5 * h * k1v)
    k3g, k3v = f(g + 0.5 * h * k2g, gd + 0.5 * h * k2v)
    k4g, k4v = f(g + h * k3g, gd + h * k3v)
    return ArmState(g + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g),
                    gd + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


def probe_task_acceleration(state, tau, params, h=1e-6):
    """End-effector acceleration by central differences of the simulated velocity."""
    fwd = rk4_step(state, tau, params, h)
    bwd = rk4_step(state, tau, params, -h)
    return (end_effector_velocity(fwd, params) - end_effector_velocity(bwd, params)) / (2 * h)


# -- tracking scenario -------------------------------------------------------

@dataclass(frozen=True)
class HalfCircle:
    """Half circle traversed over ``duration`` seconds, then back, periodically.

    The arc angle follows ``pi (1 - cos(pi t / T)) / 2`` so velocity vanishes at
    both ends and the reference can be repeated for long runs.
    """

    center: tuple = (0.0, 0.5)
    radius: float = 0.3
    duration: float = 10.0

    def angle(self, t):
        w = np.pi / self.duration
        return 0.5 * np.pi * (1 - np.cos(w * t)), 0.5 * np.pi * w * np.sin(w * t)

    def position(self, t):
        th, _ = self.angle(t)
        return np.array(self.center) + self.radius * np.array([np.cos(th), np.sin(th)])

    def velocity(self, t):
        th, th_d = self.angle(t)
        return self.radius * th_d * np.array([-np.sin(th), np.cos(th)])


@dataclass(frozen=True)
class Reference:
    """Discrete reference consistent with the sampled model.

    ``x[k+1] = A x[k] + B u_ff[k]`` holds exactly, so regulating ``x - x_ref``
    with the LQG loop reproduces tracking without approximation.
    """

    x: np.ndarray
    u_ff: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def state(self, k):
        return self.x[k % len(self)]

    def feedforward(self, k):
        return self.u_ff[k % len(self)]


def build_reference(A, B, curve, dt):
    """Sample one period of ``curve`` and propagate it through ``(A, B)``.

    The feedforward is the average acceleration over each sample interval,
    which matches the curve's velocity exactly at every sample.
    """
    n_per = int(round(2 * curve.duration / dt))
    t = np.arange(n_per + 1) * dt
    vel = np.array([curve.velocity(tk) for tk in t])
    u_ff = (vel[1:] - vel[:-1]) / dt
    x = np.zeros((n_per, 4))
    x[0] = np.r_[curve.position(0.0), vel[0]]
    for k in range(n_per - 1):
        x[k + 1] = A @ x[k] + B @ u_ff[k]
    return Reference(x, u_ff)


@dataclass(frozen=True)
class NoiseConfig:
    Sigma_x: float = 1e-4
    Sigma_w: float = 1e-4
    Sigma_v: float = 1e-4
    Sigma_d: float = 4e-4


@dataclass(frozen=True)
class ManipulatorScenario:
    model: PlantModel
    reference: Reference
    params: RobotParams
    curve: HalfCircle


def double_integrator(dt):
    """Planar double integrator in end-effector coordinates, state ``[p, p_dot]``."""
    A_c = np.block([[np.zeros((2, 2)), np.eye(2)], [np.zeros((2, 2)), np.zeros((2, 2))]])
    B_c = np.vstack([np.zeros((2, 2)), np.eye(2)])
    return discretize_zoh(A_c, B_c, dt)


def build_scenario(params=None, dt=0.01, noise=None, curve=None):
    """Assemble the feedback-linearized arm as a 4-state LTI plant.

    ``y`` observes the full state, ``z`` only the end-effector position.
    Scalar noise levels are multiplied by identity matrices.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    params = params or RobotParams()
    noise = noise or NoiseConfig()
    curve = curve or HalfCircle()
    A, B = double_integrator(dt)
    C = np.eye(4)
    D = np.hstack([np.eye(2), np.zeros((2, 2))])
    model = PlantModel(A, B, C, D,
                       Sigma_x=noise.Sigma_x * np.eye(4), Sigma_w=noise.Sigma_w * np.eye(4),
                       Sigma_v=noise.Sigma_v * np.eye(4), Sigma_d=noise.Sigma_d * np.eye(2), dt=dt)
    ref = build_reference(A, B, curve, dt)
    for k in range(0, len(ref), 10):
        try:
            g = inverse_kinematics(ref.x[k, :2], params)
        except ValueError as exc:
            raise ConvergenceError(f"reference leaves the workspace: {exc}") from exc
        if abs(np.linalg.det(jacobian(g, params))) < 1e-3:
            raise SingularityError("reference passes too close to a singular pose")
    return ManipulatorScenario(model, ref, params, curve)


def joint_trajectory(positions, params):
    """Joint angles along a sequence of end-effector positions (elbow up)."""
    return np.array([inverse_kinematics(p, params) for p in positions])
