"""Scenario assembly and the closed-loop simulation.

Per step ``k``:

1. the sender turns the physical estimate ``x_hat_k`` into a message ``m_k``;
2. the twin scores ``m_k`` against its own estimate ``x_tilde_k``;
3. the twin updates its belief with the verdict and picks accept/reject;
4. the controller applies ``K m_k`` (or the rejection policy);
5. the plant emits ``y_k, z_k`` and moves to ``x_{k+1}``; the filters read
   ``y_k, z_k`` to form the step ``k + 1`` estimates.

Nothing at step ``k`` reads ``x_{k+1}``, ``y_k`` or ``z_k`` before the
message is fixed.
"""
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import manipulator as arm
from .analysis import empirical_cost, mse_series, stealthy_loss_bound
from .attacks import NAIVE, STEALTHY, BENIGN, Sender, SenderKind
from .config import ConfigError, as_matrix
from .detector import DETRIMENTAL, DetectorConfig, chi2_statistic, classify, thresholds_from_confidence
from .estimation import (
    KalmanFilter,
    load_residual_model,
    residual_covariance_analytic,
    residual_covariance_monte_carlo,
    riccati_fixed_point,
)
from .lqg import LqrWeights, solve_lqr
from .mathkit import make_rng, split_rng
from .plant import DivergenceError, PlantModel, PlantState, initial_state, step
from .sge import (
    ACCEPT,
    REJECT,
    DegenerateMessageError,
    Identity,
    ReceiverWeights,
    beta_threshold,
    receiver_best_response,
    receiver_belief_model,
    receiver_utility,
    sender_utility,
)

log = logging.getLogger(__name__)

OUT_ENV = "TWIN_SENTINEL_OUT"
DEFAULT_OUT = "twin_sentinel_out"
_FREEZE_TOL = 1e-15


def default_out_dir():
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass
class Scenario:
    """Everything a run needs that does not change between cases."""

    name: str
    model: PlantModel
    weights: LqrWeights
    K: np.ndarray
    detector: DetectorConfig
    receiver: ReceiverWeights
    reference: object = None
    robot: object = None

    @property
    def n_x(self):
        return self.model.n_x


def build_model(cfg):
    """Plant, reference and robot parameters described by ``cfg``."""
    if cfg.preset == "manipulator":
        params = arm.RobotParams(**cfg.robot)
        noise = arm.NoiseConfig(**cfg.noise)
        curve = arm.HalfCircle(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg.curve.items()})
        sc = arm.build_scenario(params, cfg.dt, noise, curve)
        return sc.model, sc.reference, params
    A = np.atleast_2d(np.asarray(cfg.A, dtype=float))
    n = A.shape[0]
    C = np.atleast_2d(np.asarray(cfg.C, dtype=float))
    D = np.atleast_2d(np.asarray(cfg.D, dtype=float))
    model = PlantModel(
        A, np.asarray(cfg.B, dtype=float).reshape(n, -1), C, D,
        Sigma_x=as_matrix(cfg.Sigma_x, n, "Sigma_x"), Sigma_w=as_matrix(cfg.Sigma_w, n, "Sigma_w"),
        Sigma_v=as_matrix(cfg.Sigma_v, C.shape[0], "Sigma_v"), Sigma_d=as_matrix(cfg.Sigma_d, D.shape[0], "Sigma_d"),
        dt=cfg.dt,
    )
    return model, None, None


def calibrate(model, K, cfg):
    """Residual model for the detector, from file, analytically or by Monte Carlo."""
    if cfg.sigma_phi_file:
        return load_residual_model(cfg.sigma_phi_file).require_usable()
    if cfg.calibration == "monte_carlo":
        rng = split_rng(make_rng(cfg.seed), 4)[3]
        return residual_covariance_monte_carlo(model, K, cfg.calibration_steps, rng).require_usable()
    return residual_covariance_analytic(model, K).require_usable()


def build_scenario(cfg):
    """Assemble plant, controller, calibrated detector and receiver weights."""
    try:
        model, reference, robot = build_model(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid plant description: {exc}") from exc
    n = model.n_x
    try:
        weights = LqrWeights(as_matrix(cfg.Q, n, "Q"), as_matrix(cfg.R, model.n_u, "R"))
        receiver = ReceiverWeights(as_matrix(cfg.q0, n, "q0"), as_matrix(cfg.q1, n, "q1"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    problems = model.check_structure()
    if problems:
        raise ConfigError("; ".join(problems))
    lqr = solve_lqr(model.A, model.B, weights)
    problems = model.check_structure(lqr.K)
    if problems:
        raise ConfigError("; ".join(problems))
    if cfg.p1 is not None:
        rho1, rho2 = thresholds_from_confidence(cfg.p1, cfg.p2, n)
    else:
        rho1, rho2 = float(cfg.rho1), float(cfg.rho2)
    residual = calibrate(model, lqr.K, cfg)
    detector = DetectorConfig(rho1, rho2, n, residual)
    return Scenario(cfg.name, model, weights, lqr.K, detector, receiver, reference, robot)


def sender_kind(cfg, n_x):
    if cfg.case == "naive":
        bias = np.atleast_1d(np.asarray(cfg.naive_bias, dtype=float))
        if bias.shape != (n_x,):
            raise ConfigError(f"naive_bias must have {n_x} entries")
        return SenderKind(NAIVE, bias)
    if cfg.case == "stealthy":
        return SenderKind(STEALTHY)
    return SenderKind(BENIGN)


@dataclass
class RunRecord:
    """One logged step (deviation coordinates plus the reference state)."""

    k: int
    x: np.ndarray
    x_hat: np.ndarray
    x_tilde: np.ndarray
    m: np.ndarray
    u: np.ndarray
    chi2: float
    q: int
    pi0: float
    action: int
    us: float
    ur: float
    x_ref: np.ndarray


@dataclass
class RunLog:
    """Column-oriented per-step log of a run.

    State-like arrays are deviations from the reference (the regulated
    coordinates); ``x_ref`` holds the reference so absolute values are
    ``x_ref + x_dev``.
    """

    x_dev: np.ndarray
    x_hat: np.ndarray
    x_tilde: np.ndarray
    m: np.ndarray
    u: np.ndarray
    chi2: np.ndarray
    q: np.ndarray
    pi0: np.ndarray
    action: np.ndarray
    us: np.ndarray
    ur: np.ndarray
    x_ref: np.ndarray
    case: str = "none"
    halted: bool = False
    error: str = None
    alarms: int = 0

    def __len__(self):
        return len(self.chi2)

    @property
    def k(self):
        return np.arange(len(self))

    def record(self, k):
        return RunRecord(k, self.x_dev[k], self.x_hat[k], self.x_tilde[k], self.m[k], self.u[k],
                         float(self.chi2[k]), int(self.q[k]), float(self.pi0[k]), int(self.action[k]),
                         float(self.us[k]), float(self.ur[k]), self.x_ref[k])

    def __iter__(self):
        return (self.record(k) for k in range(len(self)))

    def absolute(self, name):
        return getattr(self, name) + self.x_ref

    def truncated(self, n):
        cut = {f: getattr(self, f)[:n] for f in ("x_dev", "x_hat", "x_tilde", "m", "u", "chi2", "q",
                                                  "pi0", "action", "us", "ur", "x_ref")}
        return RunLog(**cut, case=self.case, halted=self.halted, error=self.error, alarms=self.alarms)

    @classmethod
    def empty(cls, steps, n_x, n_u, case="none"):
        return cls(np.zeros((steps, n_x)), np.zeros((steps, n_x)), np.zeros((steps, n_x)), np.zeros((steps, n_x)),
                   np.zeros((steps, n_u)), np.zeros(steps), np.zeros(steps, dtype=int), np.zeros(steps),
                   np.zeros(steps, dtype=int), np.zeros(steps), np.zeros(steps), np.zeros((steps, n_x)), case=case)


@dataclass
class RunResult:
    log: RunLog
    scenario: Scenario
    cfg: object
    reports: dict = field(default_factory=dict)


def run_loop(scenario, cfg, steps=None):
    """Simulate one case and return its :class:`RunLog`.

    On divergence the log is cut at the last finite step and ``error`` is
    set; callers decide whether that is fatal.
    """
    steps = cfg.steps if steps is None else steps
    model, K = scenario.model, scenario.K
    det = scenario.detector
    kind = sender_kind(cfg, model.n_x)
    plant_rng, sender_rng, init_rng = split_rng(make_rng(cfg.seed), 3)
    sender = Sender(kind, sender_rng)
    identity = Identity.MALICIOUS if kind.malicious else Identity.BENIGN
    tracker = receiver_belief_model(det, cfg.prior, cfg.overt_weight, cfg.overt_leak, np.log(cfg.evidence_clip))

    state = initial_state(model, init_rng, cfg.x0)
    phys = KalmanFilter.physical(model, K)
    twin = KalmanFilter.twin(model, K)
    ref = scenario.reference
    out = RunLog.empty(steps, model.n_x, model.n_u, cfg.case)
    u_prev = np.zeros(model.n_u)

    for k in range(steps):
        x_hat, x_tilde = phys.x_est, twin.x_est
        m = sender.produce(x_hat, x_tilde, det)
        chi2 = chi2_statistic(x_tilde, m, det.residual)
        q = classify(chi2, det).q
        try:
            beta = beta_threshold(x_tilde, m, scenario.receiver)
        except DegenerateMessageError:
            beta = None
        # the verdict is evidence about this step's sender, so act on the posterior
        pi = min(max(tracker.update(q), cfg.belief_floor), cfg.belief_cap)
        a = receiver_best_response(q, pi, beta)

        if a == ACCEPT:
            u = K @ m
        else:
            out.alarms += 1
            if cfg.on_reject == "fallback":
                u = K @ x_tilde
            elif cfg.on_reject == "freeze":
                u = u_prev
            else:
                u = K @ x_tilde
        out.x_dev[k] = state.x
        out.x_hat[k] = x_hat
        out.x_tilde[k] = x_tilde
        out.m[k] = m
        out.u[k] = u
        out.chi2[k] = chi2
        out.q[k] = q
        out.pi0[k] = pi
        out.action[k] = a
        out.us[k] = sender_utility(identity, m, state.x, a)
        out.ur[k] = receiver_utility(identity, x_tilde, m, a, scenario.receiver)
        if ref is not None:
            out.x_ref[k] = ref.state(k)

        if a == REJECT and cfg.on_reject == "halt":
            out.halted = True
            return out.truncated(k + 1)

        u_prev = u
        try:
            state, y, z = step(model, state, u, plant_rng)
        except DivergenceError as exc:
            out.error = str(exc)
            return out.truncated(k + 1)
        phys.step(y)
        twin.step(z)
        for f in (phys, twin):
            if not f.frozen and f.last_delta < _FREEZE_TOL:
                f.frozen = True
    return out


def steady_state_covariances(scenario):
    phys = KalmanFilter.physical(scenario.model, scenario.K)
    twin = KalmanFilter.twin(scenario.model, scenario.K)
    P_hat, it_hat, res_hat = riccati_fixed_point(phys)
    P_tilde, it_tilde, res_tilde = riccati_fixed_point(twin)
    return {"P_hat": P_hat, "P_tilde": P_tilde, "iterations": (it_hat, it_tilde), "residuals": (res_hat, res_tilde)}


def bound_report(scenario):
    cov = steady_state_covariances(scenario)
    det = scenario.detector
    return stealthy_loss_bound(cov["P_hat"], cov["P_tilde"], det.residual.Sigma_phi, scenario.weights.Q,
                          scenario.weights.R, scenario.K, det.rho1, det.rho2, scenario.n_x)


def run_scenario(cfg, scenario=None):
    """Build (or reuse) the scenario, simulate ``cfg.case`` and attach reports."""
    scenario = scenario or build_scenario(cfg)
    run_log = run_loop(scenario, cfg)
    result = RunResult(run_log, scenario, cfg)
    burn = min(cfg.burn_in, max(len(run_log) - 1, 0))
    if len(run_log) > burn:
        result.reports["cost"] = empirical_cost(run_log, scenario.weights.Q, scenario.weights.R, burn)
        result.reports["mse"] = mse_series(run_log, burn_in=burn)
    result.reports["bound"] = bound_report(scenario)
    return result


def verdict_frequencies(run_log, burn_in=0):
    q = run_log.q[burn_in:]
    if len(q) == 0:
        return (float("nan"),) * 3
    return tuple(float(np.mean(q == v)) for v in (0, 1, 2))


# -- outputs -------------------------------------------------------------------

def csv_header(n_x, n_u):
    cols = ["k"]
    for prefix in ("x", "xhat", "xtilde", "m"):
        cols += [f"{prefix}{i + 1}" for i in range(n_x)]
    cols += [f"u{i + 1}" for i in range(n_u)]
    return cols + ["chi2", "q", "pi0", "action", "us", "ur"]


def write_trajectory_csv(path, run_log, n_x, n_u):
    """Per-step trajectory in absolute coordinates (reference added back)."""
    header = csv_header(n_x, n_u)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if len(run_log) == 0:
            return
        block = np.column_stack([
            run_log.absolute("x_dev"), run_log.absolute("x_hat"), run_log.absolute("x_tilde"),
            run_log.absolute("m"), run_log.u, run_log.chi2,
        ])
        for k in range(len(run_log)):
            fields = [str(k)] + [format(v, ".17g") for v in block[k]]
            fields += [str(int(run_log.q[k])), format(run_log.pi0[k], ".17g"), str(int(run_log.action[k])),
                       format(run_log.us[k], ".17g"), format(run_log.ur[k], ".17g")]
            fh.write(",".join(fields) + "\n")


def _write_series(path, t, y):
    with open(path, "w", newline="\n") as fh:
        for a, b in zip(t, y):
            fh.write(f"{format(float(a), '.17g')} {format(float(b), '.17g')}\n")


def write_plotdata(directory, run_log, dt, tag):
    """Two-column series for the trajectory, chi-square, belief and MSE panels."""
    directory.mkdir(parents=True, exist_ok=True)
    t = np.arange(len(run_log)) * dt
    if len(run_log) == 0:
        return
    pos = run_log.absolute("x_dev")
    msg = run_log.absolute("m")
    ref = run_log.x_ref
    _write_series(directory / f"{tag}_path_true.dat", pos[:, 0], pos[:, 1])
    _write_series(directory / f"{tag}_path_message.dat", msg[:, 0], msg[:, 1])
    _write_series(directory / f"{tag}_path_reference.dat", ref[:, 0], ref[:, 1])
    _write_series(directory / f"{tag}_chi2.dat", t, run_log.chi2)
    _write_series(directory / f"{tag}_belief.dat", t, run_log.pi0)
    _write_series(directory / f"{tag}_verdict.dat", t, run_log.q)
    mse = mse_series(run_log)
    for name in ("xhat", "xtilde", "message"):
        _write_series(directory / f"{tag}_mse_{name}.dat", t, mse[name])


def summary_text(result):
    cfg, run_log, sc = result.cfg, result.log, result.scenario
    det = sc.detector
    q0, q1, q2 = verdict_frequencies(run_log, min(cfg.burn_in, len(run_log)))
    lines = [
        f"scenario: {sc.name}",
        f"case: {cfg.case}",
        f"seed: {cfg.seed}",
        f"steps: {len(run_log)} (requested {cfg.steps}, burn-in {cfg.burn_in})",
        f"thresholds: rho1 = {det.rho1:.10g}, rho2 = {det.rho2:.10g} (dof {det.dof})",
        f"residual covariance source: {det.residual.source}",
        f"verdict frequencies after burn-in: q0 = {q0:.6f}, q1 = {q1:.6f}, q2 = {q2:.6f}",
        f"rejections: {run_log.alarms}",
        f"belief range: [{run_log.pi0.min() if len(run_log) else float('nan'):.6g}, "
        f"{run_log.pi0.max() if len(run_log) else float('nan'):.6g}]",
    ]
    if run_log.halted:
        lines.append("run halted at the first rejection")
    if run_log.error:
        lines.append(f"run aborted: {run_log.error}")
    if "cost" in result.reports:
        lines.append(f"average stage cost: {result.reports['cost']:.10g}")
    if "mse" in result.reports:
        mse = result.reports["mse"]
        lines.append(f"mean MSE: xhat = {mse['xhat_mean']:.6e}, xtilde = {mse['xtilde_mean']:.6e}, "
                     f"message = {mse['message_mean']:.6e}")
    lines.append("")
    lines.append(result.reports["bound"].to_text().rstrip("\n"))
    return "\n".join(lines) + "\n"


def emit_outputs(result, out_dir):
    """Write ``trajectory.csv``, ``summary.txt`` and ``plotdata/`` under ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        model = result.scenario.model
        write_trajectory_csv(out_dir / "trajectory.csv", result.log, model.n_x, model.n_u)
        (out_dir / "summary.txt").write_text(summary_text(result))
        write_plotdata(out_dir / "plotdata", result.log, model.dt, result.cfg.case)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write outputs to {out_dir}: {exc.strerror}") from exc
    return out_dir


# -- matched-seed comparison ---------------------------------------------------

@dataclass
class Comparison:
    results: dict
    bound: object

    @property
    def delta_cost(self):
        return self.results["stealthy"].reports["cost"] - self.results["none"].reports["cost"]

    def mse_table(self):
        rows = ["case      mse_xhat        mse_xtilde      mse_message     rejections"]
        for case in ("none", "naive", "stealthy"):
            r = self.results[case]
            m = r.reports["mse"]
            rows.append(f"{case:<9} {m['xhat_mean']:<15.6e} {m['xtilde_mean']:<15.6e} "
                        f"{m['message_mean']:<15.6e} {r.log.alarms}")
        return "\n".join(rows) + "\n"

    def to_text(self):
        J0 = self.results["none"].reports["cost"]
        J1 = self.results["stealthy"].reports["cost"]
        stealthy_rejections = self.results["stealthy"].log.alarms
        lines = [
            "Matched-seed comparison",
            "",
            self.mse_table(),
            f"J0 (no attack) = {J0:.10g}",
            f"J1 (stealthy)  = {J1:.10g}",
            f"J1 - J0        = {self.delta_cost:.10g}",
            f"loss bound     = {self.bound.bound:.10g}",
            f"within bound   = {self.delta_cost <= self.bound.bound}",
        ]
        if stealthy_rejections:
            lines.append(f"note: the stealthy run had {stealthy_rejections} rejections; J1 is not acceptance-gated")
        return "\n".join(lines) + "\n"


def default_naive_bias(scenario, factor=5.0):
    """Bias on the first coordinate, ``factor`` times the largest in-threshold residual."""
    det = scenario.detector
    lam = float(np.linalg.eigvalsh(det.residual.Sigma_phi).max())
    bias = np.zeros(scenario.n_x)
    bias[0] = factor * np.sqrt(det.rho2 * lam)
    return bias


def compare(cfg, scenario=None):
    """Run the benign, naive and stealthy cases on one seed."""
    scenario = scenario or build_scenario(cfg)
    bias = cfg.naive_bias if cfg.naive_bias is not None else default_naive_bias(scenario).tolist()
    results = {}
    for case in ("none", "naive", "stealthy"):
        results[case] = run_scenario(cfg.with_overrides(case=case, naive_bias=bias), scenario)
    return Comparison(results, results["none"].reports["bound"])
