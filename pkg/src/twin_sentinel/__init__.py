"""Digital-twin defense against stealthy estimation attacks.

A physical Kalman filter and a twin filter estimate the same plant over two
channels. The twin scores each message against its own estimate with a
three-tier chi-square detector, keeps a belief about the sender, and decides
whether the controller may use the message.
"""
from .analysis import BoundReport, empirical_cost, mse_series, stealthy_loss_bound
from .attacks import EllipsoidProblem, Sender, SenderKind, produce_message, solve_ellipsoid_argmax
from .config import ConfigError, ScenarioConfig, load_config, parse_config, MANIPULATOR_DEFAULTS
from .detector import DETRIMENTAL, QUALIFIED, UNQUALIFIED, DetectorConfig, chi2_statistic, classify, detect
from .estimation import (
    KalmanFilter,
    ResidualModel,
    residual_covariance_analytic,
    residual_covariance_monte_carlo,
    riccati_fixed_point,
)
from .lqg import LqrWeights, solve_lqr
from .mathkit import ConvergenceError, chi_square_cdf, chi_square_quantile, solve_discrete_lyapunov
from .plant import DivergenceError, PlantModel, step
from .runner import RunLog, build_scenario, compare, emit_outputs, run_loop, run_scenario
from .sge import (
    ReceiverWeights,
    SenderStrategy,
    TypeBelief,
    belief_update,
    benign_strategy_profile,
    receiver_best_response,
    stealthy_strategy_profile,
    verify_pooling_pbne,
)

__version__ = "0.1.0"
