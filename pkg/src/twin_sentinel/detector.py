"""Three-tier chi-square detector run by the digital twin.

Verdicts: 0 qualified (chi2 <= rho1), 1 unqualified (rho1 < chi2 <= rho2),
2 detrimental (chi2 > rho2).
"""
from dataclasses import dataclass

import numpy as np

from .mathkit import chi_square_cdf, chi_square_quantile

QUALIFIED, UNQUALIFIED, DETRIMENTAL = 0, 1, 2
VERDICTS = (QUALIFIED, UNQUALIFIED, DETRIMENTAL)


@dataclass(frozen=True)
class DetectorConfig:
    rho1: float
    rho2: float
    dof: int
    residual: object = None

    def __post_init__(self):
        if not self.rho2 > self.rho1 > 0:
            raise ValueError(f"thresholds must satisfy rho2 > rho1 > 0, got rho1={self.rho1}, rho2={self.rho2}")
        if int(self.dof) != self.dof or self.dof < 1:
            raise ValueError(f"dof must be a positive integer, got {self.dof}")
        if self.residual is not None and self.residual.dim != self.dof:
            raise ValueError("residual dimension does not match dof")

    @property
    def cdf_rho1(self):
        return chi_square_cdf(self.rho1, self.dof)

    @property
    def cdf_rho2(self):
        return chi_square_cdf(self.rho2, self.dof)


@dataclass(frozen=True)
class DetectorVerdict:
    chi2: float
    q: int


def chi2_statistic(x_twin, m, residual):
    """(x_twin - m)^T Sigma_phi^{-1} (x_twin - m)."""
    d = np.asarray(x_twin, dtype=float) - np.asarray(m, dtype=float)
    return float(max(0.0, d @ residual.Sigma_phi_inv @ d))


def classify(chi2, cfg):
    if chi2 <= cfg.rho1:
        q = QUALIFIED
    elif chi2 <= cfg.rho2:
        q = UNQUALIFIED
    else:
        q = DETRIMENTAL
    return DetectorVerdict(float(chi2), q)


def detect(x_twin, m, cfg):
    return classify(chi2_statistic(x_twin, m, cfg.residual), cfg)


def thresholds_from_confidence(p1, p2, dof):
    """Thresholds whose chi-square CDF values are ``p1`` and ``p2``."""
    if not 0.0 < p1 < p2 < 1.0:
        raise ValueError(f"need 0 < p1 < p2 < 1, got p1={p1}, p2={p2}")
    return chi_square_quantile(p1, dof), chi_square_quantile(p2, dof)
