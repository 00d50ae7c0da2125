"""Calibrate the three-tier detector on the arm and watch a benign run.

The residual between the twin estimate and the honest physical estimate is
Gaussian with covariance Sigma_phi, so its chi-square statistic should land
in each tier with the masses picked for the thresholds.
"""
import numpy as np

from twin_sentinel.config import MANIPULATOR_DEFAULTS, parse_config
from twin_sentinel.runner import build_scenario, run_loop, verdict_frequencies
from twin_sentinel.sge import benign_strategy_profile

cfg = parse_config(MANIPULATOR_DEFAULTS)
sc = build_scenario(cfg)
det = sc.detector

print(f"thresholds: rho1 = {det.rho1:.4f}, rho2 = {det.rho2:.4f} (dof {det.dof})")
print("Sigma_phi eigenvalues:", " ".join(f"{v:.3e}" for v in np.linalg.eigvalsh(det.residual.Sigma_phi)))

expected = benign_strategy_profile(det).probs
log = run_loop(sc, cfg.with_overrides(steps=20_000))
seen = verdict_frequencies(log, cfg.burn_in)
print("verdict   expected   observed")
for q, (e, s) in enumerate(zip(expected, seen)):
    print(f"  q={q}     {e:.4f}     {s:.4f}")
print(f"rejections: {log.alarms}, belief range [{log.pi0.min():.3f}, {log.pi0.max():.3f}]")
