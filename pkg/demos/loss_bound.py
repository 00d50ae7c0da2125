"""Closed-form cap on the cost a stealthy attacker can add, checked by simulation.

The bound needs only steady-state quantities: the two filter covariances,
Sigma_phi, the thresholds and the controller gain.
"""
from twin_sentinel.config import MANIPULATOR_DEFAULTS, parse_config
from twin_sentinel.runner import bound_report, build_scenario, run_scenario

cfg = parse_config(MANIPULATOR_DEFAULTS).with_overrides(steps=20_000)
sc = build_scenario(cfg)
report = bound_report(sc)
print(report.to_text())

J0 = run_scenario(cfg, sc).reports["cost"]
J1 = run_scenario(cfg.with_overrides(case="stealthy"), sc).reports["cost"]
print(f"J0 = {J0:.5e}  J1 = {J1:.5e}  J1 - J0 = {J1 - J0:.5e}  ({(J1 - J0) / report.bound:.0%} of the bound)")
