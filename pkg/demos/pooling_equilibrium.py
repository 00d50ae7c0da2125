"""Why the twin cannot tell the stealthy attacker apart from an honest sender.

Both put the same mass on a qualified verdict, so Bayes' rule leaves the
belief where it was. The only difference is the tiny mass the honest sender
leaks onto the detrimental tier, which the report flags.
"""
from twin_sentinel.detector import DetectorConfig
from twin_sentinel.sge import benign_strategy_profile, stealthy_strategy_profile, verify_pooling_pbne

det = DetectorConfig(9.49, 18.47, 4)
report = verify_pooling_pbne(benign_strategy_profile(det), stealthy_strategy_profile(det),
                             beliefs=(0.1, 0.5, 0.8, 0.9), beta=0.65)
print(report.to_text())
