"""Signaling game with evidence between the estimator and the digital twin.

The sender (estimator) is benign or malicious and sends an estimate ``m``;
the receiver (twin) sees ``m`` plus the detector verdict ``q`` and accepts
(``a = 1``) or rejects (``a = 0``). Beliefs are the receiver's probability
that the sender is benign.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from .detector import DETRIMENTAL, VERDICTS
from .mathkit import as_sym_matrix, is_positive_definite

ACCEPT, REJECT = 1, 0


class Identity(enum.IntEnum):
    BENIGN = 0
    MALICIOUS = 1


class DegenerateMessageError(ValueError):
    """The message coincides with the twin estimate, so beta is 0/0."""


class BeliefUpdateError(ValueError):
    """Observed evidence has zero probability under both identities."""


@dataclass(frozen=True)
class ReceiverWeights:
    Q0: np.ndarray
    Q1: np.ndarray

    def __post_init__(self):
        for name in ("Q0", "Q1"):
            M = as_sym_matrix(getattr(self, name), name)
            if not is_positive_definite(M):
                raise ValueError(f"receiver weight {name} must be positive definite")
            object.__setattr__(self, name, M)

    @classmethod
    def isotropic(cls, q0, q1, dim):
        """Scalar multiples of the identity; beta is then q1 / (q0 + q1) for every message."""
        return cls(q0 * np.eye(dim), q1 * np.eye(dim))


@dataclass(frozen=True)
class SenderStrategy:
    """Probability of each detector verdict q = 0, 1, 2 for one identity."""

    probs: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.probs)
        if len(p) != len(VERDICTS):
            raise ValueError("a sender strategy needs one mass per verdict")
        if min(p) < -1e-15 or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError(f"strategy masses must be a probability vector, got {p}")
        object.__setattr__(self, "probs", tuple(max(0.0, v) for v in p))

    def __getitem__(self, q):
        return self.probs[q]

    def mass(self, qs):
        return sum(self.probs[q] for q in qs)


@dataclass(frozen=True)
class StepUtilities:
    u_sender: float
    u_receiver: float


def beta_threshold(x_twin, m, weights):
    """Belief level at which the receiver is indifferent between accept and reject."""
    d = np.asarray(x_twin, dtype=float) - np.asarray(m, dtype=float)
    num = float(d @ weights.Q1 @ d)
    den = float(d @ (weights.Q0 + weights.Q1) @ d)
    if den <= 0.0:
        raise DegenerateMessageError("message equals the twin estimate; beta is undefined")
    return num / den


def receiver_best_response(q, pi0, beta):
    """Pure best response of the twin.

    ``beta=None`` stands for the degenerate message ``m == x_twin``: both
    receiver utilities vanish there and the message is accepted unless the
    verdict is detrimental.
    """
    if q == DETRIMENTAL:
        return REJECT
    if beta is None:
        return ACCEPT
    return ACCEPT if pi0 >= beta else REJECT


def belief_update(pi0, q, sigma_benign, sigma_malicious):
    """Bayes' rule for the probability that the sender is benign."""
    lb = sigma_benign[q] * pi0
    lm = sigma_malicious[q] * (1.0 - pi0)
    den = lb + lm
    if den > 0.0:
        return lb / den
    # zero-likelihood evidence: fall back on whichever identity can produce it
    if sigma_benign[q] > 0.0:
        return 1.0
    if sigma_malicious[q] > 0.0:
        return 0.0
    raise BeliefUpdateError(f"verdict {q} has zero probability under both identities")


def benign_strategy_profile(cfg):
    """Verdict distribution of a benign sender that always sends its Kalman estimate."""
    F1, F2 = cfg.cdf_rho1, cfg.cdf_rho2
    return SenderStrategy((F1, F2 - F1, 1.0 - F2))


def stealthy_strategy_profile(cfg):
    """Equilibrium mix of the malicious sender: inner ellipsoid w.p. F(rho1), band otherwise."""
    F1 = cfg.cdf_rho1
    return SenderStrategy((F1, 1.0 - F1, 0.0))


def overt_profile(leak=1e-3):
    """Verdicts of an attacker that ignores the detector: almost always detrimental."""
    if not 0.0 < leak < 0.5:
        raise ValueError("leak must lie in (0, 0.5)")
    return SenderStrategy((leak, leak, 1.0 - 2.0 * leak))


class TypeBelief:
    """Online belief that the sender is benign, with persistent attacker types.

    The malicious identity is a mixture of attacker types, each with its own
    verdict profile and prior weight. The sender's type does not change during
    a run, so the tracker keeps one likelihood ratio per type (type versus
    benign, in logs) and multiplies it by ``sigma_type(q) / sigma_benign(q)``
    at every verdict. The benign posterior is

        pi = prior / (prior + (1 - prior) * sum_j w_j * Lambda_j).

    Log ratios are clipped to ``[-clip, clip]`` so the tracker keeps reacting
    to an attack that starts late. With a single type and no clipping this is
    :func:`belief_update` applied step after step.
    """

    def __init__(self, prior, sigma_benign, types, clip=np.inf):
        if not 0.0 <= prior <= 1.0:
            raise ValueError("prior must lie in [0, 1]")
        weights = np.array([w for w, _ in types], dtype=float)
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("type weights must form a probability vector")
        self.prior = float(prior)
        self.sigma_benign = sigma_benign
        self.profiles = [prof for _, prof in types]
        self.log_weights = np.log(np.where(weights > 0, weights, 1.0))
        self.active = weights > 0
        self.clip = float(clip)
        self.log_ratio = np.zeros(len(types))

    def update(self, q):
        b = self.sigma_benign[q]
        for j, prof in enumerate(self.profiles):
            if not self.active[j]:
                continue
            t = prof[q]
            if b > 0.0 and t > 0.0:
                step = np.log(t) - np.log(b)
            elif t > 0.0:
                step = np.inf
            elif b > 0.0:
                step = -np.inf
            else:
                raise BeliefUpdateError(f"verdict {q} has zero probability under the benign and a malicious type")
            self.log_ratio[j] = float(np.clip(self.log_ratio[j] + step, -self.clip, self.clip))
        return self.belief

    @property
    def belief(self):
        if self.prior in (0.0, 1.0):
            return self.prior
        terms = (self.log_weights + self.log_ratio)[self.active]
        if np.any(np.isposinf(terms)):
            return 0.0
        top = terms.max()
        log_mix = top + np.log(np.sum(np.exp(terms - top)))
        # prior / (prior + (1 - prior) * exp(log_mix)), evaluated in log-odds
        log_odds = np.log(self.prior) - np.log1p(-self.prior) - log_mix
        return float(1.0 / (1.0 + np.exp(-log_odds)))


def receiver_belief_model(cfg, prior, overt_weight=0.02, leak=1e-3, clip=np.log(1e60)):
    """Belief tracker used by the twin during a run.

    The malicious identity is either the equilibrium (stealthy) attacker,
    whose verdicts pool with the benign ones, or with weight ``overt_weight``
    an overt attacker. Pooling makes the stealthy type uninformative, so the
    belief only reacts to evidence of an overt attack, exactly the part the
    detector can separate. Bayes on the literal stealthy profile would not
    work online: it has no mass on a detrimental verdict, so one such verdict
    would certify a sender as benign.
    """
    benign = benign_strategy_profile(cfg)
    if not 0.0 <= overt_weight <= 1.0:
        raise ValueError("overt_weight must lie in [0, 1]")
    types = [(1.0 - overt_weight, benign), (overt_weight, overt_profile(leak))]
    return TypeBelief(prior, benign, types, clip)


def sender_utility(identity, m, x, a):
    """Realized sender payoff against the true state ``x``."""
    err = np.asarray(m, dtype=float) - np.asarray(x, dtype=float)
    sq = float(err @ err)
    if identity == Identity.BENIGN:
        return -sq
    return sq if a == ACCEPT else 0.0


def receiver_utility(identity, x_twin, m, a, weights):
    d = np.asarray(x_twin, dtype=float) - np.asarray(m, dtype=float)
    if identity == Identity.BENIGN:
        return -float(d @ weights.Q0 @ d) if a == REJECT else 0.0
    return -float(d @ weights.Q1 @ d) if a == ACCEPT else 0.0


def step_utilities(identity, x, x_twin, m, a, weights):
    return StepUtilities(sender_utility(identity, m, x, a), receiver_utility(identity, x_twin, m, a, weights))


def expected_receiver_utility(a, pi0, x_twin, m, weights):
    return (pi0 * receiver_utility(Identity.BENIGN, x_twin, m, a, weights)
            + (1.0 - pi0) * receiver_utility(Identity.MALICIOUS, x_twin, m, a, weights))


def equilibrium_type(sigma_benign, sigma_malicious, atol=1e-12):
    """Label a profile pair as pooling, separating or partially separating."""
    b = np.asarray(sigma_benign.probs)
    m = np.asarray(sigma_malicious.probs)
    if np.allclose(b, m, rtol=0.0, atol=atol):
        return "pooling"
    if not np.any((b > atol) & (m > atol)):
        return "separating"
    return "partially separating"


@dataclass
class PbneRow:
    q: int
    sigma_benign: float
    sigma_malicious: float
    posteriors: dict
    fixed_point: bool
    action_stable: bool


@dataclass
class PbneReport:
    sigma_benign: SenderStrategy
    sigma_malicious: SenderStrategy
    beta: float
    beliefs: tuple
    rows: list = field(default_factory=list)
    aggregated_nonzero_fixed_point: bool = False
    label: str = ""

    @property
    def on_path_fixed_point(self):
        """Fixed-point property on every verdict both identities produce with equal mass."""
        return all(r.fixed_point for r in self.rows if r.sigma_benign == r.sigma_malicious)

    @property
    def mismatched_verdicts(self):
        return [r.q for r in self.rows if r.sigma_benign != r.sigma_malicious]

    def to_text(self):
        lines = [
            "Pooling equilibrium check",
            f"benign profile    sigma(q|benign)    = {_fmt(self.sigma_benign.probs)}",
            f"malicious profile sigma(q|malicious) = {_fmt(self.sigma_malicious.probs)}",
            f"profile type: {self.label}",
            f"acceptance threshold beta = {self.beta:.6g}",
            "",
            "q  sigma_b      sigma_m      fixed_point  action_stable  posterior(pi) for pi in " + _fmt(self.beliefs),
        ]
        for r in self.rows:
            post = ", ".join(f"{v:.12g}" for v in r.posteriors.values())
            lines.append(f"{r.q}  {r.sigma_benign:<11.6g}  {r.sigma_malicious:<11.6g}  "
                         f"{str(r.fixed_point):<11}  {str(r.action_stable):<13}  [{post}]")
        lines.append("")
        lines.append(f"aggregated evidence q != 0: fixed point = {self.aggregated_nonzero_fixed_point}")
        if self.mismatched_verdicts:
            lines.append("verdicts with unequal masses (belief moves there): " + ", ".join(map(str, self.mismatched_verdicts)))
        else:
            lines.append("all verdicts carry equal masses: every belief is a fixed point")
        return "\n".join(lines) + "\n"


def _fmt(values):
    return "(" + ", ".join(f"{v:.6g}" for v in values) + ")"


def verify_pooling_pbne(sigma_benign, sigma_malicious, beliefs, beta, atol=1e-12):
    """Check the belief fixed-point property of a candidate pooling profile.

    For each verdict the report lists the posterior at each prior in
    ``beliefs``, whether all of them are fixed points, and whether the
    receiver's action is unchanged by the update wherever the prior is at
    least ``beta``. The aggregated event ``q != 0`` is checked separately.
    """
    beliefs = tuple(float(p) for p in beliefs)
    report = PbneReport(sigma_benign, sigma_malicious, beta, beliefs,
                        label=equilibrium_type(sigma_benign, sigma_malicious, atol))
    for q in VERDICTS:
        posts = {}
        stable = True
        for pi in beliefs:
            try:
                post = belief_update(pi, q, sigma_benign, sigma_malicious)
            except BeliefUpdateError:
                post = float("nan")
            posts[pi] = post
            if pi >= beta and receiver_best_response(q, post, beta) != receiver_best_response(q, pi, beta):
                stable = False
        fixed = all(abs(posts[pi] - pi) <= atol for pi in beliefs)
        report.rows.append(PbneRow(q, sigma_benign[q], sigma_malicious[q], posts, fixed, stable))

    agg_b = SenderStrategy((sigma_benign[0], sigma_benign.mass((1, 2)), 0.0))
    agg_m = SenderStrategy((sigma_malicious[0], sigma_malicious.mass((1, 2)), 0.0))
    report.aggregated_nonzero_fixed_point = all(
        abs(belief_update(pi, 1, agg_b, agg_m) - pi) <= atol for pi in beliefs
    )
    return report
