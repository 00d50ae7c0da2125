"""Scenario configuration: INI-style sections, values in JSON syntax.

Example::

    [scenario]
    name = manipulator
    preset = manipulator

    [weights]
    Q = [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]
    R = 1.0
    q0 = 0.35
    q1 = 0.65

    [detector]
    p1 = 0.95
    p2 = 0.999

    [run]
    seed = 7
    steps = 2000

Matrices are row-major nested lists; a bare number means that multiple of
the identity.
"""
import configparser
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


ON_REJECT = ("fallback", "freeze", "halt")
CASES = ("none", "naive", "stealthy")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    preset: str = None
    # custom plant (ignored for presets)
    A: object = None
    B: object = None
    C: object = None
    D: object = None
    Sigma_x: object = None
    Sigma_w: object = None
    Sigma_v: object = None
    Sigma_d: object = None
    dt: float = 0.01
    x0: object = None
    # manipulator preset
    robot: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    curve: dict = field(default_factory=dict)
    # weights
    Q: object = 1.0
    R: object = 1.0
    q0: object = 0.35
    q1: object = 0.65
    # detector
    p1: float = None
    p2: float = None
    rho1: float = None
    rho2: float = None
    sigma_phi_file: str = None
    calibration: str = "analytic"
    calibration_steps: int = 100_000
    # game
    prior: float = 0.8
    overt_weight: float = 0.02
    overt_leak: float = 0.001
    evidence_clip: float = 1e60
    belief_floor: float = 0.01
    belief_cap: float = 0.99
    # sender
    case: str = "none"
    naive_bias: object = None
    # run
    steps: int = 2000
    burn_in: int = 200
    seed: int = None
    on_reject: str = "fallback"
    out_dir: str = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.seed is None:
            raise ConfigError("a seed is required ([run] seed = ...)")
        if self.preset not in (None, "manipulator"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.preset is None and any(getattr(self, k) is None for k in ("A", "B", "C", "D")):
            raise ConfigError("custom plant needs A, B, C and D")
        by_conf = self.p1 is not None or self.p2 is not None
        by_rho = self.rho1 is not None or self.rho2 is not None
        if by_conf == by_rho:
            raise ConfigError("give exactly one of (p1, p2) or (rho1, rho2)")
        if by_conf and (self.p1 is None or self.p2 is None):
            raise ConfigError("both p1 and p2 are required")
        if by_rho and (self.rho1 is None or self.rho2 is None):
            raise ConfigError("both rho1 and rho2 are required")
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.case == "naive" and self.naive_bias is None:
            raise ConfigError("naive case needs naive_bias")
        if self.on_reject not in ON_REJECT:
            raise ConfigError(f"on_reject must be one of {ON_REJECT}")
        if self.calibration not in ("analytic", "monte_carlo"):
            raise ConfigError("calibration must be analytic or monte_carlo")
        if not 0.0 <= self.prior <= 1.0:
            raise ConfigError("prior must lie in [0, 1]")
        if not 0.0 <= self.overt_weight <= 1.0:
            raise ConfigError("overt_weight must lie in [0, 1]")
        if not 0.0 < self.overt_leak < 0.5:
            raise ConfigError("overt_leak must lie in (0, 0.5)")
        if not self.evidence_clip > 1.0:
            raise ConfigError("evidence_clip must exceed 1")
        if not 0.0 <= self.belief_floor < self.belief_cap <= 1.0:
            raise ConfigError("need 0 <= belief_floor < belief_cap <= 1")
        if self.steps < 0 or self.burn_in < 0:
            raise ConfigError("steps and burn_in must be nonnegative")

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


_SECTIONS = ("scenario", "plant", "robot", "noise", "curve", "weights", "detector", "game", "attack", "run")
_NESTED = ("robot", "noise", "curve")
_FIELD_NAMES = {f.name for f in fields(ScenarioConfig)}


def _parse_value(raw):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    low = raw.lower()
    # "none" stays a string: it is a valid case name
    if low in ("null", ""):
        return None
    if low in ("true", "false"):
        return low == "true"
    return raw


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        items = {k: _parse_value(v) for k, v in parser.items(section)}
        if section in _NESTED:
            values[section] = items
            continue
        for key, val in items.items():
            if key not in _FIELD_NAMES:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[key] = val
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path))


def as_matrix(value, dim, name):
    """Matrix from a nested list, or a scalar times the ``dim`` identity."""
    if value is None:
        raise ConfigError(f"{name} is required")
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    arr = np.atleast_2d(arr)
    if arr.shape != (dim, dim):
        raise ConfigError(f"{name} must be {dim}x{dim}, got {arr.shape}")
    return arr


MANIPULATOR_DEFAULTS = """\
[scenario]
name = manipulator
preset = manipulator

[weights]
Q = 0.001
R = 1.0
q0 = 0.35
q1 = 0.65

[detector]
p1 = 0.95
p2 = 0.999

[run]
seed = 2020
steps = 2000
burn_in = 200
"""
