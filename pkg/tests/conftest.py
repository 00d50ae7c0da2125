import numpy as np
import pytest

from twin_sentinel.config import MANIPULATOR_DEFAULTS, parse_config
from twin_sentinel.runner import build_scenario


@pytest.fixture(scope="session")
def manip_cfg():
    return parse_config(MANIPULATOR_DEFAULTS)


@pytest.fixture(scope="session")
def manip(manip_cfg):
    return build_scenario(manip_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable(rng, n, radius=0.9):
    A = rng.standard_normal((n, n))
    return A * (radius / max(abs(np.linalg.eigvals(A))))


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the acceptance summary, then assert."""

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
