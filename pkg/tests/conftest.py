import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


EXTENDED = os.environ.get("LINGCREL_EXTENDED") == "1"


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Record one summary line per acceptance criterion; printed after the run."""
    def log(number: int, passed: bool, detail: str) -> str:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {number:2d}: {status}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return line
    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
