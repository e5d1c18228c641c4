import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    """Record a one-line verdict for an acceptance criterion."""
    def _report(criterion: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[criterion] = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
