import numpy as np
import pytest

from wassrem import EmpiricalMeasure


@pytest.fixture
def four_cohorts():
    """Four units with N = 1, 2, 5, 10 drawn from N(0, Z^2), Z = 2, 4, 6, 8."""
    rng = np.random.default_rng(20240)
    z = np.array([2.0, 4.0, 6.0, 8.0])
    sizes = [1, 2, 5, 10]
    measures = [EmpiricalMeasure(rng.normal(0.0, zi, size=n)) for zi, n in zip(z, sizes)]
    return z, measures


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[num])
