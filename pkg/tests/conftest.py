import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fpg.core_math import RngStream

settings.register_profile(
    "fpg", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fpg")


@pytest.fixture
def rng():
    return RngStream(1234)


def spd(rng: RngStream, n: int, floor: float = 0.1) -> np.ndarray:
    a = rng.normal((n, n))
    return a @ a.T / n + floor * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[num])
