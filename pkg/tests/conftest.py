import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tem_codec.signal import synth_sinc_signal
from tem_codec.tem_core import CodecParams

settings.register_profile("ci", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

OMEGA = 2 * math.pi * 10
KD = 0.24 * 0.0156


@pytest.fixture(scope="session")
def params():
    return CodecParams()


@pytest.fixture(scope="session")
def sinc_signals():
    """Eight seeded ensemble members on a 1 s window."""
    return [synth_sinc_signal(OMEGA, 2, duration=1.0, seed=s) for s in range(8)]


@pytest.fixture(scope="session")
def short_signal():
    return synth_sinc_signal(OMEGA, 2, duration=0.4, seed=11)


def zero_signal(duration=0.1):
    return synth_sinc_signal(OMEGA, 2, coeffs=np.zeros(5), duration=duration, start=0.0)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are repeated in the summary."""
    def _report(line):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
