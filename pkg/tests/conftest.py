import math

import numpy as np
import pytest
from hypothesis import settings

from lapsewick.config import preset
from lapsewick.geometry import AdmField, FourierField, FourierMode

settings.register_profile("lapsewick", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("lapsewick")

TWO_PI = 2 * math.pi


def constant_adm(lapse=1.0, shift=0.0, gxx=1.0, V=0.0, period=TWO_PI) -> AdmField:
    c = FourierField
    return AdmField(1, (period, period), c(lapse), (c(shift),), ((c(gxx),),), c(V))


def random_adm(seed: int, amplitude: float = 0.15) -> AdmField:
    """Smooth 1+1 data with random low modes, safely positive."""
    rng = np.random.default_rng(seed)

    def field(const):
        modes = tuple(FourierMode(tuple(int(k) for k in rng.integers(-1, 2, 2)),
                                  float(rng.uniform(-amplitude, amplitude)),
                                  float(rng.uniform(-amplitude, amplitude))) for _ in range(2))
        modes = tuple(m for m in modes if any(m.wave))
        return FourierField(const, modes)

    return AdmField(1, (TWO_PI, TWO_PI), field(1.0), (field(0.1),), ((field(1.0),),), field(0.5))


@pytest.fixture(scope="session")
def flat():
    return preset("flat")


@pytest.fixture(scope="session")
def curved():
    return preset("curved")


@pytest.fixture(scope="session")
def curved_torus():
    return preset("curved_torus")


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    if not hasattr(request.config, "_acceptance_lines"):
        request.config._acceptance_lines = []
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
