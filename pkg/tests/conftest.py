import numpy as np
import pytest

from steadydiff.diffusion import DiffusionModel
from steadydiff.zoo import ErlangAParams, PhaseTypeParams

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def ou_model(theta=1.0, a=2.0):
    """Scalar Ornstein-Uhlenbeck diffusion ``dY = -theta Y dt + sqrt(a) dB``."""
    return DiffusionModel.from_drift(lambda x: -theta * np.asarray(x, dtype=float), [[a]], label="ou")


@pytest.fixture
def ou():
    return ou_model()


@pytest.fixture
def erlang_a():
    return ErlangAParams(mu=1.0, theta=0.5)


@pytest.fixture
def serial_ph():
    return PhaseTypeParams(nu=(2.0, 2.0), routing=((0.0, 1.0), (0.0, 0.0)), theta=0.5)
