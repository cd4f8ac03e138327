import numpy as np
import pytest

from mvie.media import MediumSpec

#: lines reported by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def moving_medium():
    m = MediumSpec.normalized(eps_r=1.3, mu_r=1.1)
    return m.with_velocity((0.03, -0.02, 0.05))
