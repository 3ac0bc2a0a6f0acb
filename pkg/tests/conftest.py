import numpy as np
import pytest

from ofmtlab.data import generate_synthetic


@pytest.fixture(scope="session")
def small_synth():
    """One subject, one repetition of every digit at 64x64, 24 frames."""
    return generate_synthetic(num_subjects=1, reps_per_digit=1, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
