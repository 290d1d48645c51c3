import numpy as np
import pytest

from fbtrca.data import EpochSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_epochs(rng, C=4, Ns=64, Nt=5, fs=32.0, label="movement"):
    return EpochSet(rng.standard_normal((C, Ns, Nt)), fs, label=label,
                    window=(-Ns / fs, 0.0))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
