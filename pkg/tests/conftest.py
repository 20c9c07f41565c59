import numpy as np
import pytest

from pmcmc import rng_stream
from pmcmc.models import two_state_hmm

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return rng_stream(20240611, 1)


@pytest.fixture
def small_hmm():
    """S=2, T=3 HMM with fixed parameters."""
    return two_state_hmm([0, 1, 1], switch=0.3, flip=0.2, initial=(0.6, 0.4))


def tv_distance(counts, probs):
    counts = np.asarray(counts, float)
    return 0.5 * float(np.abs(counts / counts.sum() - np.asarray(probs)).sum())
