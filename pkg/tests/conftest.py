import math

import numpy as np
import pytest


def binomial_sigma(p, n):
    return math.sqrt(p * (1.0 - p) / n)


@pytest.fixture
def rng_np():
    # test-side randomness only (random states, fuzz inputs)
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
