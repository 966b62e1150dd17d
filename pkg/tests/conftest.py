from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fixtures():
    return FIXTURES


def genotypes(rng, n, p):
    """Independent 0/1/2 codes with probabilities 1/4, 1/2, 1/4."""
    return rng.choice([0.0, 1.0, 2.0], size=(n, p), p=[0.25, 0.5, 0.25])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
