import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phaselens.core import complex_gaussian, make_rng  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return make_rng(20240611)


@pytest.fixture
def random_hermitian(rng):
    def make(d):
        G = complex_gaussian(rng, (d, d))
        return G + G.conj().T
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
