import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lnnbench.datagen import Dataset  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_dataset(rng, n, a=None, b=None, noise=0.3):
    a = rng.standard_normal() if a is None else a
    b = rng.standard_normal() if b is None else b
    x = rng.standard_normal(n)
    y = a * x + b + noise * rng.standard_normal(n)
    return Dataset(x, y, a, b, noise)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
