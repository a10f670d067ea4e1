from __future__ import annotations

import numpy as np
import pytest

from modisperse.modpath import brownian


@pytest.fixture(scope="session")
def short_brownian():
    """Brownian path on a short horizon, where the quadrature oracle resolves every phase."""
    return brownian(64, 2.0**-10, seed=11)


@pytest.fixture(scope="session")
def unit_brownian():
    return brownian(2**12, 1.0, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
