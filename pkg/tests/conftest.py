import numpy as np
import pytest

from easvar.core import TimeSeriesData, generate_pattern, simulate_var


def random_series(p: int, n: int, seed: int = 0) -> TimeSeriesData:
    """Stable VAR(1) data with a random dense transition matrix."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(p, p))
    a *= 0.6 / np.linalg.norm(a, 2)
    return simulate_var(a, np.ones(p), n, seed)


@pytest.fixture
def small_data():
    return random_series(3, 60, seed=11)


@pytest.fixture
def table1_instance():
    a0, g0 = generate_pattern("random", 4, 0)
    data = simulate_var(a0, np.ones(4), 120, 0)
    return a0, g0, data


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
