import numpy as np
import pytest

from kahanmaps.qvf import QuadraticVectorField


def random_field(rng, n, bound=2.0):
    return QuadraticVectorField(
        rng.uniform(-bound, bound, (n, n, n)),
        rng.uniform(-bound, bound, (n, n)),
        rng.uniform(-bound, bound, n),
    )


def fd_jacobian(fun, x, step=1e-6):
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(20241014)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
