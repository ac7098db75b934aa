import numpy as np
import pytest

from csge.core import Dataset

ACCEPTANCE_RESULTS = []


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((criterion, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_regression():
    rng = np.random.default_rng(7)
    X = rng.uniform(-2, 2, size=(60, 3))
    y = 1.5 * X[:, 0] - X[:, 1] + np.sin(2 * X[:, 2]) + 0.1 * rng.standard_normal(60)
    return Dataset(X, y)
