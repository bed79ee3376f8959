import numpy as np
import pytest

from mlr.fitting import set_descent_check


@pytest.fixture(autouse=True)
def _strict_descent():
    """Every BCD block update in the suite must not increase the objective."""
    set_descent_check(True)
    yield
    set_descent_check(False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    results = getattr(__import__("sys").modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
