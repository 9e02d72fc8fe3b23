import numpy as np
import pytest

from equiaffine.geometry import Chart, ConnectionField, MetricField
from equiaffine.suite import connection_suite, suite_metric

CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(CRITERIA):
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{mark}] {number}. {title}: {detail}")


@pytest.fixture
def criterion():
    def record(number, title, passed, detail=""):
        CRITERIA.append((number, title, bool(passed), detail))
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chart2():
    return Chart.box(2)


@pytest.fixture
def chart3():
    return Chart.box(3)


@pytest.fixture(scope="session")
def suite():
    return connection_suite()


@pytest.fixture
def gamma000_x1(chart2):
    """n = 2 connection with Gamma^0_{00} = x1, zero elsewhere."""
    return ConnectionField.from_components(chart2, {(0, 0, 0): chart2.parse("x1")})


@pytest.fixture
def identity2(chart2):
    return MetricField.identity(chart2)


@pytest.fixture
def metric3(chart3):
    return suite_metric(chart3)
