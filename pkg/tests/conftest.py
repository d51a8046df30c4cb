import numpy as np
import pytest

from kobvis.geometry import FinitePoints, Punctured, UnitBall

# one line per acceptance criterion, printed after the run
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def record():
    def _record(k, ok, detail):
        CRITERIA.append(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return _record


@pytest.fixture(scope="session")
def ball1():
    return UnitBall(1)


@pytest.fixture(scope="session")
def ball2():
    return UnitBall(2)


@pytest.fixture(scope="session")
def punctured_center(ball2):
    return Punctured(ball2, FinitePoints(np.zeros((1, 4))))
