import numpy as np
import pytest

from bremark.constraints import ConstraintSystem
from bremark.histories import HistoryUniverse


@pytest.fixture(scope="session")
def uni2():
    return HistoryUniverse(2)


@pytest.fixture(scope="session")
def sys2(uni2):
    return ConstraintSystem(uni2)


def random_counts(rng, T, individuals, max_distinct=None):
    """Observed counts with the given number of individuals spread over
    randomly chosen observed histories."""
    uni = HistoryUniverse(T)
    n = np.zeros(uni.I, dtype=np.int64)
    pool = rng.choice(uni.I, size=min(uni.I, max_distinct or uni.I), replace=False)
    for _ in range(individuals):
        n[rng.choice(pool)] += 1
    return n


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """``record(criterion, passed, detail)``: one PASS/FAIL line per criterion."""
    def record(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
