import pytest

from helpers import s1_initial, s1_params
from sddtime import default_omega, integrate_sdd, integrate_transformed


@pytest.fixture(scope="session")
def s1():
    return s1_params(), s1_initial()


@pytest.fixture(scope="session")
def s1_pair(s1):
    """Transformed solve over 2h and a direct solve covering alpha(s0 + 2h)."""
    p, init = s1
    ts = integrate_transformed(p, init, default_omega(init, p), 4.0, 1e-3)
    sol = integrate_sdd(p, init, float(ts.alpha(4.0)) + 0.01, 1e-3)
    return sol, ts


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; lines are printed in the terminal summary."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
