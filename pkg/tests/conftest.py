import numpy as np
import pytest

from geomq import charts

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] #{number:<2} {title}: {detail}")


@pytest.fixture
def acceptance():
    def report(number, title, ok, detail):
        ACCEPTANCE.append((number, title, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] #{number} {title}: {detail}")
        return ok
    return report


@pytest.fixture(scope="session")
def circle():
    return charts.circle(1.0)


@pytest.fixture(scope="session")
def sphere():
    return charts.sphere(1.0)


@pytest.fixture
def gen():
    return np.random.default_rng(1234)
