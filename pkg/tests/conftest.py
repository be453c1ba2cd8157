import numpy as np
import pytest

from bregrates.radon import RadonOperator


@pytest.fixture(scope="session")
def small_op():
    return RadonOperator(16, 24)


@pytest.fixture(scope="session")
def op32():
    return RadonOperator(32, 90)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    lines = [
        value
        for key in ("passed", "failed")
        for rep in terminalreporter.stats.get(key, [])
        if rep.when == "call"
        for name, value in rep.user_properties
        if name == "acceptance"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
