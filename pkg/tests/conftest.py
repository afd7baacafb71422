import numpy as np
import pytest

from tomobench.quantum import gell_mann_basis, haar_kets, random_state, square_root_povm

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def d6_setup(rng):
    """Random square-root measurement (d=6, m=40) and a 10%-mixed true state."""
    basis = gell_mann_basis(6)
    povm = square_root_povm(haar_kets(6, 40, rng))
    rho = random_state(6, 0.1, rng)
    return basis, povm, rho


def record_criterion(label, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
