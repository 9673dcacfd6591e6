import numpy as np
import pytest

from bth.coeff import LatticeGrid, PolyRing

VERDICTS: dict = {}


def record_verdict(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid():
    return LatticeGrid(1, 31)


@pytest.fixture
def float_ring():
    return PolyRing(1, exact=False)


@pytest.fixture
def exact_ring():
    return PolyRing(1, exact=True)
