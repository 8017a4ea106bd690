import numpy as np
import pytest

from chemosched.core import FirstStageSolution, make_instance

EXAMPLE_APPOINTMENTS = [0, 115, 58, 168, 166, 15, 251, 0, 234]
EXAMPLE_DURATIONS = [39, 117, 23, 38, 73, 161, 25, 185, 31]
EXAMPLE_NURSE = [0, 1, 0, 1, 0, 1, 0, 1, 0]
EXAMPLE_CHAIR = [0, 0, 0, 2, 1, 2, 0, 1, 2]


@pytest.fixture
def worked_example():
    inst = make_instance([EXAMPLE_DURATIONS], n_nurses=2, n_chairs=3, flex_limit=0)
    sol = FirstStageSolution.from_appointments(EXAMPLE_APPOINTMENTS, EXAMPLE_NURSE, EXAMPLE_CHAIR)
    return inst, sol


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
