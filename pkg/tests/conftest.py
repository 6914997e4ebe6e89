import numpy as np
import pytest

from noonsim.fock import ModeRegistry, make_state
from noonsim.optics import beam_splitter

_ACCEPTANCE = []


@pytest.fixture
def bs50():
    return beam_splitter(0.5)


@pytest.fixture
def two_modes():
    return ModeRegistry(("M", "N"), 4)


@pytest.fixture
def noon(two_modes):
    return make_state(two_modes, [((2, 0), 1.0), ((0, 2), 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20170621)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(name, passed, detail=""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
