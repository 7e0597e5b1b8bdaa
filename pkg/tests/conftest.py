import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pauli_lab.toeplitz import TruncationWarning  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_truncation():
    # the level-cutoff warning fires for most small test configurations
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """Store the one-line verdict of an acceptance criterion."""

    def _record(number: int, passed: bool, detail: str):
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
