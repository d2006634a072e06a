import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rmabkit import SolverConfig  # noqa: E402

# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def solver():
    return SolverConfig()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
