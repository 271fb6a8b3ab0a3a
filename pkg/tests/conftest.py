import numpy as np
import pytest

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Store one acceptance verdict; printed in the terminal summary."""
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        passed = passed and prev[0]
        detail = prev[1] if not prev[0] else detail
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
