from __future__ import annotations

import pytest

# criterion id -> (passed, detail), filled in by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion."""

    def record(key: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE[key] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {detail}")
