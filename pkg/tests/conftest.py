from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the test still asserts on its own."""

    def record(number: int, name: str, passed: bool, detail: str):
        ACCEPTANCE[number] = (name, bool(passed), detail)

    return record


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return REPO_ROOT / "configs"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}")
