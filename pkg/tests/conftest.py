import pytest

# filled by tests/test_acceptance.py: criterion id -> (passed, detail)
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(key: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[key] = (bool(passed), detail)
        print(f"{key}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[1].rstrip(":"))):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if passed else 'FAIL'}  {detail}")
