import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """Record the verdict of one acceptance criterion, then assert it."""
    def report(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        assert passed, detail
    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 13):
        if number in ACCEPTANCE:
            passed, detail = ACCEPTANCE[number]
            terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {number:2d}: NOT RUN")
