import pytest

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(number, passed, detail):
    """Store and print one acceptance line; sub-checks of a criterion are combined."""
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    old = ACCEPTANCE.get(number)
    total = passed if old is None else passed and old[0]
    ACCEPTANCE[number] = (total, detail if old is None else f"{old[1]}; {detail}")
    return passed


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
