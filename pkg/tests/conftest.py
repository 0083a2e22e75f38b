import pytest

# filled by test_acceptance.py; one entry per exit criterion
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an exit criterion, printed again in the terminal summary."""
    state = {"detail": ""}

    def report(number: int, detail: str = ""):
        state["number"] = number
        state["detail"] = detail

    yield report
    number = state.get("number")
    if number is None:
        return
    call = getattr(request.node, "rep_call", None)
    ok = call is not None and call.passed
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {state['detail']}".rstrip()
    ACCEPTANCE_LINES[number] = line
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
