import pytest

N_CRITERIA = 12


def pytest_configure(config):
    config.acceptance = {}


@pytest.fixture
def record(request):
    """record(n, ok, detail): store one acceptance verdict for the summary."""
    def _record(n, ok, detail=""):
        request.config.acceptance[n] = (bool(ok), detail)
        print(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    res = config.acceptance
    if not res:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        ok, detail = res.get(n, (False, "not run or errored before a verdict"))
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
