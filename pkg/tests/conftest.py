import pytest

ACCEPTANCE = {}
N_CRITERIA = 13


@pytest.fixture
def criterion():
    """Record one acceptance line: ``record(n, ok, detail)`` returns ``ok``."""

    def record(n, ok, detail=""):
        ok = bool(ok)
        ACCEPTANCE[n] = (ok, detail)
        print(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    ran = any("test_acceptance" in r.nodeid
              for key in ("passed", "failed", "error")
              for r in terminalreporter.stats.get(key, []))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
        else:
            terminalreporter.write_line(f"CRITERION {n}: NOT RUN (deselected or errored before recording)")
