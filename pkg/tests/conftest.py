import pytest

# (criterion number, verdict, detail) recorded by the acceptance suite
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(n, ok, detail):
        ACCEPTANCE[n] = ("PASS" if ok else "FAIL", detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {verdict} ({detail})")
