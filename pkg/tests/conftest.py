import pytest

_AC_LINES = {}


@pytest.fixture(scope="session")
def ac_record():
    """Record one acceptance verdict line, printed again in the terminal summary."""

    def record(name: str, ok: bool, detail: str):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _AC_LINES[name] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _AC_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_AC_LINES, key=lambda s: int(s.split("-")[1])):
        terminalreporter.write_line(_AC_LINES[name])
