import pytest

_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: long-running end-to-end acceptance checks")


@pytest.fixture
def report():
    """Record one 'criterion k: PASS/FAIL' line; printed in the terminal summary."""
    def add(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'} | {detail}"
        _LINES.append(line)
        print(line)
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
