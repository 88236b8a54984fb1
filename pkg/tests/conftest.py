import pytest

ACCEPTANCE_LINES = pytest.StashKey()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda ln: int(ln.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
