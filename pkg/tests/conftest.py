import pytest

_GATE = []


def pytest_addoption(parser):
    parser.addoption("--fullscale", action="store_true", default=False,
                     help="run the full-scale 256-QAM configuration (hours to days)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--fullscale"):
        return
    skip = pytest.mark.skip(reason="needs --fullscale")
    for item in items:
        if "fullscale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def gate():
    """``gate(number, title, ok, detail)`` prints and records one PASS/FAIL line, then asserts."""

    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        _GATE.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _GATE:
        terminalreporter.section("acceptance gate")
        for line in _GATE:
            terminalreporter.write_line(line)
