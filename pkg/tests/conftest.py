import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def record(request):
    """Log one acceptance criterion's outcome; lines are repeated in the terminal summary."""

    def _record(number, ok, detail, part=""):
        label = f"criterion {number:>2}" + (f" ({part})" if part else "")
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_RESULTS].append((number, part, line))
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash[_RESULTS])
    if rows:
        terminalreporter.section("acceptance criteria")
        for *_, line in rows:
            terminalreporter.write_line(line)
