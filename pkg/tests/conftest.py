import pytest

_results: dict[int, tuple[str, bool]] = {}
_notes: dict[int, list[str]] = {}


@pytest.fixture
def note(request):
    """Attach a measured value to the summary line of the test's criterion."""
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else 0
    return lambda text: _notes.setdefault(number, []).append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, title = marker.args
    ok = rep.passed if rep.when == "call" else not rep.failed
    prev = _results.get(number, (title, True))[1]
    _results[number] = (title, prev and ok and not rep.skipped)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok = _results[number]
        extra = "; ".join(_notes.get(number, []))
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        terminalreporter.write_line(f"{line} ({extra})" if extra else line)
