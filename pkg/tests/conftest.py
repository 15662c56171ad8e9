"""Per-criterion PASS/FAIL summary for tests marked ``@pytest.mark.criterion(n, text)``."""

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        ok = report.passed
        prev = _results.get(number)
        _results[number] = (text, ok and (prev is None or prev[1]), round(call.duration, 1))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        text, ok, secs = _results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  ({secs:7.1f} s)  {text}")
