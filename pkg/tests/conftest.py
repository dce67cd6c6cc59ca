"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_results: dict[int, tuple[str, list[bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results.setdefault(n, (title, []))[1].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, oks = _results[n]
        verdict = "PASS" if oks and all(oks) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}")
