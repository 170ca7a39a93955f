"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_outcomes: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        prev = _outcomes.get(n, (title, "PASS", ""))
        status = "FAIL" if failed or prev[1] == "FAIL" else "PASS"
        note = getattr(item, "criterion_note", "") or prev[2]
        _outcomes[n] = (title, status, note)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        title, status, note = _outcomes[n]
        line = f"criterion {n}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{note}]" if note else ""))


@pytest.fixture
def note(request):
    """Attach a short measurement to the criterion line."""

    def set_note(text: str) -> None:
        request.node.criterion_note = text

    return set_note
