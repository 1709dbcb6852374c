import pytest

_results: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")
    _results.clear()


def pytest_runtest_logreport(report):
    # one entry per test, taken from its real outcome
    if report.when == "setup" and report.outcome != "passed" or report.when == "call":
        number = dict(report.user_properties).get("criterion")
        if number is not None:
            detail = dict(report.user_properties).get("detail", "")
            _results.setdefault(number, []).append((report.outcome == "passed", detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entries = _results[number]
        ok = all(passed for passed, _ in entries)
        details = "; ".join(d for _, d in entries if d)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {details}".rstrip())


@pytest.fixture
def criterion(request, record_property):
    """Tag the test with its criterion number; call ``note(text)`` to attach a detail."""
    marker = request.node.get_closest_marker("criterion")
    record_property("criterion", marker.args[0])

    def note(text):
        request.node.user_properties[:] = [p for p in request.node.user_properties if p[0] != "detail"]
        record_property("detail", text)

    return note
