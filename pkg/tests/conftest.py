import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = mark.args
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _RESULTS[number] = (title, report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome, detail = _RESULTS[number]
        tag = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{tag}] {number:2d}. {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
    passed = sum(1 for _, o, _ in _RESULTS.values() if o == "passed")
    terminalreporter.write_line(f"{passed}/{len(_RESULTS)} criteria passed")
