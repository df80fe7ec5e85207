import pytest

_CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, text): acceptance criterion id and summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label, text = marker.args
    entry = _CRITERIA.setdefault(label, {"text": text, "passed": True, "ran": False, "details": []})
    if report.when == "call" or report.failed:
        entry["ran"] = True
        entry["passed"] &= report.passed
        entry["details"].extend(v for k, v in item.user_properties if k == "detail")
        item.user_properties[:] = [p for p in item.user_properties if p[0] != "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: int(s.split()[0])):
        entry = _CRITERIA[label]
        status = "PASS" if entry["passed"] and entry["ran"] else ("FAIL" if entry["ran"] else "SKIP")
        line = f"criterion {label}: {status}  {entry['text']}"
        if entry["details"]:
            line += "  [" + "; ".join(entry["details"]) + "]"
        terminalreporter.write_line(line)
