import pytest

# (criterion id, outcome, description, detail) in the order tests finish
_ACCEPTANCE: list[tuple[str, str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id, description): an acceptance criterion with a summary line")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    failed_setup = report.when == "setup" and report.failed
    if report.when == "call" or failed_setup:
        cid, desc = marker.args
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if failed_setup:
            detail = f"setup failed: {call.excinfo.value!r}" if call.excinfo else "setup failed"
        _ACCEPTANCE.append((cid, "PASS" if report.passed else "FAIL", desc, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, status, desc, detail in sorted(_ACCEPTANCE, key=lambda r: (len(r[0]), r[0])):
        terminalreporter.write_line(f"{cid:6s} {status}  {desc}" + (f"  [{detail}]" if detail else ""))
