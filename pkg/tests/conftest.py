import pytest

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the terminal summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    name = marker.args[0]
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    if rep.failed:
        _criteria[name] = ("FAIL", detail)
    elif rep.when == "call":
        _criteria.setdefault(name, ("PASS" if rep.passed else "SKIP", detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in _criteria.items():
        terminalreporter.write_line(f"{status} {name}" + (f" ({detail})" if detail else ""))
