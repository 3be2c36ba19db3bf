import pytest

from asap.packager import PackagerParams

# criterion number -> {"title", "failed", "details"}
_ACCEPTANCE: dict[int, dict] = {}


def _entry(marker) -> dict:
    return _ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "failed": False, "details": []})


@pytest.fixture
def defaults():
    return PackagerParams()


@pytest.fixture
def note(request):
    """Attach a measurement summary to the running acceptance criterion."""
    entry = _entry(request.node.get_closest_marker("criterion"))
    return entry["details"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _entry(marker)
    if rep.failed:
        entry["failed"] = True


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        line = f"criterion {n:2d} {'FAIL' if e['failed'] else 'PASS'}: {e['title']}"
        if e["details"]:
            line += " | " + "; ".join(e["details"])
        terminalreporter.write_line(line)
