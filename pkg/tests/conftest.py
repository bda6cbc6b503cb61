import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from contoursim.synthetic import make_fixture_dataset  # noqa: E402

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


class _Notes:
    def __init__(self, node):
        self.node = node

    def __call__(self, text: str) -> None:
        self.node.user_properties.append(("acceptance_note", text))


@pytest.fixture
def note(request):
    """Record a measured value for the acceptance summary line."""
    return _Notes(request.node)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = marker.args
        entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "notes": [], "tests": 0})
        entry["tests"] += 1
        entry["ok"] &= rep.outcome == "passed"
        entry["notes"].extend(v for k, v in item.user_properties if k == "acceptance_note")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"ACCEPTANCE [{status}] {number:2d} {e['title']}" + (f" -- {notes}" if notes else ""))


@pytest.fixture
def fixture_root(tmp_path):
    return make_fixture_dataset(tmp_path / "fixture")


@pytest.fixture(scope="session")
def shared_fixture_root(tmp_path_factory):
    return make_fixture_dataset(tmp_path_factory.mktemp("shared") / "fixture")
