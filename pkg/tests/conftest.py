import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, {"title": title, "ok": True, "ran": False, "detail": []})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["ok"] = False
        entry["detail"].append(item.name)
    for key, value in getattr(item, "user_properties", []):
        if key == "measured":
            entry["detail"].append(str(value))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        detail = "; ".join(e["detail"])
        terminalreporter.write_line(f"[{status}] criterion {num:2d}: {e['title']}"
                                    + (f"  ({detail})" if detail else ""))
