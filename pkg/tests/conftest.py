import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rs():
    return np.random.default_rng(1234)


# -- acceptance summary ---------------------------------------------------------------
# Tests marked ``@pytest.mark.criterion("A1", title=...)`` are folded into one
# PASS/FAIL line per criterion, printed at the end of every pytest session.

_CRITERIA: dict[str, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed and not rep.skipped):
        return
    entry = _CRITERIA.setdefault(
        marker.args[0],
        {"title": marker.kwargs.get("title", ""), "optional": marker.kwargs.get("optional", False), "status": "PASS", "details": []},
    )
    if rep.failed:
        entry["status"] = "FAIL"
    elif rep.skipped and entry["status"] == "PASS":
        entry["status"] = "SKIP"
    if rep.when == "call" or rep.skipped:
        entry["details"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        e = _CRITERIA[cid]
        note = " (optional, non-gating)" if e["optional"] else ""
        terminalreporter.write_line(f"{cid} {e['status']}: {e['title']}{note}")
        for d in e["details"]:
            terminalreporter.write_line(f"    {d}")
