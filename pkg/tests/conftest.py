"""Shared fixtures and the acceptance summary printed after a run."""
import re

import pytest

_CRITERION_RE = re.compile(r"test_a(\d)\b|test_a(\d)_")
_results: dict[str, list[bool]] = {}


def _criterion_of(nodeid: str) -> str | None:
    name = nodeid.rsplit("::", 1)[-1]
    m = re.match(r"test_a(\d)", name)
    if m and "test_acceptance" in nodeid:
        return f"A{m.group(1)}"
    return None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    crit = _criterion_of(item.nodeid)
    if crit is not None:
        _results.setdefault(crit, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_results):
        ok = all(_results[crit])
        n = len(_results[crit])
        terminalreporter.write_line(
            f"{crit}: {'PASS' if ok else 'FAIL'} ({n} check{'s' if n > 1 else ''})"
        )
