"""Shared fixtures; collects acceptance outcomes and prints one line per criterion."""
from collections import defaultdict

import pytest

CRITERIA = {
    1: "even-power guarantee",
    2: "odd-power guarantee",
    3: "three/four-matrix bounds",
    4: "SRHT subspace embedding and FWHT involution",
    5: "kernel factor spectral sandwich and Taylor tail",
    6: "kernel regression end to end",
    7: "iteration and runtime scaling",
    8: "structural fact suite",
}

RESULTS = defaultdict(list)


@pytest.fixture
def record():
    """``record(criterion, clause, ok, detail)`` stores one clause outcome."""

    def _record(criterion: int, clause: str, ok: bool, detail: str = "") -> bool:
        RESULTS[criterion].append((clause, bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(CRITERIA):
        clauses = RESULTS.get(c)
        if not clauses:
            tr.write_line(f"criterion {c} ({CRITERIA[c]}): NOT RUN")
            continue
        ok = all(flag for _, flag, _ in clauses)
        tr.write_line(f"criterion {c} ({CRITERIA[c]}): {'PASS' if ok else 'FAIL'}")
        for clause, flag, detail in clauses:
            tr.write_line(f"    [{'pass' if flag else 'FAIL'}] {clause}: {detail}")
