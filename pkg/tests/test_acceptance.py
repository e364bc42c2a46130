"""Acceptance criteria 1-16, one test each, driven through the builtin scenarios."""

import pytest

from conftest import ACCEPTANCE_LINES
from g2forms.report import canonical_bytes, run_builtin
from g2forms.scenarios import BUILTINS

BY_CRITERION = {b.criterion: name for name, b in BUILTINS.items()}

# wall-clock limits in seconds, where a criterion states one
RUNTIME_LIMIT = {1: 1.0, 2: 10.0, 3: 60.0, 4: 60.0, 5: 120.0, 9: 300.0}

# first-run reports, reused by the determinism criterion
FIRST_RUN: dict[str, dict] = {}


def _summary(report: dict) -> str:
    parts = []
    for c in report["checks"]:
        v = c["value"]
        parts.append(f"{c['name']}={v:.4g}" if isinstance(v, float) else f"{c['name']}={v}")
    return ", ".join(parts)


def _record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  [{BY_CRITERION[n]}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.mark.parametrize("n", range(1, 16))
def test_criterion(n):
    name = BY_CRITERION[n]
    report = run_builtin(name)
    FIRST_RUN[name] = report
    seconds = report["timing"]["seconds"]
    limit = RUNTIME_LIMIT.get(n)
    in_time = limit is None or seconds < limit
    detail = f"{_summary(report)}; {seconds:.1f} s" + (f" (limit {limit:g} s)" if limit else "")
    _record(n, report["passed"] and in_time, detail)
    failed = [c["name"] for c in report["checks"] if not c["pass"]]
    assert report["passed"], f"failed checks: {failed}"
    assert in_time, f"took {seconds:.1f} s, limit {limit} s"


def test_criterion_16_determinism():
    differing = []
    for name in sorted(BUILTINS):
        if name == "determinism":
            continue
        first = FIRST_RUN.get(name) or run_builtin(name)
        if canonical_bytes(first) != canonical_bytes(run_builtin(name)):
            differing.append(name)
    own = run_builtin("determinism")
    ok = not differing and own["passed"]
    _record(16, ok, f"{len(BUILTINS) - 1} builtins rerun, differing: {differing or 'none'}; "
                    + _summary(own))
    assert not differing
    assert own["passed"]
