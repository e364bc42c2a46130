#!/usr/bin/env python3
"""Run the builtin scenarios and print one pass/fail line per acceptance criterion.

    python3 scripts/run_acceptance.py                 # all criteria
    python3 scripts/run_acceptance.py 1 4 7           # a subset
    python3 scripts/run_acceptance.py --json out/     # also save each report
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from g2forms.report import dumps, run_builtin
from g2forms.scenarios import BUILTINS


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("criteria", nargs="*", type=int, help="criterion numbers (default: all)")
    p.add_argument("--json", type=Path, metavar="DIR", help="write <builtin>.json reports here")
    args = p.parse_args(argv)

    builtins = sorted(BUILTINS.values(), key=lambda b: b.criterion)
    if args.criteria:
        builtins = [b for b in builtins if b.criterion in args.criteria]
    if args.json:
        args.json.mkdir(parents=True, exist_ok=True)

    failures = 0
    for b in builtins:
        report = run_builtin(b.name)
        ok = report["passed"]
        failures += not ok
        secs = report["timing"]["seconds"]
        print(f"criterion {b.criterion:2d}  {'PASS' if ok else 'FAIL'}  {b.name:18s} {secs:7.1f} s",
              flush=True)
        for c in report["checks"]:
            bound = c["bound"]
            bound = "[" + ", ".join(f"{x:.3g}" for x in bound) + "]" \
                if isinstance(bound, list) else f"{bound:.3g}"
            value = f"{c['value']:.6g}" if isinstance(c["value"], float) else str(c["value"])
            print(f"      {'ok ' if c['pass'] else 'BAD'} {c['name']:38s} {value:>14s} "
                  f"{c['op']} {bound}")
        if args.json:
            (args.json / f"{b.name}.json").write_text(dumps(report), encoding="utf-8")
    print(f"{len(builtins) - failures}/{len(builtins)} criteria passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
