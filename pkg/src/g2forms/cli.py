"""Command line entry point: ``g2forms verify|list-builtins|solve-maximal|report``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import G2FormsError
from .report import (
    ScenarioError,
    dumps,
    run_builtin,
    run_scenario,
    to_csv,
)
from .scenarios import BUILTINS, Config

OUT_DIR_ENV = "G2FORMS_OUT_DIR"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, help="override the main grid size")
    common.add_argument("--fd-step", type=float, help="override the finite-difference step")
    common.add_argument("--tol", type=float, help="override the solver / check tolerance")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", type=Path,
                        help=f"output file (default: ${OUT_DIR_ENV}/<name>.<ext> or stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    p = argparse.ArgumentParser(prog="g2forms", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run a scenario file or builtin")
    v.add_argument("scenario", help="path to a scenario JSON file or a builtin name")
    sub.add_parser("list-builtins", help="list builtin scenarios")
    s = sub.add_parser("solve-maximal", parents=[common], help="solve a maximal graph scenario")
    s.add_argument("scenario", help="scenario JSON with operation solve-maximal")
    r = sub.add_parser("report", help="re-emit a saved JSON report")
    r.add_argument("report", type=Path)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--out", type=Path)
    return p


def _config(args) -> Config:
    return Config(grid=args.grid, fd_step=args.fd_step, tol=args.tol, seed=args.seed)


def _load_scenario(arg: str) -> dict:
    path = Path(arg)
    if not path.exists():
        if arg in BUILTINS:
            return {"name": arg, "operation": "builtin", "builtin": arg}
        raise ScenarioError([f"{arg!r} is neither a file nor a builtin name"])
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})"]) from None


def _render(report: dict, fmt: str) -> str:
    return to_csv(report) if fmt == "csv" else dumps(report)


def _write(text: str, out: Path | None, name: str, fmt: str) -> None:
    if out is None and os.environ.get(OUT_DIR_ENV):
        out = Path(os.environ[OUT_DIR_ENV]) / f"{name}.{fmt}"
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")


def _errors(errors: list[str]) -> int:
    sys.stdout.write(dumps({"schema": 1, "passed": False, "errors": errors}))
    return 2


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-builtins":
        for b in sorted(BUILTINS.values(), key=lambda b: b.criterion):
            print(f"{b.name:20s} {b.criterion:2d}  {b.summary}")
        return 0
    if args.command == "report":
        try:
            report = json.loads(args.report.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            return _errors([f"{args.report}: {exc}"])
        _write(_render(report, args.format), args.out, args.report.stem, args.format)
        return 0
    try:
        sc = _load_scenario(args.scenario)
        if args.command == "solve-maximal" and isinstance(sc, dict) \
                and sc.get("operation") != "solve-maximal":
            raise ScenarioError(["operation: solve-maximal expected"])
        if isinstance(sc, dict) and sc.get("operation") == "builtin" and set(sc) <= {
                "name", "operation", "builtin"}:
            report = run_builtin(sc["builtin"], _config(args))
        else:
            report = run_scenario(sc, _config(args))
    except ScenarioError as exc:
        return _errors(exc.errors)
    except G2FormsError as exc:
        return _errors([f"{type(exc).__name__}: {exc}"])
    name = sc.get("name", "report") if isinstance(sc, dict) else "report"
    _write(_render(report, args.format), args.out, name, args.format)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
