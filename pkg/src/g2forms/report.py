"""Scenario execution and report serialisation.

Reports are plain dictionaries with a fixed key order.  ``dumps`` writes
floats with 17 significant digits; everything except the ``timing`` entry is
a pure function of the scenario, so two runs serialise to the same bytes.
"""

from __future__ import annotations

import csv
import io
import math
import time
from typing import Any

import numpy as np

from . import __version__, g2, sl3c
from .errors import G2FormsError
from .expr import compile_expr
from .exterior import Chart, FormField, basis, exterior_derivative
from .scenarios import (
    BUILTINS,
    NAMED_FIELDS,
    Check,
    Config,
    Outcome,
    above,
    below,
    named_field,
)

SCHEMA = 1
OPERATIONS = ("builtin", "closedness", "torsion", "positivity", "mean-convexity", "solve-maximal")


class ScenarioError(G2FormsError):
    """A scenario failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _emit(obj: Any, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{_string(str(k))}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
               for v in obj):
            out.append("[" + ", ".join(_scalar(v) for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        out.append(_scalar(obj))


def _string(s: str) -> str:
    import json
    return json.dumps(s, ensure_ascii=False)


def _scalar(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _num(float(v))
    if isinstance(v, str):
        return _string(v)
    if isinstance(v, np.ndarray):
        return _scalar(v.tolist()) if v.ndim == 0 else dumps(v.tolist(), 0).strip()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    out: list[str] = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def canonical_bytes(report: dict) -> bytes:
    """Serialised report without the timing entry."""
    return dumps({k: v for k, v in report.items() if k != "timing"}).encode()


def to_csv(report: dict) -> str:
    """Checks as rows, then one block per table (blank line between blocks)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "value", "op", "bound", "pass"])
    for c in report["checks"]:
        b = c["bound"]
        bound = " ".join(format(x, ".17g") for x in b) if isinstance(b, list) else format(b, ".17g")
        w.writerow([c["name"], _plain(c["value"]), c["op"], bound, str(c["pass"]).lower()])
    for name, rows in report.get("tables", {}).items():
        if not rows:
            continue
        buf.write("\n")
        cols = list(rows[0])
        w.writerow(["table:" + name] + cols)
        for r in rows:
            w.writerow([""] + [_plain(r.get(c)) for c in cols])
    return buf.getvalue()


def _plain(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


# ---------------------------------------------------------------------------
# building reports
# ---------------------------------------------------------------------------

def _check_dict(c: Check) -> dict:
    return {"name": c.name, "value": c.value, "op": c.op,
            "bound": list(c.bound) if isinstance(c.bound, tuple) else c.bound,
            "pass": c.passed}


def assemble(scenario: dict, outcome: Outcome, seconds: float) -> dict:
    return {
        "schema": SCHEMA,
        "library": {"name": "g2forms", "version": __version__},
        "scenario": scenario,
        "checks": [_check_dict(c) for c in outcome.checks],
        "values": outcome.values,
        "tables": outcome.tables,
        "passed": outcome.passed,
        "timing": {"seconds": seconds},
    }


def _config_echo(cfg: Config) -> dict:
    return {"grid": cfg.grid, "fd_step": cfg.fd_step, "tol": cfg.tol, "seed": cfg.seed}


def run_builtin(name: str, cfg: Config | None = None) -> dict:
    cfg = cfg or Config()
    if name not in BUILTINS:
        raise ScenarioError([f"unknown builtin {name!r}"])
    b = BUILTINS[name]
    t0 = time.perf_counter()
    outcome = b.run(cfg)
    scenario = {"name": name, "operation": "builtin", "criterion": b.criterion,
                "config": _config_echo(cfg)}
    return assemble(scenario, outcome, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

def validate(sc: Any) -> list[str]:
    """Every problem with a scenario, or an empty list."""
    errs: list[str] = []
    if not isinstance(sc, dict):
        return ["scenario must be a JSON object"]
    if not isinstance(sc.get("name"), str) or not sc.get("name"):
        errs.append("name: required non-empty string")
    op = sc.get("operation")
    if op not in OPERATIONS:
        errs.append(f"operation: must be one of {list(OPERATIONS)}")
    for key, kind in (("grid", int), ("seed", int)):
        if key in sc and (not isinstance(sc[key], int) or isinstance(sc[key], bool)
                          or sc[key] < (2 if key == "grid" else 0)):
            errs.append(f"{key}: must be an integer" + (" >= 2" if key == "grid" else " >= 0"))
    for key in ("tolerance", "fd_step"):
        if key in sc and not (isinstance(sc[key], (int, float)) and not isinstance(sc[key], bool)
                              and sc[key] > 0):
            errs.append(f"{key}: must be a positive number")
    if op == "builtin" and sc.get("builtin") not in BUILTINS:
        errs.append(f"builtin: must be one of {sorted(BUILTINS)}")
    if op in ("closedness", "torsion", "positivity", "mean-convexity"):
        if "field" not in sc:
            errs.append("field: required for this operation")
        else:
            errs.extend(_validate_field(sc["field"], op))
    if op == "solve-maximal":
        errs.extend(_validate_maximal(sc))
    if "points" in sc:
        pts = sc["points"]
        if not (isinstance(pts, list) and pts and all(isinstance(p, list) for p in pts)):
            errs.append("points: must be a non-empty list of coordinate lists")
    return errs


def _validate_field(f: Any, op: str) -> list[str]:
    errs = []
    if isinstance(f, str):
        f = {"builtin": f}
    if not isinstance(f, dict):
        return ["field: must be a builtin name or an object"]
    if "builtin" in f:
        if f["builtin"] not in NAMED_FIELDS:
            errs.append(f"field.builtin: must be one of {list(NAMED_FIELDS)}")
        return errs
    dim, deg = f.get("dim"), f.get("degree")
    if not isinstance(dim, int) or not 1 <= dim <= 8:
        errs.append("field.dim: integer 1..8 required")
        dim = None
    if not isinstance(deg, int) or dim is not None and not 0 <= deg <= dim:
        errs.append("field.degree: integer between 0 and dim required")
        deg = None
    if op in ("torsion", "positivity") and (dim, deg) not in ((7, 3), (6, 3), (None, None)):
        errs.append(f"field: {op} needs a 3-form in dimension 6 or 7")
    if op == "mean-convexity" and (dim, deg) not in ((6, 3), (None, None)):
        errs.append("field: mean-convexity needs a 3-form in dimension 6")
    for key in ("lo", "hi"):
        v = f.get(key)
        if not (isinstance(v, list) and dim is not None and len(v) == dim
                and all(isinstance(a, (int, float)) for a in v)):
            errs.append(f"field.{key}: list of {dim} numbers required")
    comps = f.get("components")
    if not isinstance(comps, dict) or not comps:
        errs.append("field.components: object mapping index strings to expressions required")
    elif dim is not None and deg is not None:
        for key, text in comps.items():
            idx = _parse_index(key)
            if idx is None or len(idx) != deg or any(not 1 <= i <= dim for i in idx):
                errs.append(f"field.components[{key!r}]: need {deg} distinct indices in 1..{dim}")
                continue
            try:
                compile_expr(text, dim)
            except G2FormsError as exc:
                errs.append(f"field.components[{key!r}]: {exc}")
    return errs


def _parse_index(key: str):
    digits = key.replace(",", "").replace(" ", "")
    if not digits.isdigit() and digits != "":
        return None
    idx = tuple(int(c) for c in digits)
    return idx if len(set(idx)) == len(idx) else None


def _validate_maximal(sc: dict) -> list[str]:
    errs = []
    m = sc.get("mesh")
    if not isinstance(m, dict):
        return ["mesh: object with kind, p, n required"]
    if m.get("kind", "box") not in ("box", "ball"):
        errs.append("mesh.kind: 'box' or 'ball'")
    p = m.get("p")
    if p not in (1, 2, 3):
        errs.append("mesh.p: 1, 2 or 3")
        p = None
    if not isinstance(m.get("n", 17), int) or m.get("n", 17) < 3:
        errs.append("mesh.n: integer >= 3")
    bd = sc.get("boundary")
    if not (isinstance(bd, list) and bd and all(isinstance(s, str) for s in bd)):
        errs.append("boundary: non-empty list of expressions required")
    elif p is not None:
        for i, text in enumerate(bd):
            try:
                compile_expr(text, p)
            except G2FormsError as exc:
                errs.append(f"boundary[{i}]: {exc}")
    return errs


def build_field(spec: Any, fd_step: float | None = None) -> tuple[FormField, int]:
    """Field and orientation from a scenario's field entry."""
    if isinstance(spec, str):
        spec = {"builtin": spec}
    if "builtin" in spec:
        nf = named_field(spec["builtin"], fd_step)
        return nf.field, nf.orientation
    dim, deg = spec["dim"], spec["degree"]
    grid = spec.get("grid", 5)
    grid = (grid,) * dim if isinstance(grid, int) else tuple(grid)
    periodic = spec.get("periodic", False)
    periodic = (periodic,) * dim if isinstance(periodic, bool) else tuple(periodic)
    orientation = int(spec.get("orientation", 1))
    chart = Chart(tuple(spec["lo"]), tuple(spec["hi"]), grid, orientation, periodic)
    pos = {K: i for i, K in enumerate(basis(dim, deg))}
    terms = []
    for key, text in spec["components"].items():
        idx = [i - 1 for i in _parse_index(key)]
        order = sorted(idx)
        sign = _perm_sign(idx)
        terms.append((pos[tuple(order)], sign, compile_expr(text, dim)))
    size = len(pos)

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (size,))
        for j, s, f in terms:
            out[..., j] += s * f(x)
        return out

    h = 1e-3 if fd_step is None else fd_step
    return FormField(chart, deg, func, h, 4), orientation


def _perm_sign(seq) -> int:
    from .exterior import perm_sign
    return perm_sign(seq)


def _points(sc: dict, field: FormField) -> np.ndarray:
    if "points" in sc:
        return np.asarray(sc["points"], dtype=float)
    chart = field.chart
    if "grid" in sc:
        chart = chart.with_grid(sc["grid"])
    return chart.grid_points()


def run_scenario(sc: dict, cfg: Config | None = None) -> dict:
    """Validate and execute a scenario dictionary."""
    errs = validate(sc)
    if errs:
        raise ScenarioError(errs)
    cfg = cfg or Config()
    merged = Config(grid=cfg.grid if cfg.grid is not None else sc.get("grid"),
                    fd_step=cfg.fd_step if cfg.fd_step is not None else sc.get("fd_step"),
                    tol=cfg.tol if cfg.tol is not None else sc.get("tolerance"),
                    seed=cfg.seed if cfg.seed else sc.get("seed", 0))
    op = sc["operation"]
    if op == "builtin":
        report = run_builtin(sc["builtin"], merged)
        report["scenario"] = {"file": sc, "config": _config_echo(merged)}
        return report
    t0 = time.perf_counter()
    if op == "solve-maximal":
        outcome = _solve_maximal(sc, merged)
    else:
        fld, orientation = build_field(sc["field"], merged.fd_step)
        if merged.grid is not None and "points" not in sc:
            sc = dict(sc, grid=merged.grid)
        outcome = _FIELD_OPS[op](fld, orientation, _points(sc, fld), merged)
    return assemble({"file": sc, "config": _config_echo(merged)}, outcome,
                    time.perf_counter() - t0)


def _closedness(fld, orientation, x, cfg) -> Outcome:
    tol = cfg.pick("tol", 1e-6)
    d = exterior_derivative(fld)(x)
    per = np.max(np.abs(d), axis=-1) if d.shape[-1] else np.zeros(len(x))
    return Outcome([below("max_abs_d", float(np.max(per, initial=0.0)), tol)],
                   tables={"points": _point_rows(x, {"abs_d": per})})


def _torsion(fld, orientation, x, cfg) -> Outcome:
    tol = cfg.pick("tol", 1e-6)
    if fld.n == 6:
        d = exterior_derivative(fld)(x)
        dt = exterior_derivative(sl3c.rho_tilde_field(fld, orientation))(x)
        return Outcome([below("d_rho", float(np.max(np.abs(d))), tol),
                        below("d_rho_tilde", float(np.max(np.abs(dt))), tol)])
    r = g2.torsion_residual(fld, orientation, x)
    return Outcome([below("d_phi", r.d_phi, tol), below("d_star_phi", r.d_star_phi, tol)])


def _positivity(fld, orientation, x, cfg) -> Outcome:
    c = fld(x)
    if fld.n == 7:
        m = g2.positivity_margin(c, orientation)
        return Outcome([above("min_margin", float(np.min(m)), 0.0)],
                       tables={"points": _point_rows(x, {"margin": m})})
    lam = sl3c.quartic_invariant(c)
    return Outcome([below("max_quartic_invariant", float(np.max(lam)), 0.0)],
                   tables={"points": _point_rows(x, {"quartic_invariant": lam})})


def _mean_convexity(fld, orientation, x, cfg) -> Outcome:
    tol = cfg.pick("tol", 1e-5)
    mc = sl3c.mean_convexity(fld, orientation, x, closed_tol=tol)
    counts = {k: mc.classes.count(k) for k in sl3c.CLASSES}
    return Outcome([below("max_off_type", float(np.max(mc.off_type, initial=0.0)), 1e-4)],
                   values={"classes": counts, "m": mc.m,
                           "mean_convex": mc.mean_convex,
                           "strictly_mean_convex": mc.strictly_mean_convex},
                   tables={"points": _point_rows(x, {"det22": mc.det22})})


def _point_rows(x, cols: dict) -> list[dict]:
    rows = []
    for i, p in enumerate(np.asarray(x).reshape(-1, np.shape(x)[-1])):
        row = {f"x{j + 1}": float(v) for j, v in enumerate(p)}
        row.update({k: float(np.asarray(v).reshape(-1)[i]) for k, v in cols.items()})
        rows.append(row)
    return rows


_FIELD_OPS = {"closedness": _closedness, "torsion": _torsion, "positivity": _positivity,
              "mean-convexity": _mean_convexity}


def _solve_maximal(sc: dict, cfg: Config) -> Outcome:
    from .maximal import ball_mesh, box_mesh, el_residual, perturbation_test, solve_maximal, volume
    m = sc["mesh"]
    p, n = m["p"], cfg.grid or m.get("n", 17)
    mesh = ball_mesh(p, n) if m.get("kind", "box") == "ball" else box_mesh(p, n)
    fs = [compile_expr(text, p) for text in sc["boundary"]]

    def boundary(x):
        return np.stack([f(x) for f in fs], axis=-1)

    tol = cfg.pick("tol", 1e-8)
    g = solve_maximal(mesh, boundary, tol=tol)
    dv = perturbation_test(g, 20, 1e-3, cfg.seed)
    rows = [dict({f"x{j + 1}": float(v) for j, v in enumerate(node)},
                 **{f"u{k + 1}": float(val) for k, val in enumerate(u)})
            for node, u in zip(mesh.nodes, g.u)]
    return Outcome([below("residual", el_residual(g), tol),
                    below("max_volume_change_under_perturbation", float(np.max(dv)), 0.0)],
                   values={"volume": volume(g), "iterations": g.iterations,
                           "nodes": len(mesh.nodes)},
                   tables={"solution": rows})
