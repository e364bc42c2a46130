"""Named verification scenarios and example fields.

Every builtin returns an :class:`Outcome`: named checks with their bounds,
auxiliary values and small per-point tables.  All randomness flows from the
configured seed, so repeated runs give identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import g2, sl3c
from .constructions import (
    PhiEps,
    admissible_parameters,
    cobordism,
    jump_example,
    model_path,
    mollify_closed,
    phi_eps_family,
    taming_threshold,
    torus_path,
    _default_collar_points,
)
from .exterior import Chart, FormField, KForm, SmoothMap, constant_field, pullback
from .hypersurface import (
    HypersurfaceData,
    ambient_volume,
    ball_map,
    bound_eq15,
    ellipsoid_cap,
    ellipsoid_samples,
    flat_phi_field,
    induced_volume,
    inward_co_orientation,
    min_det_cuberoot,
    slice_points,
    sphere_angles_map,
    verify_eq9,
    verify_eq10,
    verify_prop1,
)
from .maximal import (
    SpacelikeGraph,
    ball_mesh,
    box_mesh,
    check_eq16,
    cylinder_experiment,
    discrete_volume,
    graph_immersion,
    manufactured_convergence,
    perturbation_test,
    solve_maximal,
    sphere_boundary,
    volume,
)
from .reductions import (
    SpacelikeImmersion,
    baraglia_phi,
    baraglia_rho,
    eps_from_sigmas,
    lemma2_check,
    sigmas_from_eps,
    torus_reduction,
)


@dataclass(frozen=True)
class Config:
    """Overrides shared by all builtins; None keeps the builtin's default."""

    grid: int | None = None
    fd_step: float | None = None
    tol: float | None = None
    seed: int = 0

    def pick(self, name: str, default):
        value = getattr(self, name)
        return default if value is None else value


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    op: str                                  # "<", ">", "in"
    bound: float | tuple[float, float]

    @property
    def passed(self) -> bool:
        v = self.value
        if not math.isfinite(v):
            return False
        if self.op == "<":
            return v < self.bound
        if self.op == ">":
            return v > self.bound
        lo, hi = self.bound
        return lo <= v <= hi


def below(name: str, value, bound: float) -> Check:
    return Check(name, float(value), "<", float(bound))


def above(name: str, value, bound: float) -> Check:
    return Check(name, float(value), ">", float(bound))


def within(name: str, value, lo: float, hi: float) -> Check:
    return Check(name, float(value), "in", (float(lo), float(hi)))


@dataclass
class Outcome:
    checks: list[Check] = field(default_factory=list)
    values: dict[str, object] = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass(frozen=True)
class Builtin:
    name: str
    criterion: int
    summary: str
    run: Callable[[Config], Outcome]


BUILTINS: dict[str, Builtin] = {}


def builtin(name: str, criterion: int, summary: str):
    def register(fn):
        BUILTINS[name] = Builtin(name, criterion, summary, fn)
        return fn
    return register


# ---------------------------------------------------------------------------
# named example fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NamedField:
    field: FormField
    orientation: int
    description: str


def _s6_cap(fd_step: float = 1e-3, half_width: float = 0.5) -> HypersurfaceData:
    amb = flat_phi_field()
    emb = ellipsoid_cap((1.0,) * 7, 6, 1, half_width)
    return HypersurfaceData(amb, emb, inward_co_orientation(amb, emb), fd_step, 2, flat=True)


def _nk_cone() -> FormField:
    """phi_0 in polar coordinates (r, angles) on a shell: the cone over nearly Kaehler S^6."""
    sph = sphere_angles_map()
    sc = sph.source
    lo = (0.5,) + tuple(a + 0.2 for a in sc.lo[:5]) + (0.0,)
    hi = (1.0,) + tuple(b - 0.2 for b in sc.hi[:5]) + (2 * math.pi,)
    source = Chart(lo, hi, (3,) * 7, 1, (False,) * 6 + (True,))
    polar = ball_map()
    m = SmoothMap(source, polar.target, polar.func, polar.jacobian)
    return pullback(flat_phi_field(), m)


def _torus_sigmas(seed: int | None = None, amplitude: float = 0.1, modes: int = 2):
    """Three closed 2-forms on T^3: sigma_i = i_{v_i} dy_123 with divergence-free v_i."""
    ch3 = Chart((0.0,) * 3, (1.0,) * 3, (4, 4, 4), periodic=(True,) * 3)
    if seed is None:
        def V(y, i):
            a = 0.2 * np.sin(2 * np.pi * y[..., 1])
            b = 0.15 * np.cos(2 * np.pi * y[..., 2])
            c = 0.1 * np.sin(2 * np.pi * y[..., 0])
            o, z = np.ones_like(a), np.zeros_like(a)
            return [[o + a, z + 0.1, z], [z, o + b, z], [z + 0.05, z, o + c]][i]
    else:
        rng = np.random.default_rng(seed)
        base = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
        waves = []
        for i in range(3):
            for _ in range(modes):
                k = rng.integers(-2, 3, size=3)
                if not k.any():
                    k[0] = 1
                a = rng.standard_normal(3)
                a -= (a @ k) / (k @ k) * k            # a . k = 0: divergence free
                waves.append((i, k, amplitude * a, rng.uniform(0, 2 * np.pi)))

        def V(y, i):
            v = np.broadcast_to(base[i], y.shape[:-1] + (3,)).copy()
            for j, k, a, ph in waves:
                if j == i:
                    v = v + np.sin(2 * np.pi * (y @ k) + ph)[..., None] * a
            return [v[..., 0], v[..., 1], v[..., 2]]

    def make(i):
        def f(y):
            v = V(np.asarray(y, dtype=float), i)
            return np.stack([v[2], -v[1], v[0]], axis=-1)
        return FormField(ch3, 2, f)

    return [make(i) for i in range(3)]


def _tilted_plane(A=None) -> SpacelikeImmersion:
    """The graph of a small linear map R^3 -> R^3: an exactly maximal 3-fold in R^{3,3}."""
    A = 0.2 * np.array([[1.0, 0.5, 0.0], [0.0, 1.0, -0.5], [0.3, 0.0, 1.0]]) if A is None else A
    ch = Chart((-1.0,) * 3, (1.0,) * 3, (3, 3, 3))
    return SpacelikeImmersion(ch, lambda x: np.concatenate([x, x @ A.T], axis=-1),
                              lambda x: np.broadcast_to(np.vstack([np.eye(3), A]),
                                                        x.shape[:-1] + (6, 3)))


def named_field(name: str, fd_step: float | None = None) -> NamedField:
    """The example fields scenario files may refer to by name."""
    h = 1e-3 if fd_step is None else fd_step
    if name == "flat7":
        return NamedField(constant_field(Chart.box(7, -1.0, 1.0, 3), g2.phi_model(), fd_step=h),
                          1, "phi_0 on [-1, 1]^7")
    if name == "s6":
        # the whole chart box, corners included, has to stay inside the unit ball
        cap = _s6_cap(h, 0.35)
        return NamedField(cap.rho_field, cap.orientation, "induced rho on a cap of the unit S^6")
    if name == "nk_cone":
        return NamedField(_nk_cone().replace(fd_step=h), 1,
                          "cone over nearly Kaehler S^6 (flat R^7 in polar coordinates)")
    if name == "baraglia":
        return NamedField(baraglia_phi(_tilted_plane(), fd_step=h), 1,
                          "phi of an affine maximal 3-fold in R^{3,3} times T^4")
    if name == "torus_reduction":
        td = torus_reduction(_torus_sigmas(), fd_step=h)
        return NamedField(td.rho_field, td.orientation, "rho on T^3 x T^3 from closed sigma_i")
    if name == "phi_eps":
        fam = PhiEps(1.0, 0.1, fd_step=min(h, 1e-4))
        return NamedField(fam.field, 1, "Phi_eps on U_kappa (kappa = 1, eps = 0.1)")
    raise KeyError(name)


NAMED_FIELDS = ("flat7", "s6", "nk_cone", "baraglia", "torus_reduction", "phi_eps")


# ---------------------------------------------------------------------------
# builtins, one per acceptance criterion
# ---------------------------------------------------------------------------

@builtin("model-calibration", 1, "standard structures of rho_0 and phi_0")
def _model_calibration(cfg: Config) -> Outcome:
    d = sl3c.analyze_definite(sl3c.rho_model())
    g = g2.analyze_positive(g2.phi_model())
    dev_I = np.max(np.abs(d.I - sl3c.standard_I()))
    dev_rt = np.max(np.abs(d.rho_tilde.coeffs - sl3c.rho_tilde_model().coeffs))
    dev_g = np.max(np.abs(g.metric - np.eye(7)))
    n2 = g.norm_sq(g.phi)
    return Outcome([below("complex_structure_deviation", dev_I, 1e-12),
                    below("rho_tilde_deviation", dev_rt, 1e-12),
                    below("metric_deviation", dev_g, 1e-12),
                    within("phi_norm_sq", n2, 7 - 1e-10, 7 + 1e-10)])


def _random_definite(rng) -> KForm:
    while True:
        c = sl3c.rho_model().coeffs + 0.2 * rng.standard_normal(20)
        if sl3c.quartic_invariant(c) < 0:
            return KForm(6, 3, c)


@builtin("variation-formulas", 2, "first variations of vol and rho tilde against finite differences")
def _variations(cfg: Config) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.pick("fd_step", 1e-5)
    rho = _random_definite(rng)
    data = sl3c.analyze_definite(rho)
    err_vol = err_rt = 0.0
    rows = []
    for _ in range(50):
        dr = KForm(6, 3, rng.standard_normal(20))
        plus = sl3c.analyze_definite(rho + eps * dr)
        minus = sl3c.analyze_definite(rho - eps * dr)
        fd_vol = (plus.vol.coeffs - minus.vol.coeffs) / (2 * eps)
        fd_rt = (plus.rho_tilde.coeffs - minus.rho_tilde.coeffs) / (2 * eps)
        an_vol = sl3c.delta_vol(data, dr).coeffs
        an_rt = sl3c.delta_rho_tilde(data, dr).coeffs
        e1 = np.linalg.norm(fd_vol - an_vol) / np.linalg.norm(an_vol)
        e2 = np.linalg.norm(fd_rt - an_rt) / np.linalg.norm(an_rt)
        err_vol, err_rt = max(err_vol, e1), max(err_rt, e2)
        rows.append({"vol_rel_error": float(e1), "rho_tilde_rel_error": float(e2)})
    return Outcome([below("vol_variation_rel_error", err_vol, 1e-5),
                    below("rho_tilde_variation_rel_error", err_rt, 1e-5)],
                   tables={"directions": rows})


def _s6_caps(fd_step: float) -> list[HypersurfaceData]:
    amb = flat_phi_field()
    out = []
    for axis in range(7):
        for sign in (1, -1):
            emb = ellipsoid_cap((1.0,) * 7, axis, sign, 0.5)
            out.append(HypersurfaceData(amb, emb, inward_co_orientation(amb, emb),
                                        fd_step, 2, flat=True))
    return out


@builtin("s6-prop1", 3, "both hypersurface identities on the unit S^6 and their step convergence")
def _s6_identities(cfg: Config) -> Outcome:
    n = cfg.pick("grid", 33)
    h = cfg.pick("fd_step", 1e-3)
    planes = [(0, 1), (2, 3), (4, 5)]
    res = {}
    rows = []
    for step in (h, h / 2):
        r1 = r2 = 0.0
        for i, cap in enumerate(_s6_caps(step)):
            x = slice_points(cap.chart, n, planes[i % 3])
            r = verify_prop1(cap, x)
            r1, r2 = max(r1, r.id1_residual), max(r2, r.id2_residual)
            if step == h:
                rows.append({"patch": i, "id1_residual": r.id1_residual,
                             "id2_residual": r.id2_residual,
                             "mu_max_error": float(np.max(np.abs(r.mu - 6.0)))})
        res[step] = (r1, r2)
    (a1, a2), (b1, b2) = res[h], res[h / 2]
    return Outcome([below("id1_residual", a1, 1e-3), below("id2_residual", a2, 1e-3),
                    within("id1_halving_ratio", a1 / b1, 3.5, 4.5),
                    within("id2_halving_ratio", a2 / b2, 3.5, 4.5)],
                   values={"id1_residual_half_step": b1, "id2_residual_half_step": b2},
                   tables={"patches": rows})


SQUASH_RATIO = 1.6


def squashed_axes(r: float = SQUASH_RATIO) -> tuple[float, ...]:
    return (1.0, 1.0, 1 / r, 1 / r, 1 / r ** 2, 1 / r ** 2, 1.0)


@builtin("s6-mean-curvature", 4, "mean curvature against det(d rho~)^(1/3) on round and squashed spheres")
def _s6_mean_curvature(cfg: Config) -> Outcome:
    n = cfg.pick("grid", 600)
    h = cfg.pick("fd_step", 1e-3)
    mu_err = det_err = slack0 = 0.0
    for cap, x in ellipsoid_samples((1.0,) * 7, n, cfg.seed, fd_step=h):
        e = verify_eq9(cap, x)
        mu_err = max(mu_err, float(np.max(np.abs(e.mu - 6))))
        det_err = max(det_err, float(np.max(np.abs(e.det22 - 64))))
        slack0 = max(slack0, float(np.max(np.abs(e.slack))))
    sq = math.inf
    sq12 = math.inf
    for axes, key in ((squashed_axes(), "sq"), (squashed_axes(1.2), "sq12")):
        m = math.inf
        for cap, x in ellipsoid_samples(axes, n, cfg.seed + 1, fd_step=h):
            m = min(m, verify_eq9(cap, x).min_slack)
        if key == "sq":
            sq = m
        else:
            sq12 = m
    d_omega = max(verify_eq10(cap, x[:20]).residual
                  for cap, x in ellipsoid_samples((1.0,) * 7, 60, cfg.seed, fd_step=h))
    return Outcome([below("mu_error", mu_err, 1e-3), below("det22_error", det_err, 0.5),
                    below("round_slack", slack0, 1e-3),
                    above("squashed_min_slack", sq, 0.05)],
                   values={"squash_ratio": SQUASH_RATIO, "ratio_1_2_min_slack": sq12,
                           "d_omega_residual_round": d_omega})


def _volume_bound(axes, fd_step: float, seed: int, samples: int = 400):
    sph = sphere_angles_map(axes)
    amb = flat_phi_field()
    co = inward_co_orientation(amb, sph, center=np.zeros(7))
    vol_n = induced_volume(HypersurfaceData(amb, sph, co, fd_step, 2, flat=True))
    m = min_det_cuberoot(ellipsoid_samples(axes, samples, seed, fd_step=fd_step))
    return bound_eq15(vol_n, m, ambient_volume(amb, ball_map(axes)))


@builtin("ball-eq15", 5, "volume bound 4 Vol(N) / (7 m) on the unit ball and an ellipsoid")
def _ball_volume(cfg: Config) -> Outcome:
    h = cfg.pick("fd_step", 1e-3)
    ball = _volume_bound((1.0,) * 7, h, cfg.seed)
    ell = _volume_bound(squashed_axes(), h, cfg.seed)
    exact = math.pi ** 3.5 / math.gamma(4.5)
    return Outcome([within("ball_ratio", ball.ratio, 0.99, 1.01),
                    above("ellipsoid_slack", ell.slack, 0.0)],
                   values={"ball_lhs": ball.lhs, "ball_rhs": ball.rhs, "ball_slack": ball.slack,
                           "ball_m": ball.m, "ball_exact_volume": exact,
                           "ellipsoid_lhs": ell.lhs, "ellipsoid_rhs": ell.rhs})


def _sphere2(center=(0.0, 0.0, 0.0)) -> SpacelikeImmersion:
    ch = Chart((0.3, 0.2), (2.8, 6.0), (5, 5))
    c = np.asarray(center, dtype=float)

    def f(s):
        th, ph = s[..., 0], s[..., 1]
        z = np.zeros_like(th)
        return np.stack([np.sin(th) * np.cos(ph) + c[0], np.sin(th) * np.sin(ph) + c[1],
                         np.cos(th) + c[2], z, z, z], axis=-1)

    return SpacelikeImmersion(ch, f)


def _hyperboloid() -> SpacelikeImmersion:
    def f(s):
        a, b = s[..., 0], s[..., 1]
        z = np.zeros_like(a)
        return np.stack([a, b, z, np.sqrt(1 + a * a + b * b), z, z], axis=-1)

    return SpacelikeImmersion(Chart((-0.5, -0.5), (0.5, 0.5), (5, 5)), f)


@builtin("type22-corpus", 6, "d rho~ has type (2,2) for every closed example")
def _type22_corpus(cfg: Config) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    h = cfg.pick("fd_step", 1e-3)
    out = Outcome()
    # torus reductions, fixed and random
    for k, sig in enumerate([_torus_sigmas()] + [_torus_sigmas(cfg.seed + s) for s in range(3)]):
        td = torus_reduction(sig, fd_step=h)
        x = rng.uniform(0, 1, (10, 6))
        out.checks.append(below(f"torus_{k}_off_type", _off_type(td.rho_field, x), 1e-5))
    # surfaces in R^{3,3} times T^4
    for name, imm, box in (("sphere", _sphere2(), ((0.5, 0.5), (2.6, 5.5))),
                           ("hyperboloid", _hyperboloid(), ((-0.4, -0.4), (0.4, 0.4)))):
        s = rng.uniform(*box, (10, 2))
        x = np.concatenate([s, rng.uniform(0, 1, (10, 4))], axis=-1)
        out.checks.append(below(f"baraglia_{name}_off_type",
                                _off_type(baraglia_rho(imm, fd_step=h), x), 1e-5))
    cap = _s6_cap(h)
    x = slice_points(cap.chart, 5, (0, 3))
    out.checks.append(below("s6_off_type", float(np.max(
        sl3c.off_type22_fraction(cap.d_rho_tilde(x), cap.complex_structure(x)))), 1e-5))
    return out


def _off_type(rho: FormField, x, orientation: int = 1) -> float:
    from .exterior import exterior_derivative
    sig = exterior_derivative(sl3c.rho_tilde_field(rho, orientation))(x)
    I = sl3c.complex_structure(rho(x), orientation)[0]
    return float(np.max(sl3c.off_type22_fraction(sig, I)))


@builtin("s2-sphere", 7, "d rho~ = vol (x) mu for the unit S^2 in R^{3,3}")
def _s2_sphere(cfg: Config) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    s = rng.uniform((0.5, 0.5), (2.6, 5.5), (cfg.pick("grid", 12), 2))
    r = lemma2_check(_sphere2(), s, fd_step=cfg.pick("fd_step", 1e-3))
    hyp = lemma2_check(_hyperboloid(), rng.uniform(-0.4, 0.4, (6, 2)))
    return Outcome([below("residual", r.residual, 1e-3),
                    below("det22_abs", float(np.max(np.abs(r.det22))), 1e-8),
                    above("criterion_agrees", float(r.criterion_agrees and hyp.criterion_agrees),
                          0.5)],
                   values={"classes": sorted(set(r.classes)),
                           "hyperboloid_classes": sorted(set(hyp.classes))})


@builtin("torus-reduction", 8, "sigma/eps round trip, symmetric S and rho tilde on T^3 x T^3")
def _torus(cfg: Config) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    h = cfg.pick("fd_step", 1e-3)
    trip = asym = eq12 = 0.0
    rows = []
    for k in range(20):
        sig = _torus_sigmas(cfg.seed * 1000 + k)
        td = torus_reduction(sig, fd_step=h)
        x = rng.uniform(0, 1, (8, 6))
        S = td.sigmas(x[:, :3])
        back = sigmas_from_eps(eps_from_sigmas(S))
        e_trip = float(np.max(np.abs(back - S)))
        Sm = td.S(x[:, :3])
        e_asym = float(np.max(np.abs(Sm - np.swapaxes(Sm, -1, -2))))
        e_12 = float(np.max(np.abs(td.rho_tilde_formula(x) - td.rho_tilde_intrinsic(x))))
        trip, asym, eq12 = max(trip, e_trip), max(asym, e_asym), max(eq12, e_12)
        rows.append({"field": k, "round_trip": e_trip, "asymmetry": e_asym, "eq12": e_12})
    return Outcome([below("round_trip", trip, 1e-12), below("S_asymmetry", asym, 1e-8),
                    below("rho_tilde_formula_vs_intrinsic", eq12, 1e-8)],
                   tables={"fields": rows})


def _manufactured():
    def ue(x):
        return 0.2 * np.stack([np.sin(x[..., 0]) * np.exp(0.5 * x[..., 1]),
                               x[..., 0] * x[..., 1]], axis=-1)

    def ge(x):
        a, b = x[..., 0], x[..., 1]
        r1 = np.stack([np.cos(a) * np.exp(0.5 * b), 0.5 * np.sin(a) * np.exp(0.5 * b)], -1)
        r2 = np.stack([b, a], -1)
        return 0.2 * np.stack([r1, r2], axis=-2)

    return ue, ge


def _boundary2(x):
    return 0.2 * np.stack([x[:, 0] ** 2 - x[:, 1] ** 2, x[:, 0] * x[:, 1]], axis=-1)


def _boundary3(x):
    return 0.15 * np.stack([x[:, 0] * x[:, 1], x[:, 1] ** 2 - x[:, 2] ** 2,
                            np.sin(x[:, 0]) * np.cosh(x[:, 2])], axis=-1)


@builtin("maximal-solver", 9, "flat solve, manufactured convergence and the volume maximum")
def _maximal(cfg: Config) -> Outcome:
    tol = cfg.pick("tol", 1e-8)
    n2 = cfg.pick("grid", 65)
    n3 = (n2 + 1) // 2 + 1 if cfg.grid else 33
    out = Outcome()
    # affine data: the discrete solution is the affine map itself
    A = np.array([[0.3, -0.2], [0.1, 0.25]])
    mesh = box_mesh(2, 17)
    g = solve_maximal(mesh, lambda x: x @ A.T, tol=tol)
    out.checks.append(below("flat_error", np.max(np.abs(g.u - mesh.nodes @ A.T)), 1e-10))
    ue, ge = _manufactured()
    cs = manufactured_convergence(ue, ge, 2, (9, 17, 33))
    for i, o in enumerate(cs.orders):
        out.checks.append(within(f"convergence_order_{i}", o, 1.7, 2.3))
    out.tables["convergence"] = [{"n": n, "max_error": e} for n, e in zip(cs.sizes, cs.errors)]
    for p, n, bd in ((2, n2, _boundary2), (3, n3, _boundary3)):
        g = solve_maximal(box_mesh(p, n), bd, tol=tol)
        dv = perturbation_test(g, 100, 1e-3, cfg.seed)
        out.checks.append(below(f"p{p}_max_volume_change", float(np.max(dv)), 0.0))
        out.values[f"p{p}_grid"] = n
        out.values[f"p{p}_iterations"] = g.iterations
        out.values[f"p{p}_volume"] = volume(g)
    return out


@builtin("b3-volume", 10, "Vol(Xi) = ((p-1)/p) Vol(Sigma) / min |mu| for flat balls")
def _b3_volume(cfg: Config) -> Outcome:
    n = cfg.pick("grid", 17)
    g = solve_maximal(ball_mesh(3, n), lambda x: np.zeros((len(x), 3)),
                      tol=cfg.pick("tol", 1e-8))
    r = check_eq16(g, sphere_boundary(3, 3))
    exact = 4 * math.pi / 3
    return Outcome([within("lhs_over_exact", r.lhs / exact, 0.99, 1.01),
                    within("rhs_over_exact", r.rhs / exact, 0.99, 1.01),
                    within("rhs_over_lhs", r.ratio, 0.99, 1.01)],
                   values={"lhs": r.lhs, "rhs": r.rhs, "min_mu": r.min_mu,
                           "boundary_volume": r.boundary_volume})


@builtin("baraglia-torsion", 11, "phi of a maximal 3-fold is torsion free, a perturbed one is not")
def _baraglia(cfg: Config) -> Outcome:
    n = cfg.pick("grid", 17)
    mesh = box_mesh(3, n)
    g = solve_maximal(mesh, _boundary3, tol=cfg.pick("tol", 1e-10))
    rng = np.random.default_rng(cfg.seed)
    pts = np.concatenate([rng.uniform(-0.6, 0.6, (20, 3)), rng.uniform(0, 1, (20, 4))], axis=-1)
    bump = np.prod(1 - mesh.nodes ** 2, axis=1)
    bent = SpacelikeGraph(mesh, g.u + 0.05 * bump[:, None] * np.array([1.0, -1.0, 1.0]))
    h = cfg.pick("fd_step", 1e-3)
    r_max = g2.torsion_residual(baraglia_phi(graph_immersion(g, (3, 3)), fd_step=h), 1, pts)
    r_bent = g2.torsion_residual(baraglia_phi(graph_immersion(bent, (3, 3)), fd_step=h), 1, pts)
    return Outcome([below("maximal_d_star_phi", r_max.d_star_phi, 1e-3),
                    above("perturbed_over_maximal", r_bent.d_star_phi / r_max.d_star_phi, 10.0),
                    below("maximal_d_phi", r_max.d_phi, 1e-6)],
                   values={"perturbed_d_star_phi": r_bent.d_star_phi,
                           "perturbed_d_phi": r_bent.d_phi,
                           "volume_change_of_perturbation": discrete_volume(mesh, bent.u)
                           - volume(g)})


@builtin("cylinder-product", 12, "maximal filling of [0, L] x Xi recovers the product")
def _cylinder(cfg: Config) -> Outcome:
    tol = cfg.pick("tol", 1e-10)
    n = cfg.pick("grid", 17)
    mesh = ball_mesh(2, n)
    data = (lambda x: 0.1 * np.stack([x[:, 0] ** 2 - x[:, 1] ** 2,
                                      np.sin(2 * np.arctan2(x[:, 1], x[:, 0]))], axis=-1),
            lambda x: 0.15 * np.stack([x[:, 0] * x[:, 1], np.cos(x[:, 0]) - np.cos(1.0)],
                                      axis=-1))
    out = Outcome()
    for k, bd in enumerate(data):
        xi = solve_maximal(mesh, bd, tol=tol * 0.1)
        rep = cylinder_experiment(xi, xi, 1.0, 9, tol=tol)
        out.checks.append(below(f"data{k}_product_deviation", rep.product_deviation, 10 * tol))
        out.values[f"data{k}_iterations"] = rep.iterations
        out.values[f"data{k}_residual"] = rep.residual
    return out


@builtin("mollify-jump", 13, "smoothing a jump of omega keeps phi closed and positive")
def _mollify(cfg: Config) -> Outcome:
    eps = 0.05
    f = jump_example("scale")
    m = mollify_closed(f, eps)
    X = _default_collar_points(f.base, 0.0, eps, 13)
    X = X[np.abs(X[:, 6]) > 1e-9]
    rng = np.random.default_rng(cfg.seed)
    X = X[rng.choice(len(X), 60, replace=False)]
    X[:, :6] = rng.uniform(0, 1, (60, 6))
    far = np.concatenate([rng.uniform(0, 1, (40, 6)),
                          rng.choice([-1, 1], 40)[:, None] * rng.uniform(2 * eps, 0.9, (40, 1))],
                         axis=1)
    dev = float(np.max(np.abs(m.phi(far) - f.phi(far))))
    return Outcome([below("closedness", m.closedness_residual(X), 1e-8),
                    above("min_margin", float(np.min(m.margin(X))), 0.0),
                    below("deviation_outside_collar", dev, 1e-12)],
                   values={"epsilon": eps, "collar_residual": m.collar_residual(X)})


@builtin("phi-eps", 14, "Phi_eps family: admissible parameters, degeneration and boundary values")
def _phi_eps(cfg: Config) -> Outcome:
    kappa, eps, margin = admissible_parameters()
    r = phi_eps_family(kappa, eps)
    r0 = phi_eps_family(kappa, 0.0)
    big = phi_eps_family(kappa, 1e3 * eps)
    away = np.linalg.norm(r0.points[:, :6], axis=1) > 0
    return Outcome([above("admissible_min_margin", r.min_margin, 0.0),
                    below("origin_margin_eps0_abs", abs(r0.margin_at_origin), 1e-10),
                    above("eps0_min_margin_away_from_origin", float(np.min(r0.margins[away])), 0.0),
                    within("boundary_mismatch", r.boundary_mismatch, 0.0, 0.0),
                    below("large_eps_min_margin", big.min_margin, 0.0)],
                   values={"kappa": kappa, "eps": eps, "closedness": r.closedness})


@builtin("taming-cobordism", 15, "taming threshold A_star and the assembled cobordism")
def _taming(cfg: Config) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(0, 1, (40, 7))
    path, Om = model_path()
    th = taming_threshold(path, Om, X)
    tpath, tOm = torus_path()
    tth = taming_threshold(tpath, tOm, X)
    A = 2 * tth.A_star
    cob = cobordism(tpath, tOm, A)
    return Outcome([within("model_A_star", th.A_star, 1 - 1e-6, 1 + 1e-6),
                    below("cobordism_collar_residual", cob.collar_residual(X[:10]), 1e-5),
                    above("cobordism_min_margin", float(np.min(cob.margin(X))), 0.0),
                    above("torus_threshold_verified",
                          float(tth.passes_above and tth.fails_below), 0.5)],
                   values={"torus_A_star": tth.A_star})


DETERMINISM_SUBSET = ("model-calibration", "variation-formulas", "s2-sphere", "mollify-jump",
                      "taming-cobordism")


@builtin("determinism", 16, "repeated runs give byte-identical reports")
def _determinism(cfg: Config) -> Outcome:
    from .report import canonical_bytes, run_builtin
    out = Outcome()
    for name in DETERMINISM_SUBSET:
        a = canonical_bytes(run_builtin(name, cfg))
        b = canonical_bytes(run_builtin(name, cfg))
        out.checks.append(below(f"{name}_differs", float(a != b), 0.5))
    return out
