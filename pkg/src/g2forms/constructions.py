"""Explicit constructions of closed G2 structures on collars and model domains.

A collar N x [t0, t1] carries phi = rho_t + omega_t ^ dt (t is the last
coordinate); phi is closed exactly when d_N rho_t = 0 and
d rho_t / dt = d_N omega_t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import g2
from .errors import NoAdmissibleParameters, NotClosed, OmegaNotTaming, PositivityLost
from .exterior import Chart, FormField, basis, exterior_derivative, integrate, wedge_coeffs
from .sl3c import complex_structure, omega_model, rho_model, taming_matrix
from .reductions import lift

CollarFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]

_DT = np.eye(7)[6]


def assemble_coeffs(rho: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Coefficients of rho + omega ^ dt on R^7 from forms on R^6."""
    return lift(rho, 6, 3, 0, 7) + wedge_coeffs(lift(omega, 6, 2, 0, 7), _DT, 7, 2, 1)


# ---------------------------------------------------------------------------
# smooth cut-offs and bumps
# ---------------------------------------------------------------------------

def _psi(x):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def _dpsi(x):
    with np.errstate(divide="ignore", over="ignore"):
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > 0, np.exp(-1.0 / xs) / xs ** 2, 0.0)


def smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    a, b = _psi(x), _psi(1.0 - x)
    return a / (a + b)


def smoothstep_deriv(x):
    x = np.asarray(x, dtype=float)
    a, b = _psi(x), _psi(1.0 - x)
    da, db = _dpsi(x), -_dpsi(1.0 - x)
    return (da * (a + b) - a * (da + db)) / (a + b) ** 2


def cutoff(r, inner: float, outer: float):
    """1 for r <= inner, 0 for r >= outer, smooth in between."""
    return 1.0 - smoothstep((np.asarray(r, dtype=float) - inner) / (outer - inner))


def cutoff_deriv(r, inner: float, outer: float):
    return -smoothstep_deriv((np.asarray(r, dtype=float) - inner) / (outer - inner)) / (outer - inner)


BUMP_POWER = 4
_BUMP_NORM = 315.0 / 256.0          # 1 / int_{-1}^{1} (1 - s^2)^4 ds


def bump(s, eps: float):
    """Even mollifier supported in [-eps, eps] with unit integral (C^3)."""
    s = np.asarray(s, dtype=float) / eps
    return np.where(np.abs(s) < 1, _BUMP_NORM * (1 - s * s) ** BUMP_POWER, 0.0) / eps


# ---------------------------------------------------------------------------
# collars
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CollarField:
    """rho_t + omega_t ^ dt on base x [t0, t1]; ``rho(x, t)``, ``omega(x, t)`` vectorised."""

    base: Chart
    t_range: tuple[float, float]
    rho: CollarFunc
    omega: CollarFunc
    jump: float | None = None
    t_grid: int = 9
    fd_step: float = 1e-3
    fd_order: int = 4

    @property
    def chart(self) -> Chart:
        b = self.base
        return Chart(b.lo + (self.t_range[0],), b.hi + (self.t_range[1],),
                     b.grid + (self.t_grid,), b.orientation, b.periodic + (False,))

    def phi(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        x, t = X[..., :6], X[..., 6]
        return assemble_coeffs(self.rho(x, t), self.omega(x, t))

    @property
    def phi_field(self) -> FormField:
        return FormField(self.chart, 3, self.phi, self.fd_step, self.fd_order)

    def closedness_residual(self, points) -> float:
        """max |d phi| (covers d_N rho = 0 and the collar equation)."""
        d = exterior_derivative(self.phi_field)(np.asarray(points, dtype=float))
        return float(np.max(np.abs(d), initial=0.0))

    def collar_residual(self, points) -> float:
        """max |d rho / dt - d_N omega| at the given 7-dimensional points."""
        X = np.asarray(points, dtype=float)
        h = self.fd_step
        e = np.zeros(7)
        e[6] = h
        drho_dt = (self.phi(X + e) - self.phi(X - e)) / (2 * h)
        pos = {K: i for i, K in enumerate(basis(7, 3))}
        rows = [pos[K] for K in basis(6, 3)]
        omega_field = FormField(self.chart, 2, lambda Y: lift(self.omega(Y[..., :6], Y[..., 6]),
                                                              6, 2, 0, 7),
                                self.fd_step, self.fd_order)
        d_omega = exterior_derivative(omega_field)(X)
        diff = drho_dt[..., rows] - d_omega[..., rows]
        return float(np.max(np.abs(diff), initial=0.0))

    def margin(self, points) -> np.ndarray:
        return g2.positivity_margin(self.phi(np.asarray(points, dtype=float)))


# ---------------------------------------------------------------------------
# mollification across a jump of omega
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _convolve(f: CollarFunc, x, t, eps: float, jump: float) -> np.ndarray:
    """(f * bump_eps)(t) with the quadrature split at the jump (exact for polynomials in t)."""
    t = np.asarray(t, dtype=float)
    out = 0.0
    for lo, hi in ((-eps * np.ones_like(t), np.clip(t - jump, -eps, eps)),
                   (np.clip(t - jump, -eps, eps), eps * np.ones_like(t))):
        half = 0.5 * (hi - lo)
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = lo + half * (node + 1.0)
            val = f(x, t - s)
            out = out + (w * half * bump(s, eps))[..., None] * val
    return out


def _primitive_defect(omega: CollarFunc, x, t, eps: float) -> np.ndarray:
    """(W * bump - W)(t) for W' = omega, assuming omega is smooth on [t - eps, t + eps]."""
    out = 0.0
    for node, w in zip(_GL_NODES, _GL_WEIGHTS):
        s = eps * node
        inner = 0.0
        for r, wr in zip(_GL_NODES, _GL_WEIGHTS):
            inner = inner + 0.5 * wr * omega(x, t - s * 0.5 * (r + 1.0))
        out = out - (w * eps * bump(s, eps) * s) * inner
    return out


def mollify_closed(field: CollarField, epsilon: float, points=None) -> CollarField:
    """Smooth a collar whose omega jumps, keeping phi closed and unchanged away from the jump.

    On the collar phi = rho_{t0} + dW with W(t) the integral of omega.
    Replacing W by (1 - chi) W + chi (W * bump) with a cut-off chi equal to
    1 within epsilon of the jump and 0 beyond 2 epsilon gives a closed form;
    near the jump it is an average of the input, so it stays in the positive
    cone.  ``points`` (7-dim) are used to check positivity; by default a
    grid over the base times t-samples across the collar of the jump.
    """
    if field.jump is None:
        raise ValueError("field has no jump to smooth")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    j = float(field.jump)
    t0, t1 = field.t_range
    if j - 3 * epsilon < t0 or j + 3 * epsilon > t1:
        raise ValueError("the collar must extend 3 epsilon on both sides of the jump")
    rho_in, omega_in = field.rho, field.omega

    def chi(t):
        return cutoff(np.abs(t - j), epsilon, 2 * epsilon)

    def dchi(t):
        return cutoff_deriv(np.abs(t - j), epsilon, 2 * epsilon) * np.sign(t - j)

    def rho(x, t):
        t = np.asarray(t, dtype=float)
        base = rho_in(x, t)
        c = chi(t)
        if not np.any(c > 0):
            return base
        return base + c[..., None] * (_convolve(rho_in, x, t, epsilon, j) - base)

    def omega(x, t):
        t = np.asarray(t, dtype=float)
        base = omega_in(x, t)
        c, dc = chi(t), dchi(t)
        out = base
        if np.any(c > 0):
            out = out + c[..., None] * (_convolve(omega_in, x, t, epsilon, j) - base)
        if np.any(dc != 0):
            far = np.abs(t - j) > epsilon
            tt = np.where(far, t, j + 2 * epsilon)       # keep the quadrature off the jump
            out = out + (dc * far)[..., None] * _primitive_defect(omega_in, x, tt, epsilon)
        return out

    out = CollarField(field.base, field.t_range, rho, omega, None, field.t_grid,
                      field.fd_step, field.fd_order)
    X = _default_collar_points(field.base, j, epsilon) if points is None else points
    m = out.margin(X)
    k = int(np.argmin(m))
    if m[k] <= 0:
        raise PositivityLost(
            {"point": np.asarray(X)[k].tolist(), "epsilon": epsilon}, float(m[k]))
    return out


def _default_collar_points(base: Chart, j: float, eps: float, n_t: int = 25) -> np.ndarray:
    x = base.with_grid(tuple(min(g, 3) for g in base.grid)).grid_points()
    t = j + np.linspace(-3 * eps, 3 * eps, n_t)
    X = np.concatenate([np.repeat(x, len(t), axis=0), np.tile(t, len(x))[:, None]], axis=1)
    return X


def torus6(grid: int = 3) -> Chart:
    return Chart((0.0,) * 6, (1.0,) * 6, (grid,) * 6, periodic=(True,) * 6)


def jump_example(kind: str = "scale", t_half: float = 1.0, amplitude: float = 0.05) -> CollarField:
    """Closed collars over the flat 6-torus whose omega jumps at t = 0.

    ``scale``: omega_0 below, 2 omega_0 above, rho = rho_0.
    ``wave``: omega_t = omega_0 + a(t) beta with a jump in a, rho_t = rho_0 + A(t) d beta.
    ``nontaming``: omega_0 below, -omega_0 above (leaves the positive cone).
    """
    r0, w0 = rho_model().coeffs, omega_model().coeffs
    pos2 = {K: i for i, K in enumerate(basis(6, 2))}
    pos3 = {K: i for i, K in enumerate(basis(6, 3))}

    def rho_const(x, t):
        return np.broadcast_to(r0, np.shape(t) + (20,)).copy()

    if kind == "scale":
        def omega(x, t):
            c = np.where(np.asarray(t) >= 0, 2.0, 1.0)
            return c[..., None] * w0
        rho = rho_const
    elif kind == "nontaming":
        def omega(x, t):
            c = np.where(np.asarray(t) >= 0, -1.0, 1.0)
            return c[..., None] * w0
        rho = rho_const
    elif kind == "wave":
        def a(t):
            return np.where(np.asarray(t) >= 0, 2.0, 1.0)

        def omega(x, t):
            out = np.broadcast_to(w0, np.shape(t) + (15,)).copy()
            out[..., pos2[(2, 3)]] += amplitude * a(t) * np.sin(2 * np.pi * x[..., 0])
            return out

        def rho(x, t):
            t = np.asarray(t, dtype=float)
            A = t * a(t)                                 # integral of a from 0
            out = np.broadcast_to(r0, np.shape(t) + (20,)).copy()
            out[..., pos3[(0, 2, 3)]] += (2 * np.pi * amplitude * A
                                          * np.cos(2 * np.pi * x[..., 0]))
            return out
    else:
        raise ValueError(f"unknown example {kind!r}")
    return CollarField(torus6(), (-t_half, t_half), rho, omega, jump=0.0)


# ---------------------------------------------------------------------------
# the family Phi_eps on U_kappa
# ---------------------------------------------------------------------------

def radial_primitive(x: np.ndarray) -> np.ndarray:
    """eta = (1/2) sum (x_i dy_i - y_i dx_i), with d eta = omega_0 (coordinates x1 y1 x2 y2 x3 y3)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (6,))
    for i in range(3):
        out[..., 2 * i + 1] = 0.5 * x[..., 2 * i]
        out[..., 2 * i] = -0.5 * x[..., 2 * i + 1]
    return out


@dataclass(frozen=True, eq=False)
class PhiEps:
    """Phi_eps = pi^* phi_0 + eps d(chi eta dt) on U_kappa; pi(z, t) = (z, (|z|^2 + lam) t)."""

    kappa: float
    eps: float
    lam: float = 0.0
    fd_step: float = 1e-4

    def chi(self, r):
        return cutoff(r, self.kappa / 4, self.kappa / 2)

    def base(self, X) -> np.ndarray:
        """Phi (eps = 0)."""
        X = np.asarray(X, dtype=float)
        z, t = X[..., :6], X[..., 6]
        r2 = np.sum(z * z, axis=-1)
        w0 = omega_model().coeffs
        dr2 = lift(2 * z, 6, 1, 0, 7)                                  # d|z|^2
        rho = lift(np.broadcast_to(rho_model().coeffs, z.shape[:-1] + (20,)), 6, 3, 0, 7)
        W0 = lift(w0, 6, 2, 0, 7)
        rho = rho + t[..., None] * wedge_coeffs(dr2, W0, 7, 1, 2)
        return rho + (r2 + self.lam)[..., None] * wedge_coeffs(W0, _DT, 7, 2, 1)

    def correction(self, X) -> np.ndarray:
        """d(chi eta dt) = d chi ^ eta ^ dt + chi omega_0 ^ dt."""
        X = np.asarray(X, dtype=float)
        z = X[..., :6]
        r = np.sqrt(np.sum(z * z, axis=-1))
        c = self.chi(r)
        dc = cutoff_deriv(r, self.kappa / 4, self.kappa / 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            dr = np.where(r[..., None] > 0, z / np.where(r > 0, r, 1.0)[..., None], 0.0)
        dchi = lift(dc[..., None] * dr, 6, 1, 0, 7)
        eta = lift(radial_primitive(z), 6, 1, 0, 7)
        W0 = lift(omega_model().coeffs, 6, 2, 0, 7)
        a = wedge_coeffs(wedge_coeffs(dchi, eta, 7, 1, 1), _DT, 7, 2, 1)
        return a + c[..., None] * wedge_coeffs(W0, _DT, 7, 2, 1)

    def __call__(self, X) -> np.ndarray:
        return self.base(X) + self.eps * self.correction(X)

    @property
    def chart(self) -> Chart:
        k = self.kappa
        return Chart((-k,) * 6 + (0.0,), (k,) * 6 + (1.0,), (3,) * 7)

    @property
    def field(self) -> FormField:
        return FormField(self.chart, 3, self, self.fd_step, 4)


def u_kappa_samples(kappa: float, n_r: int = 17, n_t: int = 9, n_dirs: int = 4,
                    seed: int = 0) -> np.ndarray:
    """Points (z, t) with |z| in [0, kappa], t in [0, 1], along fixed and random directions."""
    rng = np.random.default_rng(seed)
    dirs = [np.eye(6)[0]]
    for _ in range(n_dirs - 1):
        v = rng.standard_normal(6)
        dirs.append(v / np.linalg.norm(v))
    r = np.linspace(0.0, kappa, n_r)
    t = np.linspace(0.0, 1.0, n_t)
    pts = [np.concatenate([np.outer(r, d)[:, None, :].repeat(n_t, axis=1),
                           np.broadcast_to(t, (n_r, n_t))[..., None]], axis=-1).reshape(-1, 7)
           for d in dirs]
    return np.concatenate(pts, axis=0)


@dataclass(frozen=True, eq=False)
class PhiEpsReport:
    kappa: float
    eps: float
    lam: float
    min_margin: float
    margin_at_origin: float
    closedness: float
    boundary_mismatch: float
    points: np.ndarray
    margins: np.ndarray


def phi_eps_family(kappa: float, eps: float, lam: float = 0.0, points=None,
                   closed_points: int = 12) -> PhiEpsReport:
    """Build Phi_eps and report positivity, closedness and boundary agreement with Phi."""
    if kappa <= 0 or eps < 0 or lam < 0:
        raise ValueError("need kappa > 0, eps >= 0, lam >= 0")
    fam = PhiEps(kappa, eps, lam)
    X = u_kappa_samples(kappa) if points is None else np.asarray(points, dtype=float)
    margins = g2.positivity_margin(fam(X))
    origin = np.zeros((1, 7))
    origin[0, 6] = 0.5
    m0 = float(g2.positivity_margin(fam(origin))[0])
    rng = np.random.default_rng(1)
    inner = np.concatenate([rng.uniform(-0.4 * kappa, 0.4 * kappa, (closed_points, 6)),
                            rng.uniform(0.2, 0.8, (closed_points, 1))], axis=1)
    inner[:, :6] *= 0.9 / max(1.0, float(np.max(np.linalg.norm(inner[:, :6], axis=1)) / kappa))
    closed = float(np.max(np.abs(exterior_derivative(fam.field)(inner))))
    # restriction to t = 0, 1: drop every component containing dt
    no_dt = [i for i, K in enumerate(basis(7, 3)) if 6 not in K]
    ends = X[np.isin(X[:, 6], (0.0, 1.0))]
    mismatch = float(np.max(np.abs(fam(ends)[:, no_dt] - fam.base(ends)[:, no_dt]), initial=0.0))
    return PhiEpsReport(kappa, eps, lam, float(np.min(margins)), m0, closed, mismatch, X, margins)


def admissible_parameters(kappas=(1.0, 0.5, 0.25, 0.125),
                          epsilons=tuple(10.0 ** -k for k in range(1, 7))
                          ) -> tuple[float, float, float]:
    """Grid search for (kappa, eps) with Phi_eps strictly positive on U_kappa.

    Returns (kappa, eps, margin); kappas are tried largest first and, for each,
    epsilons largest first.
    """
    for kappa in sorted(kappas, reverse=True):
        X = u_kappa_samples(kappa)
        away = np.linalg.norm(X[:, :6], axis=1) > 0
        if np.min(g2.positivity_margin(PhiEps(kappa, 0.0)(X[away]))) <= 0:
            continue
        for eps in sorted(epsilons, reverse=True):
            m = float(np.min(g2.positivity_margin(PhiEps(kappa, eps)(X))))
            if m > 0:
                return kappa, eps, m
    raise NoAdmissibleParameters("no (kappa, eps) on the grid gives a positive form")


# ---------------------------------------------------------------------------
# taming and cobordisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TamingThreshold:
    A_star: float
    per_sample: np.ndarray
    passes_above: bool
    fails_below: bool


def _taming_pairs(path: CollarField, Omega: Callable, points):
    X = np.asarray(points, dtype=float)
    x, t = X[..., :6], X[..., 6]
    I, _ = complex_structure(path.rho(x, t))
    Mw = taming_matrix(path.omega(x, t), I)
    MO = taming_matrix(np.broadcast_to(Omega(x), Mw.shape[:-2] + (15,)), I)
    return X, Mw, MO


def taming_threshold(path: CollarField, Omega: Callable[[np.ndarray], np.ndarray],
                     points) -> TamingThreshold:
    """Smallest A >= 0 with omega_t + A Omega taming rho_t at every sample.

    Per sample this is the top generalised eigenvalue of (-M_omega, M_Omega)
    for the symmetric taming matrices; the maximum over samples is A_star.
    """
    X, Mw, MO = _taming_pairs(path, Omega, points)
    evO = np.linalg.eigvalsh(MO)[..., 0]
    if np.any(evO <= 0):
        k = int(np.argmin(evO))
        raise OmegaNotTaming(X.reshape(-1, 7)[k].tolist(), float(evO.reshape(-1)[k]))
    L = np.linalg.cholesky(MO)
    Li = np.linalg.inv(L)
    C = Li @ (-Mw) @ np.swapaxes(Li, -1, -2)
    per = np.linalg.eigvalsh(0.5 * (C + np.swapaxes(C, -1, -2)))[..., -1]
    A = max(0.0, float(np.max(per)))

    def tames(a):
        return bool(np.all(np.linalg.eigvalsh(Mw + a * MO)[..., 0] > 0))

    above = tames(A * (1 + 1e-3) if A > 0 else 1e-9)
    below = (not tames(A * (1 - 1e-3))) if A > 0 else True
    return TamingThreshold(A, per, above, below)


def cobordism(path: CollarField, Omega: Callable[[np.ndarray], np.ndarray], A: float) -> CollarField:
    """The collar with omega_t replaced by omega_t + A Omega (closed if Omega is closed)."""
    w = path.omega

    def omega(x, t):
        return w(x, t) + A * np.asarray(Omega(x))

    return CollarField(path.base, path.t_range, path.rho, omega, path.jump, path.t_grid,
                       path.fd_step, path.fd_order)


def model_path() -> tuple[CollarField, Callable]:
    """Constant rho_0 with omega~ = -omega_0 and Omega = omega_0 (threshold exactly 1)."""
    r0, w0 = rho_model().coeffs, omega_model().coeffs
    path = CollarField(torus6(), (0.0, 1.0),
                       lambda x, t: np.broadcast_to(r0, np.shape(t) + (20,)),
                       lambda x, t: np.broadcast_to(-w0, np.shape(t) + (15,)))
    return path, (lambda x: np.broadcast_to(w0, np.shape(x)[:-1] + (15,)))


def torus_path(delta: float = 0.05) -> tuple[CollarField, Callable]:
    """Reduction structures rho_t = dtheta_123 - sum sigma_i(t) dtheta_i on T^3 x T^3.

    sigma_i(t) = dy_j dy_k + t d alpha_i with alpha_i = delta sin(2 pi y_j) dy_k, so
    d rho_t / dt = d(-sum alpha_i dtheta_i) and omega~ = -sum alpha_i ^ dtheta_i.
    Omega = -sum dy_i ^ dtheta_i tames every rho_t in the family.
    Coordinates: (y1, y2, y3, theta1, theta2, theta3).
    """
    pos1 = {K: i for i, K in enumerate(basis(3, 2))}

    def sigmas(y, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(y)[:-1], t.shape) + (3, 3))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            a, b = sorted((j, k))
            sgn = 1.0 if (j, k) == (a, b) else -1.0
            out[..., i, pos1[(a, b)]] += sgn * (1.0 + t * 2 * np.pi * delta
                                                * np.cos(2 * np.pi * y[..., j]))
        return out

    dth = np.eye(6)[3:]

    def rho(x, t):
        sig = lift(sigmas(x[..., :3], t), 3, 2, 0, 6)
        out = -np.sum(wedge_coeffs(sig, dth, 6, 2, 1), axis=-2)
        out[..., -1] += 1.0
        return out

    def alpha(y):
        out = np.zeros(y.shape[:-1] + (3, 6))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            out[..., i, k] = delta * np.sin(2 * np.pi * y[..., j])
        return out

    def omega(x, t):
        a = alpha(np.asarray(x)[..., :3])
        w = -np.sum(wedge_coeffs(a, dth, 6, 1, 1), axis=-2)
        return np.broadcast_to(w, np.broadcast_shapes(w.shape[:-1], np.shape(t)) + (15,))

    Om = -np.sum(wedge_coeffs(np.eye(6)[:3], dth, 6, 1, 1), axis=0)
    path = CollarField(torus6(), (0.0, 1.0), rho, omega)
    return path, (lambda x: np.broadcast_to(Om, np.shape(x)[:-1] + (15,)))


@dataclass(frozen=True)
class Obstruction:
    integral: float
    integrand_min: float
    integrand_max: float
    rho_closedness: float
    Omega_closedness: float


def taming_obstruction(rho: FormField, Omega: FormField, orientation: int = 1,
                       closed_tol: float = 1e-6, require_closed: bool = True) -> Obstruction:
    """Integral of d rho~ ^ Omega over a closed (fully periodic) chart.

    For closed rho and Omega it vanishes by Stokes; a nonzero value with a
    one-signed integrand certifies that one of them is not closed.
    """
    from .sl3c import rho_tilde_field

    chart = rho.chart
    if not all(chart.periodic):
        raise ValueError("the obstruction integral needs a closed (periodic) chart")
    x = chart.grid_points()
    r_res = float(np.max(np.abs(exterior_derivative(rho)(x))))
    o_res = float(np.max(np.abs(exterior_derivative(Omega)(x))))
    if require_closed and max(r_res, o_res) > closed_tol:
        raise NotClosed(max(r_res, o_res))
    sig = exterior_derivative(rho_tilde_field(rho, orientation))
    top = FormField(chart, 6, lambda y: wedge_coeffs(sig(y), Omega(y), 6, 4, 2),
                    rho.fd_step, rho.fd_order)
    vals = top(x)[..., 0]
    return Obstruction(float(integrate(top)), float(np.min(vals)), float(np.max(vals)),
                       r_res, o_res)
