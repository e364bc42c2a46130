"""Hypersurfaces in 7-manifolds with a G2 structure.

A hypersurface is a 6-chart embedded into the ambient 7-chart.  The unit
normal nu is chosen so that (d/du_1 .. d/du_6, nu) is positively oriented for
co_orientation +1; the induced forms are rho = iota^* phi and
omega = iota^* (i_nu phi), and rho is analysed with orientation
co_orientation (times the ambient chart orientation).

The second fundamental form is B(X, Y) = g(nu, nabla_X Y) = -g(nabla_X nu, Y):
for a graph t = f(u) with nu pointing up it is the Hessian of f.  For a
hypersurface bounding a domain, the splitting normal nu points into the
domain; then B is the usual shape operator of the outward normal and the
unit sphere has B = +h and mean curvature +6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import g2
from .errors import G2FormsError, NotHypersurface
from .exterior import (
    Chart,
    FormField,
    SmoothMap,
    _check_step,
    basis,
    contract_coeffs,
    exterior_derivative,
    matrix_two_form,
    partials,
    pullback_coeffs,
    wedge_coeffs,
)
from .sl3c import (
    classify_eigenvalues,
    complex_structure,
    det22_batch,
    dz_forms,
    herm_eigenvalues_batch,
    hitchin_density,
    rho_model,
    tilde_coeffs,
    volume_density,
)


class NotStrictlyMeanConvex(G2FormsError):
    """d rho tilde is not a positive (2,2)-form at some sample point."""


@dataclass(frozen=True, eq=False)
class HypersurfaceData:
    """Lazily evaluated induced geometry of an embedded 6-chart.

    All methods take points ``x`` of shape (..., 6) in the source chart.
    ``fd_step`` and ``fd_order`` drive every finite difference on the
    hypersurface (normal derivatives, d rho tilde, d omega).
    """

    ambient: FormField
    embedding: SmoothMap
    co_orientation: int = 1
    fd_step: float = 1e-3
    fd_order: int = 2
    flat: bool = False

    def __post_init__(self):
        if (self.ambient.n, self.ambient.degree) != (7, 3):
            raise ValueError("ambient must be a 3-form field on a 7-chart")
        if self.embedding.source.dim != 6 or self.embedding.target.dim != 7:
            raise ValueError("embedding must map a 6-chart into a 7-chart")
        if self.co_orientation not in (1, -1):
            raise ValueError("co_orientation must be +1 or -1")
        _check_step(self.chart, self.fd_step)

    @property
    def chart(self) -> Chart:
        return self.embedding.source

    @property
    def ambient_orientation(self) -> int:
        return self.ambient.chart.orientation

    @property
    def orientation(self) -> int:
        return self.co_orientation * self.ambient_orientation

    # -- pointwise pieces ---------------------------------------------------

    def jac(self, x) -> np.ndarray:
        J = self.embedding.jac(x)
        return J

    def phi_at(self, x) -> np.ndarray:
        return self.ambient(self.embedding(x))

    def ambient_metric(self, x) -> np.ndarray:
        return g2.metric(self.phi_at(x), self.ambient_orientation)

    def normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.jac(x)
        g = self.ambient_metric(x)
        # c_i = det[J | e_i] is the cofactor covector annihilating the tangent space
        c = np.stack([np.linalg.det(np.concatenate(
            [J, np.broadcast_to(np.eye(7)[:, i:i + 1], J.shape[:-1] + (1,))], axis=-1))
            for i in range(7)], axis=-1)
        nrm = np.linalg.norm(c, axis=-1)
        scale = np.max(np.abs(J), axis=(-2, -1)) ** 6
        if np.any(nrm <= 1e-12 * scale):
            raise NotHypersurface("embedding Jacobian has rank < 6")
        gc = np.linalg.solve(g, c[..., None])[..., 0]
        return self.co_orientation * gc / np.sqrt(np.einsum("...i,...i->...", c, gc))[..., None]

    def rho(self, x) -> np.ndarray:
        return pullback_coeffs(self.phi_at(x), self.jac(x), 3)

    def omega(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        i_nu = contract_coeffs(self.normal(x), self.phi_at(x), 7, 3)
        return pullback_coeffs(i_nu, self.jac(x), 2)

    def induced_metric(self, x) -> np.ndarray:
        J = self.jac(x)
        return np.swapaxes(J, -1, -2) @ self.ambient_metric(x) @ J

    def complex_structure(self, x) -> np.ndarray:
        return complex_structure(self.rho(x), self.orientation)[0]

    def rho_tilde(self, x) -> np.ndarray:
        return tilde_coeffs(self.rho(x), self.orientation)

    # -- fields ---------------------------------------------------------------

    def _field(self, k: int, func: Callable) -> FormField:
        return FormField(self.chart, k, func, self.fd_step, self.fd_order)

    @property
    def rho_field(self) -> FormField:
        return self._field(3, self.rho)

    @property
    def omega_field(self) -> FormField:
        return self._field(2, self.omega)

    @property
    def rho_tilde_field(self) -> FormField:
        return self._field(3, self.rho_tilde)

    def d_rho_tilde(self, x) -> np.ndarray:
        return exterior_derivative(self.rho_tilde_field)(x)

    # -- curvature ------------------------------------------------------------

    def christoffel_lowered(self, x) -> np.ndarray:
        """Gamma_{l,ab} = (d_a g_lb + d_b g_la - d_l g_ab) / 2 at the image points."""
        y = self.embedding(x)
        if self.flat:
            return np.zeros(y.shape[:-1] + (7, 7, 7))
        gfun = g2.metric_field(self.ambient, self.ambient_orientation)
        dg = partials(gfun, self.ambient.chart, y, self.fd_step, self.fd_order)  # [a, l, b]
        return 0.5 * (np.einsum("...alb->...lab", dg) + np.einsum("...bla->...lab", dg)
                      - dg)

    def second_fundamental(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.jac(x)
        g = self.ambient_metric(x)
        nu = self.normal(x)
        dnu = partials(self.normal, self.chart, x, self.fd_step, self.fd_order)  # (..., 6, 7)
        B = np.einsum("...ia,...ab,...bj->...ij", dnu, g, J)
        Gam = self.christoffel_lowered(x)
        B = B + np.einsum("...lab,...ai,...b,...lj->...ij", Gam, J, nu, J)
        return -0.5 * (B + np.swapaxes(B, -1, -2))

    def mean_curvature(self, x) -> np.ndarray:
        B = self.second_fundamental(x)
        h = self.induced_metric(x)
        return np.trace(np.linalg.solve(h, B), axis1=-2, axis2=-1)


def induce(ambient: FormField, embedding: SmoothMap, co_orientation: int = 1,
           fd_step: float = 1e-3, fd_order: int = 2, flat: bool = False) -> HypersurfaceData:
    return HypersurfaceData(ambient, embedding, co_orientation, fd_step, fd_order, flat)


def second_fundamental(h: HypersurfaceData, point) -> np.ndarray:
    return h.second_fundamental(np.asarray(point, dtype=float))


def measure_defect(h: HypersurfaceData, x) -> np.ndarray:
    """|sqrt(det induced metric) - |vol_rho|| pointwise."""
    area = np.sqrt(np.linalg.det(h.induced_metric(x)))
    return np.abs(area - np.abs(volume_density(h.rho(x), h.orientation)))


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def beta11(B: np.ndarray, I: np.ndarray) -> np.ndarray:
    """2-form beta(x, y) = B11(Ix, y) from the I-invariant part of B."""
    It = np.swapaxes(I, -1, -2)
    B11 = 0.5 * (B + It @ B @ I)
    return matrix_two_form(It @ B11)


@dataclass(frozen=True, eq=False)
class IdentityResult:
    id1_residual: float
    id2_residual: float
    id1: np.ndarray
    id2: np.ndarray
    mu: np.ndarray
    points: np.ndarray


def verify_prop1(h: HypersurfaceData, points) -> IdentityResult:
    """Pointwise beta11 ^ omega = d rho~ / 2 and mu vol = (omega ^ d rho~) / 2."""
    x = np.asarray(points, dtype=float)
    c = h.rho(x)
    I = complex_structure(c, h.orientation)[0]
    sig = h.d_rho_tilde(x)
    om = h.omega(x)
    B = h.second_fundamental(x)
    mu = np.trace(np.linalg.solve(h.induced_metric(x), B), axis1=-2, axis2=-1)
    id1 = np.linalg.norm(wedge_coeffs(beta11(B, I), om, 6, 2, 2) - 0.5 * sig, axis=-1)
    v = volume_density(c, h.orientation)
    id2 = np.abs(mu * v - 0.5 * wedge_coeffs(om, sig, 6, 2, 4)[..., 0])
    return IdentityResult(float(np.max(id1)), float(np.max(id2)), id1, id2, mu, x)


@dataclass(frozen=True, eq=False)
class MeanCurvatureBound:
    min_slack: float
    slack: np.ndarray
    mu: np.ndarray
    det22: np.ndarray


def verify_eq9(h: HypersurfaceData, points) -> MeanCurvatureBound:
    """Slack mu - (3/2) det(d rho~)^(1/3); raises unless d rho~ is positive everywhere."""
    x = np.asarray(points, dtype=float)
    c = h.rho(x)
    sig = h.d_rho_tilde(x)
    v = volume_density(c, h.orientation)
    ev = herm_eigenvalues_batch(sig, c, h.orientation)
    for e in ev.reshape(-1, 3):
        if classify_eigenvalues(e, rtol=1e-6, atol=1e-9) != "positive":
            raise NotStrictlyMeanConvex(f"d rho~ eigenvalues {np.round(e, 6).tolist()}")
    det = det22_batch(sig, v)
    mu = h.mean_curvature(x)
    slack = mu - 1.5 * np.cbrt(det)
    return MeanCurvatureBound(float(np.min(slack)), slack, mu, det)


# -- the (1,2)-part of d omega from the complex-bilinear part of B ----

def su3_frame(rho: np.ndarray, I: np.ndarray, hmet: np.ndarray) -> np.ndarray:
    """Frame F (columns) with F^* rho = rho_0, F^* I = I_0 and F^T h F = Id."""
    n = 6
    cols: list[np.ndarray] = []
    for j in range(n):
        v = np.eye(n)[j]
        for u in cols:
            v = v - (u @ hmet @ v) * u
        if np.sqrt(v @ hmet @ v) < 1e-6:
            continue
        v = v / np.sqrt(v @ hmet @ v)
        w = I @ v
        if any(abs(u @ hmet @ w) > 1e-10 for u in cols):
            for u in cols:
                w = w - (u @ hmet @ w) * u
            w = w / np.sqrt(w @ hmet @ w)
            v = -I @ w
        cols += [v, w]
        if len(cols) == n:
            break
    F = np.column_stack(cols)
    Om = pullback_coeffs(rho + 1j * pullback_coeffs(rho, I, 3), F, 3)
    # Om = r exp(i a) dz1 dz2 dz3; rotating the first complex line by -a fixes the phase
    a = np.angle(Om[_DX123])
    R = np.eye(n)
    R[:2, :2] = [[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]]
    return F @ R


_DX123 = basis(6, 3).index((0, 2, 4))


def _beta12_unit(B: np.ndarray, rho: np.ndarray, I: np.ndarray, hmet: np.ndarray) -> np.ndarray:
    """sum_ab q_ab theta^b ^ i_{dbar z_a} conj(Omega) in an SU(3) frame, pulled back."""
    F = su3_frame(rho, I, hmet)
    Bf = F.T @ B @ F
    dz = dz_forms()
    d_dz = 0.5 * np.conj(dz)                  # d/dz_a = (d/dx_a - i d/dy_a) / 2
    q = d_dz @ Bf @ d_dz.T                    # complex-bilinear B(d/dz_a, d/dz_b)
    om_bar = np.conj(_omega0())
    out = np.zeros(20, dtype=complex)
    for a in range(3):
        i_a = contract_coeffs(np.conj(d_dz[a]), om_bar, 6, 3)
        for b in range(3):
            out += q[a, b] * wedge_coeffs(dz[b], i_a, 6, 1, 2)
    return pullback_coeffs(out, np.linalg.inv(F), 3)


def _omega0() -> np.ndarray:
    return (rho_model().coeffs + 1j * tilde_coeffs(rho_model().coeffs)).astype(complex)


# Calibrated on random graphs (least squares over both constants): with the
# normal conventions of this module d omega = -mu rho / 2 - Re(beta12), where
# beta12 = 2 sum_ab q_ab theta^b ^ i_{d/dzbar_a} conj(Omega).
DOMEGA_MU_COEFF = -0.5
DOMEGA_BETA_SCALE = 2.0


@dataclass(frozen=True, eq=False)
class DOmegaResult:
    residual: float
    pointwise: np.ndarray


def beta12(h: HypersurfaceData, points) -> np.ndarray:
    """The (1,2)-form built from the complex-bilinear part of B, per point."""
    x = np.asarray(points, dtype=float).reshape(-1, 6)
    c = h.rho(x)
    I = complex_structure(c, h.orientation)[0]
    B = h.second_fundamental(x)
    hm = h.induced_metric(x)
    return DOMEGA_BETA_SCALE * np.array(
        [_beta12_unit(B[i], c[i], I[i], hm[i]) for i in range(len(x))])


def verify_eq10(h: HypersurfaceData, points, mu_coeff: float = DOMEGA_MU_COEFF) -> DOmegaResult:
    """max |d omega - mu_coeff mu rho + (beta12 + conj beta12) / 2| over the points."""
    x = np.asarray(points, dtype=float).reshape(-1, 6)
    dom = exterior_derivative(h.omega_field)(x)
    mu = h.mean_curvature(x)
    b = beta12(h, x)
    res = np.linalg.norm(dom - mu_coeff * mu[:, None] * h.rho(x) + b.real, axis=-1)
    return DOmegaResult(float(np.max(res)), res)


# ---------------------------------------------------------------------------
# volume bound
# ---------------------------------------------------------------------------

def induced_volume(h: HypersurfaceData, chunk: int = 50_000) -> float:
    """Integral of |vol_rho| over the source chart (tensor trapezoid rule)."""
    chart = h.chart
    pts = chart.grid_points()
    w = _tensor_weights(chart)
    total = 0.0
    for s in range(0, len(pts), chunk):
        total += float(hitchin_density(h.rho(pts[s:s + chunk])) @ w[s:s + chunk])
    return total


def _tensor_weights(chart: Chart) -> np.ndarray:
    ws = chart.weights()
    out = ws[0]
    for w in ws[1:]:
        out = np.multiply.outer(out, w)
    return out.ravel()


def ambient_volume(phi: FormField, param: SmoothMap, chunk: int = 50_000) -> float:
    """Volume of the image of a 7-chart under ``param`` measured by g_phi."""
    chart = param.source
    pts = chart.grid_points()
    w = _tensor_weights(chart)
    total = 0.0
    for s in range(0, len(pts), chunk):
        x = pts[s:s + chunk]
        dens = g2.volume_density(phi(param(x)), phi.chart.orientation)
        total += float((dens * np.abs(np.linalg.det(param.jac(x)))) @ w[s:s + chunk])
    return total


def min_det_cuberoot(patches) -> float:
    """m = min det(d rho~)^(1/3) over (HypersurfaceData, points) pairs."""
    m = math.inf
    for h, x in patches:
        c = h.rho(x)
        sig = h.d_rho_tilde(x)
        ev = herm_eigenvalues_batch(sig, c, h.orientation)
        if np.any(ev[..., 0] <= 0):
            raise NotStrictlyMeanConvex("d rho~ is not positive at every sample")
        m = min(m, float(np.min(np.cbrt(det22_batch(sig, volume_density(c, h.orientation))))))
    return m


@dataclass(frozen=True)
class VolumeBound:
    lhs: float
    rhs: float
    slack: float
    m: float
    boundary_volume: float

    @property
    def ratio(self) -> float:
        return self.rhs / self.lhs


def bound_eq15(boundary_volume: float, m: float, ambient_volume: float) -> VolumeBound:
    """Upper bound 4 Vol(N) / (7 m) for the enclosed volume."""
    if not m > 0:
        raise NotStrictlyMeanConvex(f"m = {m} is not positive")
    rhs = 4.0 * boundary_volume / (7.0 * m)
    return VolumeBound(ambient_volume, rhs, rhs - ambient_volume, m, boundary_volume)


# ---------------------------------------------------------------------------
# standard hypersurfaces
# ---------------------------------------------------------------------------

def flat_phi_field(chart: Chart | None = None, **kw) -> FormField:
    from .exterior import constant_field
    chart = chart or Chart.box(7, -3.0, 3.0, 5)
    return constant_field(chart, g2.phi_model(), **kw)


def ellipsoid_cap(axes, axis: int, sign: int = 1, half_width: float = 0.5,
                  grid: int = 5, target: Chart | None = None) -> SmoothMap:
    """Graph chart of the ellipsoid sum (x_i / a_i)^2 = 1 over the coordinates != axis.

    The solved coordinate is x_axis = sign * a_axis * sqrt(1 - sum (u_i / a_i)^2).
    """
    a = np.asarray(axes, dtype=float)
    others = [i for i in range(7) if i != axis]
    ao = a[others]
    source = Chart.box(6, -half_width, half_width, grid)
    target = target or Chart.box(7, -3.0, 3.0, 5)

    def func(u):
        u = np.asarray(u, dtype=float)
        s = np.sqrt(1.0 - np.sum((u / ao) ** 2, axis=-1))
        out = np.empty(u.shape[:-1] + (7,))
        out[..., others] = u
        out[..., axis] = sign * a[axis] * s
        return out

    def jac(u):
        u = np.asarray(u, dtype=float)
        s = np.sqrt(1.0 - np.sum((u / ao) ** 2, axis=-1))
        J = np.zeros(u.shape[:-1] + (7, 6))
        J[..., others, np.arange(6)] = 1.0
        J[..., axis, :] = -sign * a[axis] * (u / ao ** 2) / s[..., None]
        return J

    return SmoothMap(source, target, func, jac)


def inward_co_orientation(ambient: FormField, emb: SmoothMap, center=None) -> int:
    """Co-orientation making the normal point towards ``center`` at the chart centre."""
    x0 = 0.5 * (np.array(emb.source.lo) + np.array(emb.source.hi))
    tmp = HypersurfaceData(ambient, emb, 1)
    nu = tmp.normal(x0)
    center = np.zeros(7) if center is None else np.asarray(center)
    return 1 if float(nu @ (center - emb(x0))) > 0 else -1


def ellipsoid_patches(axes, ambient: FormField | None = None, half_width: float = 0.5,
                      fd_step: float = 1e-3, fd_order: int = 2) -> list[HypersurfaceData]:
    """Fourteen graph charts covering the ellipsoid, normals pointing inside."""
    ambient = ambient or flat_phi_field()
    out = []
    for axis in range(7):
        for sign in (1, -1):
            emb = ellipsoid_cap(axes, axis, sign, half_width)
            co = inward_co_orientation(ambient, emb)
            out.append(HypersurfaceData(ambient, emb, co, fd_step, fd_order, flat=True))
    return out


def ellipsoid_samples(axes, n: int, seed: int = 0, ambient: FormField | None = None,
                      fd_step: float = 1e-3, fd_order: int = 2):
    """Random points of the ellipsoid grouped by the graph chart that sees them best.

    Each point goes to the chart solving for its largest normalised
    coordinate, so the square root in the chart stays >= 1/sqrt(7).
    Returns a list of (HypersurfaceData, points) with inward normals.
    """
    a = np.asarray(axes, dtype=float)
    ambient = ambient or flat_phi_field()
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 7))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    k = np.argmax(np.abs(d), axis=1)
    out = []
    for axis in range(7):
        for sign in (1, -1):
            sel = (k == axis) & (np.sign(d[:, axis]) == sign)
            if not np.any(sel):
                continue
            emb = ellipsoid_cap(a, axis, sign, half_width=float(np.max(a)))
            others = [i for i in range(7) if i != axis]
            co = inward_co_orientation(ambient, emb)
            h = HypersurfaceData(ambient, emb, co, fd_step, fd_order, flat=True)
            out.append((h, (a * d[sel])[:, others]))
    return out


def sphere_angles_map(axes=(1.0,) * 7, grid=(7, 5, 7, 5, 9, 8)) -> SmoothMap:
    """Hyperspherical parametrisation of an ellipsoid by 6 angles (last one periodic).

    The area element carries sin^(5 - i) of the i-th polar angle; the
    trapezoid rule is nearly exact for the higher powers, so only the
    sin^1 axis uses Romberg weights.
    """
    a = np.asarray(axes, dtype=float)
    lo = (0.0,) * 6
    hi = (math.pi,) * 5 + (2 * math.pi,)
    rules = ("trapezoid",) * 4 + ("romberg", "trapezoid")
    source = Chart(lo, hi, tuple(grid), 1, (False,) * 5 + (True,), rules)
    target = Chart.box(7, -3.0, 3.0, 5)

    def unit(th):
        th = np.asarray(th, dtype=float)
        out = np.empty(th.shape[:-1] + (7,))
        s = np.ones(th.shape[:-1])
        for i in range(6):
            out[..., i] = s * np.cos(th[..., i])
            s = s * np.sin(th[..., i])
        out[..., 6] = s
        return out

    def func(th):
        return a * unit(th)

    def jac(th):
        th = np.asarray(th, dtype=float)
        c, sn = np.cos(th), np.sin(th)
        J = np.zeros(th.shape[:-1] + (7, 6))
        for r in range(7):
            for j in range(min(r + 1, 6)):
                # x_r = prod_{i<r} sin(th_i) * (cos(th_r) if r < 6 else 1)
                term = np.ones(th.shape[:-1])
                for i in range(min(r, 6)):
                    term = term * (c[..., i] if i == j else sn[..., i])
                if r < 6:
                    term = term * (-sn[..., r] if j == r else c[..., r])
                J[..., r, j] = a[r] * term
        return J

    return SmoothMap(source, target, func, jac)


def ball_map(axes=(1.0,) * 7, grid=(7, 5, 7, 5, 9, 8), radial: int = 9) -> SmoothMap:
    """Polar parametrisation (r, angles) of a solid ellipsoid; Romberg in r."""
    sph = sphere_angles_map(axes, grid)
    sc = sph.source
    source = Chart((0.0,) + sc.lo, (1.0,) + sc.hi, (radial,) + sc.grid, 1,
                   (False,) + sc.periodic, ("romberg",) + sc.rules)

    def func(x):
        x = np.asarray(x, dtype=float)
        return x[..., :1] * sph(x[..., 1:])

    def jac(x):
        x = np.asarray(x, dtype=float)
        J = np.empty(x.shape[:-1] + (7, 7))
        J[..., :, 0] = sph(x[..., 1:])
        J[..., :, 1:] = x[..., :1, None] * sph.jac(x[..., 1:])
        return J

    return SmoothMap(source, sph.target, func, jac)


def slice_points(chart: Chart, n: int = 33, axes=(0, 1), frac: float = 0.8,
                 offset=None) -> np.ndarray:
    """n x n grid on a coordinate 2-plane through the chart centre (or ``offset``)."""
    lo, hi = np.array(chart.lo), np.array(chart.hi)
    mid = 0.5 * (lo + hi) if offset is None else np.asarray(offset, dtype=float)
    half = 0.5 * frac * (hi - lo)
    s = np.linspace(-1.0, 1.0, n)
    A, Bg = np.meshgrid(s, s, indexing="ij")
    pts = np.tile(mid, (n * n, 1))
    pts[:, axes[0]] = mid[axes[0]] + half[axes[0]] * A.ravel()
    pts[:, axes[1]] = mid[axes[1]] + half[axes[1]] * Bg.ravel()
    return pts
