"""Dimensional reductions to forms on products with tori.

R^{3,3} is realised as the constant 2-forms on the 4-torus, paired by
a ^ b = Q(a, b) dtau_0123.  Vectors are written in the basis
P_i = (dtau_0i + dtau_jk) / sqrt 2 and N_i = (dtau_0i - dtau_jk) / sqrt 2
((ijk) cyclic), in which Q = diag(1, 1, 1, -1, -1, -1).

Product charts put the base coordinates first and the torus angles last;
torus axes are periodic with unit period.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DependentSigmas, NonSymmetricS, NotClosed, NotDefinite, NotSpacelike
from .exterior import (
    Chart,
    FormField,
    basis,
    exterior_derivative,
    partials,
    wedge_coeffs,
)
from .sl3c import (
    classify_eigenvalues,
    complex_structure,
    det22_batch,
    herm_eigenvalues_batch,
    off_type22_fraction,
    rho_tilde_field,
    tilde_coeffs,
    volume_density,
)

ETA33 = np.diag([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])

# Orientation of positive 3-planes in R^{3,3}: (P_1, P_2, P_3) is positive.
# With it -dF + chi is a positive 3-form for the chart orientation of Xi x T^4.
PLANE_ORIENTATION = 1


@functools.lru_cache(maxsize=None)
def two_form_basis() -> np.ndarray:
    """Rows: P_1, P_2, P_3, N_1, N_2, N_3 as coefficient vectors on basis(4, 2)."""
    pos = {K: i for i, K in enumerate(basis(4, 2))}
    rows = np.zeros((6, 6))
    for i, (j, k) in zip((1, 2, 3), ((2, 3), (3, 1), (1, 2))):
        s = 1.0 if j < k else -1.0
        jk = pos[tuple(sorted((j, k)))]
        rows[i - 1, pos[(0, i)]] = 1.0
        rows[i - 1, jk] = s
        rows[i + 2, pos[(0, i)]] = 1.0
        rows[i + 2, jk] = -s
    return rows / np.sqrt(2.0)


def as_two_form(v: np.ndarray) -> np.ndarray:
    """Vectors of R^{3,3} (..., 6) to constant 2-forms on T^4 (..., 6)."""
    return np.asarray(v) @ two_form_basis()


@functools.lru_cache(maxsize=None)
def _embedding(m: int, k: int, offset: int, n: int) -> np.ndarray:
    """Matrix sending k-form coefficients on R^m into R^n, shifting indices by offset."""
    pos = {K: i for i, K in enumerate(basis(n, k))}
    E = np.zeros((len(basis(m, k)), len(pos)))
    for i, K in enumerate(basis(m, k)):
        E[i, pos[tuple(a + offset for a in K)]] = 1.0
    return E


def lift(c: np.ndarray, m: int, k: int, offset: int, n: int) -> np.ndarray:
    return np.asarray(c) @ _embedding(m, k, offset, n)


def plane_orientation(V: np.ndarray) -> np.ndarray:
    """Canonical orientation sign of positive 3-frames V (..., 6, 3) of R^{3,3}.

    A positive 3-plane projects isomorphically onto span(P); the sign of that
    projection is continuous on the (connected) space of positive planes.
    """
    return PLANE_ORIENTATION * np.sign(np.linalg.det(np.asarray(V)[..., :3, :]))


# ---------------------------------------------------------------------------
# spacelike immersions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpacelikeImmersion:
    """An immersion of a chart into R^{p,q} (metric diag(I_p, -I_q))."""

    source: Chart
    func: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    signature: tuple[int, int] = (3, 3)
    fd_step: float = 1e-5

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def eta(self) -> np.ndarray:
        p, q = self.signature
        return np.diag([1.0] * p + [-1.0] * q)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)))

    def jac(self, x) -> np.ndarray:
        """(..., p + q, dim)."""
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x))
        D = partials(self.func, self.source, x, self.fd_step, order=4)  # (..., dim, p+q)
        return np.swapaxes(D, -1, -2)

    def hessian(self, x) -> np.ndarray:
        """Second derivatives (..., dim, dim, p + q)."""
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            D = partials(self.jacobian, self.source, x, self.fd_step, order=4)
            return np.swapaxes(D, -1, -2)            # [i, j, a]: d_i d_j F^a
        h = max(self.fd_step, 1e-4)
        return partials(lambda y: np.swapaxes(self.jac_fd(y, h), -1, -2),
                        self.source, x, h, order=4)

    def jac_fd(self, x, h: float) -> np.ndarray:
        D = partials(self.func, self.source, x, h, order=4)
        return np.swapaxes(D, -1, -2)

    def metric(self, x) -> np.ndarray:
        J = self.jac(x)
        return np.swapaxes(J, -1, -2) @ self.eta @ J

    def check_spacelike(self, x, eps: float = 0.0) -> None:
        x = np.asarray(x, dtype=float)
        lo = np.linalg.eigvalsh(self.metric(x))[..., 0]
        if np.any(lo <= eps):
            i = int(np.argmin(lo.reshape(-1)))
            raise NotSpacelike(x.reshape(-1, self.dim)[i].tolist(), float(lo.reshape(-1)[i]))

    def area_density(self, x) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.metric(x)))

    def mean_curvature_vector(self, x) -> np.ndarray:
        """mu = -h^{ij} (d_i d_j F)^normal; it points outward on round spheres."""
        x = np.asarray(x, dtype=float)
        J = self.jac(x)
        eta = self.eta
        h = np.swapaxes(J, -1, -2) @ eta @ J
        H = self.hessian(x)
        hinv = np.linalg.inv(h)
        lap = np.einsum("...ij,...ija->...a", hinv, H)
        # tangential projection P v = J h^{-1} J^T eta v
        tang = np.einsum("...ai,...ij,...bj,bc,...c->...a", J, hinv, J, eta, lap)
        return -(lap - tang)

    def orientation_sign(self, x, extra=None) -> np.ndarray:
        """Canonical sign of the frame (dF/ds_1, .., [extra]) in R^{3,3}."""
        J = self.jac(x)
        if extra is not None:
            J = np.concatenate([J, np.asarray(extra)[..., :, None]], axis=-1)
        if J.shape[-1] != 3 or self.signature != (3, 3):
            raise ValueError("canonical orientation needs a 3-frame in R^{3,3}")
        return plane_orientation(J)


def indefinite_norm_sq(v: np.ndarray, signature=(3, 3)) -> np.ndarray:
    p, q = signature
    v = np.asarray(v)
    return np.sum(v[..., :p] ** 2, axis=-1) - np.sum(v[..., p:p + q] ** 2, axis=-1)


def product_chart(base: Chart, torus_dim: int, grid: int = 4) -> Chart:
    return Chart(base.lo + (0.0,) * torus_dim, base.hi + (1.0,) * torus_dim,
                 base.grid + (grid,) * torus_dim, base.orientation,
                 base.periodic + (True,) * torus_dim,
                 base.rules + ("trapezoid",) * torus_dim)


def _minus_dF(imm: SpacelikeImmersion, x: np.ndarray, n: int) -> np.ndarray:
    """-sum_a ds_a ^ (dF/ds_a as a 2-form on T^4), on the n-dim product."""
    d = imm.dim
    J = imm.jac(x[..., :d])                                    # (..., 6, d)
    A = as_two_form(np.swapaxes(J, -1, -2))                    # (..., d, 6)
    A = lift(A, 4, 2, d, n)                                    # (..., d, C(n,2))
    ds = np.eye(n)[:d]                                         # (d, n)
    return -np.sum(wedge_coeffs(ds, A, n, 1, 2), axis=-2)


# ---------------------------------------------------------------------------
# surfaces: rho on Sigma x T^4
# ---------------------------------------------------------------------------

def baraglia_rho(sigma: SpacelikeImmersion, torus_grid: int = 2, fd_step: float = 1e-3,
                 fd_order: int = 4, check: bool = True) -> FormField:
    """The 3-form -df on Sigma x T^4, with coordinates (s1, s2, tau0..tau3)."""
    if sigma.dim != 2 or sigma.signature != (3, 3):
        raise ValueError("expected a surface in R^{3,3}")
    if check:
        sigma.check_spacelike(sigma.source.grid_points())
    chart = product_chart(sigma.source, 4, torus_grid)
    return FormField(chart, 3, lambda x: _minus_dF(sigma, x, 6), fd_step, fd_order)


@dataclass(frozen=True, eq=False)
class SurfaceCheck:
    residual: float
    residuals: np.ndarray
    det22: np.ndarray
    off_type: np.ndarray
    classes: list[str]
    mu: np.ndarray
    spacelike: np.ndarray
    outward: np.ndarray
    criterion_agrees: bool


# d rho~ below this norm is finite-difference noise, not curvature
NOISE_FLOOR = 1e-6


def lemma2_check(sigma: SpacelikeImmersion, points, orientation: int = 1,
                 fd_step: float = 1e-3) -> SurfaceCheck:
    """Compare d rho~ with vol_Sigma (x) mu_Sigma and test the mean-convexity criterion.

    ``points`` are points of the surface chart; the torus angles are
    irrelevant (everything is translation invariant along T^4).
    ``orientation`` is the orientation of Sigma x T^4 used to analyse rho,
    relative to ds_12 dtau_0123.  As for hypersurfaces, a mean-convex
    boundary is analysed with the orientation opposite to its Stokes
    orientation, so "outward" is tested for Sigma oriented by -orientation:
    the frame (dF/ds_1, dF/ds_2, mu) must then be canonically positive.
    """
    s = np.asarray(points, dtype=float)
    x = np.concatenate([s, np.zeros(s.shape[:-1] + (4,))], axis=-1)
    rho = baraglia_rho(sigma, fd_step=fd_step)
    sig = exterior_derivative(rho_tilde_field(rho, orientation))(x)
    mu = sigma.mean_curvature_vector(s)
    area = orientation * sigma.area_density(s)
    ds12 = np.zeros(15)
    ds12[0] = 1.0
    expect = wedge_coeffs(ds12, lift(as_two_form(mu), 4, 2, 2, 6), 6, 2, 2) * area[..., None]
    res = np.linalg.norm(sig - expect, axis=-1)
    c = rho(x)
    I = complex_structure(c, orientation)[0]
    off = off_type22_fraction(sig, I)
    v = volume_density(c, orientation)
    det = det22_batch(sig, v)
    ev = herm_eigenvalues_batch(sig, c, orientation, atol=NOISE_FLOOR)
    scale = np.max(np.abs(ev))
    classes = [classify_eigenvalues(e, rtol=1e-6, atol=1e-9 * max(scale, 1.0))
               for e in ev.reshape(-1, 3)]
    spacelike = indefinite_norm_sq(mu) > 0
    outward = -orientation * sigma.orientation_sign(s, extra=mu) > 0
    predicted = (spacelike & outward).reshape(-1)
    observed = np.array([cl == "semipositive" for cl in classes])
    return SurfaceCheck(float(np.max(res)), res, det, off, classes, mu, spacelike, outward,
                        bool(np.all(predicted == observed)))


# ---------------------------------------------------------------------------
# 3-folds: phi on Xi x T^4
# ---------------------------------------------------------------------------

# Orientation of Xi x T^4 relative to the chart (s1, s2, s3, tau0..tau3).
BARAGLIA_ORIENTATION = 1


def baraglia_phi(xi: SpacelikeImmersion, torus_grid: int = 2, fd_step: float = 1e-3,
                 fd_order: int = 4, check: bool = True) -> FormField:
    """The 3-form -dF + chi on Xi x T^4, chi the canonically oriented volume of Xi."""
    if xi.dim != 3 or xi.signature != (3, 3):
        raise ValueError("expected a 3-fold in R^{3,3}")
    if check:
        xi.check_spacelike(xi.source.grid_points())
    chart = product_chart(xi.source, 4, torus_grid)
    e123 = np.zeros(35)
    e123[0] = 1.0

    def func(x):
        s = x[..., :3]
        chi = xi.orientation_sign(s) * xi.area_density(s)
        return _minus_dF(xi, x, 7) + chi[..., None] * e123

    return FormField(chart, 3, func, fd_step, fd_order)


# ---------------------------------------------------------------------------
# Y x T^3
# ---------------------------------------------------------------------------

def _vec(sigma: np.ndarray) -> np.ndarray:
    """2-form on R^3 (basis 01, 02, 12) to the vector v with sigma = i_v dy_123."""
    s = np.asarray(sigma)
    return np.stack([s[..., 2], -s[..., 1], s[..., 0]], axis=-1)


def _unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.stack([v[..., 2], -v[..., 1], v[..., 0]], axis=-1)


def cofactor(E: np.ndarray) -> np.ndarray:
    """Rows e_j x e_k for cyclic (ijk): the 2-forms eps_j ^ eps_k as vectors."""
    E = np.asarray(E)
    return np.stack([np.cross(E[..., (i + 1) % 3, :], E[..., (i + 2) % 3, :])
                     for i in range(3)], axis=-2)


def sigmas_from_eps(E: np.ndarray) -> np.ndarray:
    """(..., 3, 3) coframes to the three 2-forms eps_j ^ eps_k (..., 3, 3) on basis(3, 2)."""
    return _unvec(cofactor(E))


def eps_from_sigmas(S: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Invert sigma_i = eps_j ^ eps_k with det(eps) = +sqrt(det C) > 0."""
    C = _vec(S)
    det = np.linalg.det(C)
    scale = np.max(np.abs(C), axis=(-2, -1)) ** 3
    if np.any(np.abs(det) <= tol * np.maximum(scale, 1e-300)):
        raise DependentSigmas("sigma_1, sigma_2, sigma_3 are linearly dependent")
    if np.any(det < 0):
        raise NotDefinite(float(np.min(det)),
                          "sigma matrix has negative determinant: no real coframe solves "
                          "sigma_i = eps_j ^ eps_k")
    return np.sqrt(det)[..., None, None] * np.swapaxes(np.linalg.inv(C), -1, -2)


# The assembled rho is analysed with the orientation dy_123 dtheta_123 times this.
TORUS_ORIENTATION = 1


@dataclass(frozen=True, eq=False)
class TorusReductionData:
    """sigma_i on a 3-chart Y and everything derived from them."""

    sigma: tuple[FormField, FormField, FormField]
    fd_step: float = 1e-3
    fd_order: int = 4
    torus_grid: int = 2

    @property
    def base(self) -> Chart:
        return self.sigma[0].chart

    @property
    def chart(self) -> Chart:
        return product_chart(self.base, 3, self.torus_grid)

    @property
    def orientation(self) -> int:
        return TORUS_ORIENTATION

    def sigmas(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.stack([s(y) for s in self.sigma], axis=-2)

    def C(self, y) -> np.ndarray:
        return _vec(self.sigmas(y))

    def eps(self, y) -> np.ndarray:
        """Rows eps_i (components on dy_1, dy_2, dy_3)."""
        return eps_from_sigmas(self.sigmas(y))

    def eps_fields(self) -> list[FormField]:
        return [FormField(self.base, 1, (lambda y, i=i: self.eps(y)[..., i, :]),
                          self.fd_step, self.fd_order) for i in range(3)]

    def d_eps(self, y) -> np.ndarray:
        return np.stack([exterior_derivative(f)(y) for f in self.eps_fields()], axis=-2)

    def S(self, y) -> np.ndarray:
        """Solve d eps_i = sum_j S_ij sigma_j pointwise."""
        D = _vec(self.d_eps(y))
        return D @ np.linalg.inv(self.C(y))

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sig = lift(self.sigmas(x[..., :3]), 3, 2, 0, 6)             # (..., 3, 15)
        dth = np.eye(6)[3:]
        out = -np.sum(wedge_coeffs(sig, dth, 6, 2, 1), axis=-2)
        out[..., -1] += 1.0                                           # dtheta_123
        return out

    def rho_tilde_formula(self, x) -> np.ndarray:
        """-eps_123 + sum_cyclic eps_i dtheta_j dtheta_k."""
        x = np.asarray(x, dtype=float)
        E = lift(self.eps(x[..., :3]), 3, 1, 0, 6)                   # (..., 3, 6)
        e12 = wedge_coeffs(E[..., 0, :], E[..., 1, :], 6, 1, 1)
        out = -wedge_coeffs(e12, E[..., 2, :], 6, 2, 1)
        dth = np.eye(6)[3:]
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            djk = wedge_coeffs(dth[j], dth[k], 6, 1, 1)
            out = out + wedge_coeffs(E[..., i, :], djk, 6, 1, 2)
        return out

    @property
    def rho_field(self) -> FormField:
        return FormField(self.chart, 3, self.rho, self.fd_step, self.fd_order)

    def rho_tilde_intrinsic(self, x) -> np.ndarray:
        return tilde_coeffs(self.rho(x), self.orientation)

    def d_rho_tilde_formula(self, x) -> np.ndarray:
        """sum_{a, cyclic ijk} S_ai sigma_a dtheta_j dtheta_k."""
        x = np.asarray(x, dtype=float)
        y = x[..., :3]
        S = self.S(y)
        sig = lift(self.sigmas(y), 3, 2, 0, 6)
        dth = np.eye(6)[3:]
        out = 0.0
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            djk = wedge_coeffs(dth[j], dth[k], 6, 1, 1)
            comb = np.einsum("...a,...aI->...I", S[..., :, i], sig)
            out = out + wedge_coeffs(comb, djk, 6, 2, 2)
        return out

    def classify(self, y, atol: float = 1e-9) -> list[str]:
        """Mean-convexity class from the eigenvalues of S."""
        ev = np.linalg.eigvalsh(0.5 * (self.S(y) + np.swapaxes(self.S(y), -1, -2)))
        return [classify_eigenvalues(e, rtol=1e-6, atol=atol) for e in ev.reshape(-1, 3)]


def torus_reduction(sigma: Sequence[FormField], points=None, closed_tol: float = 1e-6,
                    symmetry_tol: float = 1e-6, fd_step: float = 1e-3,
                    fd_order: int = 4) -> TorusReductionData:
    """Validate three closed, independent 2-forms on Y and package the reduction."""
    if len(sigma) != 3 or any((s.n, s.degree) != (3, 2) for s in sigma):
        raise ValueError("expected three 2-form fields on a 3-chart")
    data = TorusReductionData(tuple(sigma), fd_step, fd_order)
    y = data.base.grid_points() if points is None else np.asarray(points, dtype=float)
    for s in sigma:
        res = float(np.max(np.abs(exterior_derivative(s)(y))))
        if res > closed_tol:
            raise NotClosed(res)
    data.eps(y)                 # raises on dependent or wrongly signed sigmas
    S = data.S(y)
    asym = float(np.max(np.abs(S - np.swapaxes(S, -1, -2))))
    if asym > symmetry_tol * max(1.0, float(np.max(np.abs(S)))):
        raise NonSymmetricS(asym)
    return data
