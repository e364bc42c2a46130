"""Positive 3-forms on R^7: metric, volume, Hodge star, and torsion residuals.

The 7-chart puts the transverse coordinate t last, so the model form is
phi_0 = omega_0 ^ dt + rho_0 on (x1, y1, x2, y2, x3, y3, t).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, NotPositive
from .exterior import (
    FormField,
    KForm,
    _wedge_tensor,
    contract_all,
    exterior_derivative,
    hodge_star_coeffs,
    norm_sq_coeffs,
    wedge,
)
from .sl3c import SL3CData, analyze_definite, omega_model, rho_model

N7 = 7


def dt7() -> KForm:
    return KForm.dx(7, 6)


def lift6(a: KForm) -> KForm:
    """Extend a form on R^6 to R^7 (constant in t, no dt component)."""
    P = np.zeros((6, 7))
    P[:, :6] = np.eye(6)
    return a.pullback(P)


def assemble(omega: KForm, rho: KForm) -> KForm:
    """omega ^ dt + rho on R^7."""
    return wedge(lift6(omega), dt7()) + lift6(rho)


def phi_model() -> KForm:
    return assemble(omega_model(), rho_model())


@functools.lru_cache(maxsize=None)
def _pairing_tensor() -> np.ndarray:
    """G[c, a, b] = coefficient of e_1..7 in e_a ^ e_b ^ e_c (2-forms a, b; 3-form c)."""
    W22 = _wedge_tensor(7, 2, 2)                 # (21, 21, 35)
    W43 = _wedge_tensor(7, 4, 3)[:, :, 0]        # (35, 35)
    return np.einsum("abf,fc->cab", W22, W43).reshape(35, 21 * 21)


def bilinear_b(phi: np.ndarray, orientation: int = 1) -> np.ndarray:
    """b(u, v) e* = (1/6) i_u phi ^ i_v phi ^ phi, batched over (..., 35)."""
    phi = np.ascontiguousarray(phi, dtype=float)
    ip = contract_all(phi, 7, 3)                                    # (..., 7, 21)
    G = (phi @ _pairing_tensor()).reshape(phi.shape[:-1] + (21, 21))
    return orientation * (ip @ G @ np.swapaxes(ip, -1, -2)) / 6.0


def metric(phi: np.ndarray, orientation: int = 1, check: bool = True) -> np.ndarray:
    """g_phi = det(b)^(-1/9) b, batched; raises unless b is positive definite."""
    b = bilinear_b(phi, orientation)
    ev = np.linalg.eigvalsh(b)
    if check:
        lo = ev[..., 0]
        hi = np.max(np.abs(ev), axis=-1)
        if np.any(lo <= 0):
            bad = np.unravel_index(np.argmin(lo), lo.shape) if lo.ndim else ()
            raise NotPositive(f"b has eigenvalue {float(lo[bad]):.6g} <= 0"
                              + (f" at index {tuple(int(i) for i in bad)}" if bad else ""))
        if np.any(lo < 1e-10 * hi):
            raise Degenerate(float(np.min(lo)))
    det = np.prod(ev, axis=-1)
    return np.abs(det)[..., None, None] ** (-1.0 / 9.0) * b


def volume_density(phi: np.ndarray, orientation: int = 1) -> np.ndarray:
    """sqrt(det g_phi) = |det b|^(1/9); continuous, and zero where phi degenerates."""
    return np.abs(np.linalg.det(bilinear_b(phi, orientation))) ** (1.0 / 9.0)


def star_coeffs(a: np.ndarray, k: int, phi: np.ndarray, orientation: int = 1) -> np.ndarray:
    """Hodge star of k-forms with respect to g_phi (batched, matching leading dims)."""
    return hodge_star_coeffs(a, 7, k, metric(phi, orientation), orientation)


def positivity_margin(phi: np.ndarray, orientation: int = 1) -> np.ndarray:
    """lambda_min(b) / max |lambda(b)|: positive exactly on positive forms, 0 where b vanishes."""
    ev = np.linalg.eigvalsh(bilinear_b(phi, orientation))
    scale = np.max(np.abs(ev), axis=-1)
    return np.divide(ev[..., 0], scale, out=np.zeros_like(scale), where=scale > 0)


@dataclass(frozen=True, eq=False)
class G2Data:
    phi: KForm
    metric: np.ndarray
    vol: KForm
    star_phi: KForm
    orientation: int

    def star(self, a: KForm) -> KForm:
        return KForm(7, 7 - a.k, hodge_star_coeffs(a.coeffs, 7, a.k, self.metric,
                                                   self.orientation))

    def norm_sq(self, a: KForm) -> float:
        return float(norm_sq_coeffs(a.coeffs, 7, a.k, self.metric))


def analyze_positive(phi: KForm, orientation: int = 1) -> G2Data:
    if (phi.n, phi.k) != (7, 3):
        raise ValueError("analyze_positive expects a 3-form on R^7")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    c = np.asarray(phi.coeffs, dtype=float)
    g = metric(c, orientation)
    vol = KForm(7, 7, np.array([orientation * np.sqrt(np.linalg.det(g))]))
    star = KForm(7, 4, hodge_star_coeffs(c, 7, 3, g, orientation))
    return G2Data(KForm(7, 3, c), g, vol, star, orientation)


@dataclass(frozen=True, eq=False)
class Split:
    omega: KForm
    rho: KForm
    rho_data: SL3CData
    orthogonality_defect: float
    normalization_defect: float


def split(phi: KForm, nu, V, orientation: int = 1) -> Split:
    """Write phi = omega ^ dt + rho in the frame (V_1..V_6, nu).

    Returned forms live on the frame's coordinates.  The induced orientation
    on span(V) makes (V, nu) positively oriented.
    """
    nu = np.asarray(nu, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape != (7, 6) or nu.shape != (7,):
        raise ValueError("V must be 7x6 (columns) and nu a 7-vector")
    F = np.column_stack([V, nu])
    detF = np.linalg.det(F)
    if abs(detF) < 1e-12 * np.linalg.norm(F) ** 7:
        raise ValueError("degenerate frame: nu lies in span(V)")
    p = phi.pullback(F)
    rho = KForm(6, 3, np.array([p[idx] for idx in _idx6(3)]))
    omega = KForm(6, 2, np.array([p[idx + (6,)] for idx in _idx6(2)]))
    ori = orientation * int(np.sign(detF))
    data = analyze_definite(rho, ori)
    orth = wedge(omega, rho).norm()
    w3 = wedge(wedge(omega, omega), omega) / 6.0
    norm = (w3 - data.vol).norm()
    return Split(omega, rho, data, orth, norm)


def _idx6(k: int):
    from .exterior import basis
    return basis(6, k)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def star_phi_field(phi: FormField, orientation: int = 1) -> FormField:
    if (phi.n, phi.degree) != (7, 3):
        raise ValueError("expected a 3-form field on a 7-chart")
    f = phi.func
    return phi.replace(degree=4, func=lambda x: star_coeffs(f(x), 3, f(x), orientation))


def metric_field(phi: FormField, orientation: int = 1):
    f = phi.func
    return lambda x: metric(f(phi.chart.wrap(np.asarray(x, dtype=float))), orientation)


@dataclass(frozen=True)
class TorsionResidual:
    d_phi: float
    d_star_phi: float


def torsion_residual(phi: FormField, orientation: int = 1,
                     points: np.ndarray | None = None) -> TorsionResidual:
    """Max norms of d phi and d(*phi) over the chart grid (or given points)."""
    x = phi.chart.grid_points() if points is None else np.asarray(points, dtype=float)
    c = phi(x)
    try:
        metric(c, orientation)
    except NotPositive as exc:
        margins = positivity_margin(c, orientation)
        i = int(np.argmin(margins))
        raise NotPositive(f"{exc} (point {x.reshape(-1, 7)[i].tolist()})") from None
    dphi = exterior_derivative(phi)(x)
    dstar = exterior_derivative(star_phi_field(phi, orientation))(x)
    return TorsionResidual(float(np.max(np.linalg.norm(dphi, axis=-1))),
                           float(np.max(np.linalg.norm(dstar, axis=-1))))
