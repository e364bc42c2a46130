"""Definite 3-forms on R^6: complex structure, rho tilde, volume, bidegrees, (2,2)-forms.

Coordinates on R^6 are ordered (x1, y1, x2, y2, x3, y3) with z_j = x_j + i y_j.
The reference volume is e* = orientation * dx1 dy1 dx2 dy2 dx3 dy3.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import Degenerate, Lemma1Violation, NotClosed, NotDefinite, NotType22
from .exterior import (
    FormField,
    KForm,
    _contract_tensor,
    basis,
    contract_all,
    exterior_derivative,
    pullback_coeffs,
    two_form_matrix,
    wedge,
    wedge_coeffs,
)

N6 = 6
DEGENERACY_TOL = 1e-12


# ---------------------------------------------------------------------------
# model forms
# ---------------------------------------------------------------------------

def dz_forms() -> np.ndarray:
    """Rows are the complex 1-forms dz1, dz2, dz3 in the real coordinate basis."""
    dz = np.zeros((3, 6), dtype=complex)
    for j in range(3):
        dz[j, 2 * j] = 1.0
        dz[j, 2 * j + 1] = 1.0j
    return dz


def omega_model() -> KForm:
    """omega_0 = dx1 dy1 + dx2 dy2 + dx3 dy3."""
    return KForm.from_dict(6, 2, {(0, 1): 1.0, (2, 3): 1.0, (4, 5): 1.0})


def holomorphic_volume_model() -> KForm:
    """Omega_0 = dz1 dz2 dz3 as a complex 3-form."""
    dz = dz_forms()
    one = [KForm(6, 1, dz[j]) for j in range(3)]
    return wedge(wedge(one[0], one[1]), one[2])


def rho_model() -> KForm:
    """rho_0 = Re(dz1 dz2 dz3)."""
    return holomorphic_volume_model().real


def rho_tilde_model() -> KForm:
    """Im(dz1 dz2 dz3)."""
    return holomorphic_volume_model().imag


def standard_I() -> np.ndarray:
    """Standard complex structure: I d/dx_j = d/dy_j, I d/dy_j = -d/dx_j."""
    I = np.zeros((6, 6))
    for j in range(3):
        I[2 * j + 1, 2 * j] = 1.0
        I[2 * j, 2 * j + 1] = -1.0
    return I


def normal_form_22(lams) -> KForm:
    """lam1 dx2dy2dx3dy3 + lam2 dx3dy3dx1dy1 + lam3 dx1dy1dx2dy2."""
    l1, l2, l3 = lams
    return KForm.from_dict(6, 4, {(2, 3, 4, 5): l1, (4, 5, 0, 1): l2, (0, 1, 2, 3): l3})


# ---------------------------------------------------------------------------
# batched core
# ---------------------------------------------------------------------------

def _five_to_vector() -> np.ndarray:
    """Matrix M with (i_w e_123456) = w @ M; its inverse turns 5-forms into vectors."""
    top = np.ones(1)
    M = np.einsum("i,vij->vj", top, _contract_tensor(6, 6))
    return M


_M5 = _five_to_vector()
_M5_INV = np.linalg.inv(_M5)


def hitchin_K(rho: np.ndarray, orientation: int = 1) -> np.ndarray:
    """Hitchin endomorphism: i_{K v} e* = i_v rho ^ rho, batched over (..., 20)."""
    rho = np.asarray(rho)
    ivr = contract_all(rho, 6, 3)                          # (..., 6, 15)
    five = wedge_coeffs(ivr, rho[..., None, :], 6, 2, 3)   # (..., 6, 6)
    w = orientation * five @ _M5_INV                        # row j is K e_j
    return np.swapaxes(w, -1, -2)


def quartic_invariant(rho: np.ndarray) -> np.ndarray:
    """lambda(rho) = tr(K^2) / 6; negative exactly on definite forms."""
    K = hitchin_K(rho)
    return np.einsum("...ij,...ji->...", K, K) / 6.0


# K for rho_0 with e* = +e_123456 equals s * I_0; we fix s once.
_K0 = hitchin_K(rho_model().coeffs)
_LAM0 = float(np.trace(_K0 @ _K0) / 6.0)
_SIGN = float(np.sign(np.sum(_K0 * standard_I())))


def complex_structure(rho: np.ndarray, orientation: int = 1,
                      check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Batched (I, lambda).  Raises on non-definite input when ``check``."""
    rho = np.asarray(rho, dtype=float)
    K = hitchin_K(rho, orientation)
    lam = np.einsum("...ij,...ji->...", K, K) / 6.0
    if check:
        scale = np.sum(rho ** 2, axis=-1) ** 2
        bad = np.abs(lam) < DEGENERACY_TOL * np.maximum(scale, 1e-300)
        if np.any(bad):
            raise Degenerate(float(np.asarray(lam)[bad].flat[0]))
        if np.any(lam >= 0):
            raise NotDefinite(float(np.max(lam)))
    root = np.sqrt(np.maximum(-lam, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        I = _SIGN * K / root[..., None, None]
    return I, lam


def tilde_coeffs(rho: np.ndarray, orientation: int = 1, check: bool = True) -> np.ndarray:
    """rho tilde = I^* rho, batched."""
    I, _ = complex_structure(rho, orientation, check)
    return pullback_coeffs(rho, I, 3)


def volume_density(rho: np.ndarray, orientation: int = 1) -> np.ndarray:
    """Coefficient v with vol_rho = v * e_123456 (sign carries the orientation)."""
    rt = tilde_coeffs(rho, orientation)
    return 0.25 * wedge_coeffs(rho, rt, 6, 3, 3)[..., 0]


def hitchin_density(rho: np.ndarray) -> np.ndarray:
    """|vol_rho| as a continuous function of rho: sqrt(max(-lambda, 0)) rescaled.

    Unlike :func:`volume_density` it vanishes gracefully at degenerate forms,
    which matters when a parametrisation collapses at the edge of a chart.
    """
    lam = quartic_invariant(np.asarray(rho, dtype=float))
    return np.sqrt(np.maximum(-lam, 0.0) / -_LAM0)


# ---------------------------------------------------------------------------
# pointwise package
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SL3CData:
    """A definite 3-form with its derived structure."""

    rho: KForm
    lam: float
    I: np.ndarray
    rho_tilde: KForm
    vol: KForm
    orientation: int

    @property
    def Omega(self) -> KForm:
        """The (3,0)-form rho + i rho tilde."""
        return KForm(6, 3, self.rho.coeffs + 1j * self.rho_tilde.coeffs)

    @property
    def volume(self) -> float:
        """Signed coefficient of vol against the reference e* (positive)."""
        return float(self.vol.coeffs[0] * self.orientation)


def analyze_definite(rho: KForm, orientation: int = 1) -> SL3CData:
    if (rho.n, rho.k) != (6, 3):
        raise ValueError("analyze_definite expects a 3-form on R^6")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    c = np.asarray(rho.coeffs, dtype=float)
    I, lam = complex_structure(c, orientation)
    rt = KForm(6, 3, pullback_coeffs(c, I, 3))
    vol = 0.25 * wedge(rho, rt)
    return SL3CData(KForm(6, 3, c), float(lam), I, rt, vol, orientation)


@dataclass(frozen=True)
class RankReport:
    min_rank: int
    max_rank: int
    min_ratio: float
    rank4_everywhere: bool


def _rank_ratio(W: np.ndarray) -> tuple[int, float]:
    s = np.linalg.svd(W, compute_uv=False)
    rank = int(np.sum(s > 1e-9 * s[0])) if s[0] > 0 else 0
    return rank, float(s[3] / s[0]) if s[0] > 0 else 0.0


def rank_test(rho: KForm, samples: int = 500, seed: int = 0,
              refine: int = 8, threshold: float = 1e-4) -> RankReport:
    """Literal rank check of i_v rho over random unit vectors.

    Random sampling alone never sees the measure-zero set where the rank
    drops for split forms, so the smallest normalised 4th singular value is
    additionally minimised over the sphere starting from the worst samples.
    """
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(samples, 6))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    W = two_form_matrix(contract_all(rho.coeffs, 6, 3), 6)  # (6, 6, 6): row v
    mats = np.einsum("sv,vij->sij", V, W)
    ranks, ratios = zip(*(_rank_ratio(M) for M in mats))

    def objective(v):
        v = v / np.linalg.norm(v)
        return _rank_ratio(np.einsum("v,vij->ij", v, W))[1]

    best = min(ratios)
    for i in np.argsort(ratios)[:refine]:
        res = optimize.minimize(objective, V[i], method="Nelder-Mead",
                                options=dict(xatol=1e-10, fatol=1e-12, maxiter=4000))
        best = min(best, float(res.fun))
    return RankReport(int(min(ranks)), int(max(ranks)), best, best > threshold)


# ---------------------------------------------------------------------------
# bidegree decomposition
# ---------------------------------------------------------------------------

def _check_complex_structure(I: np.ndarray) -> None:
    I = np.asarray(I)
    if np.linalg.norm(I @ I + np.eye(I.shape[0])) > 1e-8:
        raise ValueError("matrix does not square to -Id")


def bitype_project(a: KForm, I: np.ndarray, p: int, q: int) -> KForm:
    """(p,q) component of ``a`` with respect to the complex structure I.

    Uses the circle action cos(t) Id + sin(t) I, which multiplies
    (p,q)-forms by exp(i (p - q) t), and averages against the character.
    """
    if p + q != a.k or p < 0 or q < 0:
        raise ValueError(f"({p},{q}) is not a bidegree of a {a.k}-form")
    _check_complex_structure(I)
    return KForm(a.n, a.k, _project(a.coeffs, I, a.k, p - q))


def _project(c: np.ndarray, I: np.ndarray, k: int, m: int) -> np.ndarray:
    """Batched projection onto the e^{i m t} eigenspace of the circle action."""
    N = 2 * k + 1
    n = I.shape[-1]
    out = np.zeros(np.shape(c), dtype=complex)
    for j in range(N):
        t = 2 * np.pi * j / N
        L = math.cos(t) * np.eye(n) + math.sin(t) * I
        out = out + np.exp(-1j * m * t) * pullback_coeffs(c, L, k)
    return out / N


def bitype_parts(a: KForm, I: np.ndarray) -> dict[tuple[int, int], KForm]:
    return {(p, a.k - p): bitype_project(a, I, p, a.k - p) for p in range(a.k + 1)}


def off_type22_fraction(sigma: np.ndarray, I: np.ndarray) -> np.ndarray:
    """Batched |sigma - sigma_(2,2)| / |sigma| (0 where sigma vanishes)."""
    p22 = _project(sigma, I, 4, 0).real
    num = np.linalg.norm(sigma - p22, axis=-1)
    den = np.linalg.norm(sigma, axis=-1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


# ---------------------------------------------------------------------------
# variations
# ---------------------------------------------------------------------------

def delta_vol(data: SL3CData, drho: KForm) -> KForm:
    """First variation of the volume form: half drho ^ rho tilde."""
    return 0.5 * wedge(drho, data.rho_tilde)


def delta_rho_tilde(data: SL3CData, drho: KForm) -> KForm:
    """First variation of rho tilde from the bidegree decomposition of drho."""
    parts = bitype_parts(drho, data.I)
    out = (-1j * parts[(3, 0)].coeffs - 1j * parts[(2, 1)].coeffs
           + 1j * parts[(1, 2)].coeffs + 1j * parts[(0, 3)].coeffs)
    if np.max(np.abs(out.imag)) > 1e-10 * max(1.0, drho.norm()):
        raise ArithmeticError("variation of rho tilde came out complex")
    return KForm(6, 3, out.real)


# ---------------------------------------------------------------------------
# taming
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TamingResult:
    margin: float
    tamed: bool


def taming_matrix(omega: np.ndarray, I: np.ndarray) -> np.ndarray:
    """Symmetric matrix of (x, y) -> (omega(x, Iy) + omega(y, Ix)) / 2, batched."""
    W = two_form_matrix(omega, I.shape[-1])
    WI = W @ I
    return 0.5 * (WI + np.swapaxes(WI, -1, -2))


def taming_check(omega: KForm, data: SL3CData) -> TamingResult:
    if omega.k != 2:
        raise ValueError("taming form must have degree 2")
    margin = float(np.linalg.eigvalsh(taming_matrix(omega.coeffs, data.I))[0])
    return TamingResult(margin, margin > 0)


# ---------------------------------------------------------------------------
# (2,2)-forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Herm22:
    matrix: np.ndarray
    det22: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def unimodular_coframe(data: SL3CData) -> np.ndarray:
    """Three (1,0)-forms theta (rows) with theta1 theta2 theta3 = rho + i rho tilde."""
    P = 0.5 * (np.eye(6) - 1j * data.I.T)   # projector onto (1,0)-covectors
    cols: list[np.ndarray] = []
    for j in range(6):
        cand = cols + [P[:, j]]
        if np.linalg.matrix_rank(np.array(cand), tol=1e-8) == len(cand):
            cols = cand
        if len(cols) == 3:
            break
    theta = np.array(cols)
    top = wedge_coeffs(wedge_coeffs(theta[0], theta[1], 6, 1, 1), theta[2], 6, 2, 1)
    Om = data.Omega.coeffs
    j = int(np.argmax(np.abs(Om)))
    c = top[j] / Om[j]
    return theta * c ** (-1.0 / 3.0)


@functools.lru_cache(maxsize=None)
def _bivector_matrix() -> np.ndarray:
    """Rows: i_{e_a ^ e_b} e_123456 as 4-forms, with i_{u ^ v} = i_v i_u."""
    rows = []
    for a, b in basis(6, 2):
        five = _contract_tensor(6, 6)[a, 0]
        rows.append(np.einsum("i,ij->j", five, _contract_tensor(6, 5)[b]))
    return np.array(rows)


def det22_batch(sigma: np.ndarray, vol: np.ndarray) -> np.ndarray:
    """det of (2,2)-forms: dualise to a bivector with vol, cube, pair with vol / 6.

    ``vol`` is the coefficient of vol_rho against e_123456; batched.
    """
    sigma = np.asarray(sigma, dtype=float)
    vol = np.asarray(vol, dtype=float)
    B = np.linalg.solve(_bivector_matrix().T, sigma[..., None])[..., 0] / vol[..., None]
    B3 = wedge_coeffs(wedge_coeffs(B, B, 6, 2, 2), B, 6, 4, 2)[..., 0]
    return B3 * vol / 6.0


def det22_bivector(sigma: np.ndarray, vol: float) -> float:
    return float(det22_batch(sigma, np.asarray(vol)))


def herm_of_22(sigma: KForm, data: SL3CData, tol: float = 1e-8) -> Herm22:
    """Hermitian matrix h_jk with h_jk vol = (1/2) sigma ^ i theta_j ^ conj(theta_k)."""
    if (sigma.n, sigma.k) != (6, 4):
        raise ValueError("expected a 4-form on R^6")
    s = np.asarray(sigma.coeffs, dtype=float)
    if np.linalg.norm(s) > 0:
        frac = float(off_type22_fraction(s, data.I))
        if frac > tol:
            raise NotType22(frac)
    theta = unimodular_coframe(data)
    v = float(data.vol.coeffs[0])
    h = np.zeros((3, 3), dtype=complex)
    for j in range(3):
        for k in range(3):
            tt = 1j * wedge_coeffs(theta[j], np.conj(theta[k]), 6, 1, 1)
            h[j, k] = 0.5 * wedge_coeffs(s, tt, 6, 4, 2)[0] / v
    h = 0.5 * (h + h.conj().T)
    return Herm22(h, det22_bivector(s, v))


def herm_eigenvalues_batch(sigma: np.ndarray, rho: np.ndarray, orientation: int = 1,
                           tol: float = 1e-4, atol: float = 0.0) -> np.ndarray:
    """Eigenvalues of the Hermitian form of each (2,2)-form against its rho.

    Forms with norm at most ``atol`` (finite-difference noise) count as zero.
    """
    sig = np.asarray(sigma, dtype=float)
    r = np.asarray(rho, dtype=float)
    out = np.array([np.zeros(3) if np.linalg.norm(s) <= atol else
                    herm_of_22(KForm(6, 4, s), analyze_definite(KForm(6, 3, c), orientation),
                               tol=tol).eigenvalues
                    for s, c in zip(sig.reshape(-1, 15), r.reshape(-1, 20))])
    return out.reshape(sig.shape[:-1] + (3,))


CLASSES = ("positive", "semipositive", "negative", "seminegative", "indefinite", "zero")


def classify_eigenvalues(ev: np.ndarray, rtol: float = 1e-9, atol: float = 1e-12) -> str:
    ev = np.asarray(ev, dtype=float)
    scale = max(float(np.max(np.abs(ev))), 0.0)
    eps = max(rtol * scale, atol)
    if scale <= atol:
        return "zero"
    pos = ev > eps
    neg = ev < -eps
    if pos.all():
        return "positive"
    if neg.all():
        return "negative"
    if not neg.any():
        return "semipositive"
    if not pos.any():
        return "seminegative"
    return "indefinite"


def classify_22(sigma: KForm, data: SL3CData) -> str:
    if sigma.norm() == 0:
        return "zero"
    return classify_eigenvalues(herm_of_22(sigma, data).eigenvalues)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def rho_tilde_field(rho: FormField, orientation: int = 1) -> FormField:
    if (rho.n, rho.degree) != (6, 3):
        raise ValueError("expected a 3-form field on a 6-chart")
    f = rho.func
    return rho.replace(func=lambda x: tilde_coeffs(f(x), orientation))


@dataclass(frozen=True, eq=False)
class MeanConvexity:
    points: np.ndarray
    classes: list[str]
    eigenvalues: np.ndarray
    det22: np.ndarray
    off_type: np.ndarray
    m: float

    @property
    def strictly_mean_convex(self) -> bool:
        return all(c == "positive" for c in self.classes)

    @property
    def mean_convex(self) -> bool:
        return all(c in ("positive", "semipositive") for c in self.classes)


def mean_convexity(rho: FormField, orientation: int = 1, points: np.ndarray | None = None,
                   closed_tol: float = 1e-5, type22_tol: float = 1e-4) -> MeanConvexity:
    """Pointwise (2,2)-classification of d rho tilde over the chart grid."""
    x = rho.chart.grid_points() if points is None else np.asarray(points, dtype=float)
    drho = exterior_derivative(rho)(x)
    res = float(np.max(np.abs(drho), initial=0.0))
    if res > closed_tol:
        raise NotClosed(res)
    c = rho(x)
    I, _ = complex_structure(c, orientation)
    sig = exterior_derivative(rho_tilde_field(rho, orientation))(x)
    off = off_type22_fraction(sig, I)
    if np.max(off, initial=0.0) > type22_tol:
        raise Lemma1Violation(float(np.max(off)))
    classes, eigs, dets = [], [], []
    for ci, si in zip(c.reshape(-1, 20), sig.reshape(-1, 15)):
        data = analyze_definite(KForm(6, 3, ci), orientation)
        if np.linalg.norm(si) == 0:
            classes.append("zero")
            eigs.append(np.zeros(3))
            dets.append(0.0)
            continue
        h = herm_of_22(KForm(6, 4, si), data, tol=type22_tol)
        ev = h.eigenvalues
        eigs.append(ev)
        dets.append(h.det22)
        classes.append(classify_eigenvalues(ev, rtol=1e-6, atol=1e-9))
    dets = np.array(dets)
    m = float(np.min(np.cbrt(dets))) if len(dets) else float("nan")
    return MeanConvexity(x, classes, np.array(eigs), dets, off, m)
