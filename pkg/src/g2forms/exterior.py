"""Pointwise exterior algebra on R^n and form fields over box charts.

Forms are stored densely: a k-form on R^n is an array of C(n, k) coefficients
indexed by lexicographically sorted index tuples (see :func:`basis`).  Every
array routine accepts leading batch dimensions, so a whole grid of forms is a
``(..., C(n, k))`` array and the same code path serves single points.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

MAX_DIM = 8


# ---------------------------------------------------------------------------
# index bookkeeping
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def basis(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Sorted index tuples labelling the coefficients of a k-form on R^n."""
    return tuple(itertools.combinations(range(n), k))


@functools.lru_cache(maxsize=None)
def _position(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: i for i, idx in enumerate(basis(n, k))}


def perm_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq`` (0 if it has repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@functools.lru_cache(maxsize=None)
def _wedge_tensor(n: int, ka: int, kb: int) -> np.ndarray:
    out = np.zeros((math.comb(n, ka), math.comb(n, kb), math.comb(n, ka + kb)))
    pos = _position(n, ka + kb)
    for i, a in enumerate(basis(n, ka)):
        for j, b in enumerate(basis(n, kb)):
            s = perm_sign(a + b)
            if s:
                out[i, j, pos[tuple(sorted(a + b))]] = s
    return out


@functools.lru_cache(maxsize=None)
def _wedge_matrix(n: int, ka: int, kb: int) -> np.ndarray:
    W = _wedge_tensor(n, ka, kb)
    return np.ascontiguousarray(W.transpose(1, 0, 2).reshape(W.shape[1], -1))


@functools.lru_cache(maxsize=None)
def _wedge_pairs(n: int, ka: int, kb: int):
    """Sparse form of the wedge table: factor indices and a signed scatter matrix."""
    W = _wedge_tensor(n, ka, kb)
    ia, ib, io = np.nonzero(W)
    M = np.zeros((len(ia), W.shape[2]))
    M[np.arange(len(ia)), io] = W[ia, ib, io]
    return ia, ib, M


@functools.lru_cache(maxsize=None)
def _contract_tensor(n: int, k: int) -> np.ndarray:
    # i_v(dx^I): the slot for v is the first one
    out = np.zeros((n, math.comb(n, k), math.comb(n, k - 1)))
    pos = _position(n, k - 1)
    for i, idx in enumerate(basis(n, k)):
        for slot, v in enumerate(idx):
            rest = idx[:slot] + idx[slot + 1:]
            out[v, i, pos[rest]] = (-1) ** slot
    return out


@functools.lru_cache(maxsize=None)
def _complement_signs(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """For each sorted K: index of its complement and sign of (K, K^c)."""
    pos = _position(n, n - k)
    idx = np.zeros(math.comb(n, k), dtype=int)
    sgn = np.zeros(math.comb(n, k))
    for i, K in enumerate(basis(n, k)):
        comp = tuple(j for j in range(n) if j not in K)
        idx[i] = pos[comp]
        sgn[i] = perm_sign(K + comp)
    return idx, sgn


# ---------------------------------------------------------------------------
# coefficient-array operations (batched)
# ---------------------------------------------------------------------------

def wedge_coeffs(a: np.ndarray, b: np.ndarray, n: int, ka: int, kb: int) -> np.ndarray:
    """Wedge product of coefficient arrays ``a`` (degree ka) and ``b`` (degree kb)."""
    if ka + kb > n:
        raise ValueError(f"degree overflow: {ka} + {kb} > {n}")
    a = np.asarray(a)
    b = np.asarray(b)
    if ka == 0:
        return a[..., :1] * b
    if kb == 0:
        return a * b[..., :1]
    ca, co = math.comb(n, ka), math.comb(n, ka + kb)
    # contract b against the table first: (..., ca, co), then pair with a
    Wb = (np.ascontiguousarray(b) @ _wedge_matrix(n, ka, kb)).reshape(b.shape[:-1] + (ca, co))
    if co == 1:
        return np.sum(a * Wb[..., 0], axis=-1)[..., None]
    return np.einsum("...i,...io->...o", a, Wb)


def contract_coeffs(v: np.ndarray, a: np.ndarray, n: int, k: int) -> np.ndarray:
    """Interior product i_v a of vectors ``v`` (..., n) into k-forms ``a``."""
    if k == 0:
        raise ValueError("cannot contract a 0-form")
    C = _contract_tensor(n, k)
    tmp = np.einsum("...v,vij->...ij", v, C)
    return np.einsum("...i,...ij->...j", a, tmp)


def contract_all(a: np.ndarray, n: int, k: int) -> np.ndarray:
    """Stack of i_{e_j} a for every coordinate vector; shape (..., n, C(n,k-1))."""
    C = _contract_tensor(n, k)
    flat = np.ascontiguousarray(a) @ C.transpose(1, 0, 2).reshape(C.shape[1], -1)
    return flat.reshape(np.shape(a)[:-1] + (n, C.shape[2]))


@functools.lru_cache(maxsize=None)
def _laplace_tables(m: int, n: int, k: int):
    """Index tables expanding k x k minors along their last row."""
    prev_pos_m = _position(m, k - 1)
    prev_pos_n = _position(n, k - 1)
    rows = basis(m, k)
    cols = basis(n, k)
    last = np.array([K[-1] for K in rows])
    head = np.array([prev_pos_m[K[:-1]] for K in rows])
    col = np.array([[I[s] for I in cols] for s in range(k)])
    sub = np.array([[prev_pos_n[I[:s] + I[s + 1:]] for I in cols] for s in range(k)])
    sign = np.array([(-1.0) ** (k - 1 + s) for s in range(k)])
    return last, head, col, sub, sign


def compound(J: np.ndarray, k: int) -> np.ndarray:
    """k-th compound matrix of ``J`` (..., m, n): all k x k minors.

    Entry [K, I] is det J[K, I] for sorted K (rows) and I (columns).
    """
    J = np.asarray(J)
    m, n = J.shape[-2:]
    if k == 0:
        return np.ones(J.shape[:-2] + (1, 1), dtype=J.dtype)
    if k == 1:
        return J
    prev = compound(J, k - 1)
    last, head, col, sub, sign = _laplace_tables(m, n, k)
    Jl = J[..., last, :]            # (..., C(m,k), n)
    Ph = prev[..., head, :]         # (..., C(m,k), C(n,k-1))
    out = np.zeros(J.shape[:-2] + (len(last), col.shape[1]), dtype=np.result_type(J, float))
    for s in range(k):
        out += sign[s] * Jl[..., col[s]] * Ph[..., sub[s]]
    return out


@functools.lru_cache(maxsize=None)
def _expand_tables(n: int, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gather tables between sorted coefficients and the flat n^k tensor.

    Returns (src, sign) with T.flat[j] = sign[j] * a[src[j]] and the flat
    positions of the sorted index tuples.
    """
    src = np.zeros(n ** k, dtype=int)
    sign = np.zeros(n ** k)
    pos = _position(n, k)
    for j, idx in enumerate(itertools.product(range(n), repeat=k)):
        sg = perm_sign(idx)
        if sg:
            src[j] = pos[tuple(sorted(idx))]
            sign[j] = sg
    sorted_flat = np.array([np.ravel_multi_index(I, (n,) * k) for I in basis(n, k)],
                           dtype=int)
    return src, sign, sorted_flat


def pullback_coeffs(a: np.ndarray, J: np.ndarray, k: int) -> np.ndarray:
    """Pull back k-forms on R^m along a linear map with matrix ``J`` (m x n)."""
    if k == 0:
        return np.asarray(a)
    a = np.asarray(a)
    J = np.asarray(J)
    m, n = J.shape[-2:]
    if k == n:
        # top degree on the source: minors are plain determinants
        rows = np.array(basis(m, k))
        minors = np.linalg.det(J[..., rows, :])
        return np.einsum("...K,...K->...", a, minors)[..., None]
    batch = np.broadcast_shapes(a.shape[:-1], J.shape[:-2])
    src, sign, _ = _expand_tables(m, k)
    T = np.broadcast_to(a[..., src] * sign, batch + (m ** k,))
    Jb = np.broadcast_to(J, batch + (m, n))
    # contract the trailing slot with J, then rotate the new slot to the front;
    # after k rounds the slots are back in their original order
    for i in range(k):
        lead = m ** (k - 1 - i) * n ** i
        T = T.reshape(batch + (lead, m)) @ Jb
        T = np.swapaxes(T, -1, -2).reshape(batch + (n * lead,))
    _, _, sorted_flat = _expand_tables(n, k)
    return T[..., sorted_flat]


def to_tensor(a: np.ndarray, n: int, k: int) -> np.ndarray:
    """Fully antisymmetric (..., n, ..., n) tensor with T[I] = a_I on sorted I."""
    a = np.asarray(a)
    T = np.zeros(a.shape[:-1] + (n,) * k, dtype=a.dtype)
    for i, idx in enumerate(basis(n, k)):
        for p in itertools.permutations(range(k)):
            T[(Ellipsis,) + tuple(idx[j] for j in p)] = perm_sign(p) * a[..., i]
    return T


def from_tensor(T: np.ndarray, n: int, k: int) -> np.ndarray:
    return np.stack([T[(Ellipsis,) + idx] for idx in basis(n, k)], axis=-1)


def two_form_matrix(a: np.ndarray, n: int) -> np.ndarray:
    """Antisymmetric matrix W with W[i, j] = a(e_i, e_j)."""
    return to_tensor(a, n, 2)


def matrix_two_form(W: np.ndarray) -> np.ndarray:
    n = W.shape[-1]
    return from_tensor(W, n, 2)


def hodge_star_coeffs(a: np.ndarray, n: int, k: int, g: np.ndarray,
                      orientation: int = 1) -> np.ndarray:
    """Hodge star of k-forms with respect to metrics ``g`` (..., n, n)."""
    g = np.asarray(g)
    L = np.swapaxes(np.linalg.cholesky(g), -1, -2)  # g = L^T L, det L > 0
    Linv = np.linalg.inv(L)
    a_on = pullback_coeffs(a, Linv, k)
    idx, sgn = _complement_signs(n, k)
    star_on = np.zeros(a_on.shape[:-1] + (math.comb(n, n - k),), dtype=a_on.dtype)
    star_on[..., idx] = a_on * sgn
    return orientation * pullback_coeffs(star_on, L, n - k)


def norm_sq_coeffs(a: np.ndarray, n: int, k: int, g: np.ndarray) -> np.ndarray:
    """|a|^2 with respect to the metric g (sorted-index convention)."""
    L = np.swapaxes(np.linalg.cholesky(g), -1, -2)
    a_on = pullback_coeffs(a, np.linalg.inv(L), k)
    return np.sum(np.abs(a_on) ** 2, axis=-1)


# ---------------------------------------------------------------------------
# pointwise forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KForm:
    """An alternating k-form at a point of R^n (real or complex coefficients)."""

    n: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension {self.n} outside 1..{MAX_DIM}")
        if not 0 <= self.k <= self.n:
            raise ValueError(f"degree {self.k} outside 0..{self.n}")
        c = np.asarray(self.coeffs)
        if c.dtype.kind not in "fc":
            c = c.astype(float)
        if c.shape != (math.comb(self.n, self.k),):
            raise ValueError(
                f"expected {math.comb(self.n, self.k)} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, n: int, k: int) -> "KForm":
        return cls(n, k, np.zeros(math.comb(n, k)))

    @classmethod
    def from_dict(cls, n: int, k: int, terms: dict) -> "KForm":
        """Build from {index tuple: value}; unsorted tuples pick up the permutation sign."""
        c = np.zeros(math.comb(n, k), dtype=complex if any(
            isinstance(v, complex) for v in terms.values()) else float)
        pos = _position(n, k)
        for idx, val in terms.items():
            s = perm_sign(idx)
            if s == 0:
                continue
            c[pos[tuple(sorted(idx))]] += s * val
        return cls(n, k, c)

    @classmethod
    def dx(cls, n: int, *idx: int) -> "KForm":
        return cls.from_dict(n, len(idx), {tuple(idx): 1.0})

    def __getitem__(self, idx: tuple[int, ...]) -> float:
        s = perm_sign(idx)
        if s == 0:
            return 0.0
        return s * self.coeffs[_position(self.n, self.k)[tuple(sorted(idx))]]

    def _check(self, other: "KForm") -> None:
        if (self.n, self.k) != (other.n, other.k):
            raise ValueError(f"form mismatch: ({self.n},{self.k}) vs ({other.n},{other.k})")

    def __add__(self, other: "KForm") -> "KForm":
        self._check(other)
        return KForm(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other: "KForm") -> "KForm":
        self._check(other)
        return KForm(self.n, self.k, self.coeffs - other.coeffs)

    def __neg__(self) -> "KForm":
        return KForm(self.n, self.k, -self.coeffs)

    def __mul__(self, c) -> "KForm":
        return KForm(self.n, self.k, c * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, c) -> "KForm":
        return KForm(self.n, self.k, self.coeffs / c)

    def __xor__(self, other: "KForm") -> "KForm":
        return wedge(self, other)

    @property
    def real(self) -> "KForm":
        return KForm(self.n, self.k, self.coeffs.real.copy())

    @property
    def imag(self) -> "KForm":
        return KForm(self.n, self.k, self.coeffs.imag.copy())

    def conj(self) -> "KForm":
        return KForm(self.n, self.k, np.conj(self.coeffs))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def pullback(self, A: np.ndarray) -> "KForm":
        """Pull back along the linear map with matrix A (n x m source dim m)."""
        A = np.asarray(A)
        if A.shape[0] != self.n:
            raise ValueError(f"matrix has {A.shape[0]} rows, form lives on R^{self.n}")
        return KForm(A.shape[1], self.k, pullback_coeffs(self.coeffs, A, self.k))

    def allclose(self, other: "KForm", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol)

    def __repr__(self) -> str:
        terms = [f"{c:+.6g}*e{''.join(str(i + 1) for i in idx)}"
                 for c, idx in zip(self.coeffs, basis(self.n, self.k)) if c != 0]
        return f"KForm(n={self.n}, k={self.k}, {' '.join(terms) or '0'})"


def wedge(a: KForm, b: KForm) -> KForm:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.k + b.k > a.n:
        raise ValueError(f"degree overflow: {a.k} + {b.k} > {a.n}")
    return KForm(a.n, a.k + b.k, wedge_coeffs(a.coeffs, b.coeffs, a.n, a.k, b.k))


def contract(v, a: KForm) -> KForm:
    v = np.asarray(v)
    if v.shape != (a.n,):
        raise ValueError(f"vector of length {v.shape} cannot contract a form on R^{a.n}")
    if a.k == 0:
        raise ValueError("cannot contract a 0-form")
    return KForm(a.n, a.k - 1, contract_coeffs(v, a.coeffs, a.n, a.k))


def hodge_star(a: KForm, g=None, orientation: int = 1) -> KForm:
    g = np.eye(a.n) if g is None else np.asarray(g)
    return KForm(a.n, a.n - a.k, hodge_star_coeffs(a.coeffs, a.n, a.k, g, orientation))


# ---------------------------------------------------------------------------
# charts, fields, maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Chart:
    """Axis-aligned box in R^n with a sampling grid.

    Periodic axes identify ``lo`` with ``hi``; their grid excludes ``hi`` so
    no sample is counted twice.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    grid: tuple[int, ...]
    orientation: int = 1
    periodic: tuple[bool, ...] = ()
    rules: tuple[str, ...] = ()

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        grid = tuple(int(g) for g in self.grid)
        per = tuple(bool(p) for p in self.periodic) or (False,) * len(lo)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "periodic", per)
        rules = tuple(self.rules) or ("trapezoid",) * len(lo)
        object.__setattr__(self, "rules", rules)
        n = len(lo)
        if not 1 <= n <= MAX_DIM:
            raise ValueError(f"chart dimension {n} outside 1..{MAX_DIM}")
        if not (len(hi) == len(grid) == len(per) == n):
            raise ValueError("lo, hi, grid, periodic must have equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("each axis needs lo < hi")
        if any(g < 2 for g in grid):
            raise ValueError("grid counts must be >= 2")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if len(rules) != n or any(r not in ("trapezoid", "romberg") for r in rules):
            raise ValueError("rules must name 'trapezoid' or 'romberg' for every axis")
        for g, r, p in zip(grid, rules, per):
            if r == "romberg" and not p and (g - 1) & (g - 2):
                raise ValueError("romberg axes need 2^j + 1 grid points")

    @classmethod
    def box(cls, n: int, lo: float = 0.0, hi: float = 1.0, grid: int = 9,
            periodic: bool = False, orientation: int = 1) -> "Chart":
        return cls((lo,) * n, (hi,) * n, (grid,) * n, orientation, (periodic,) * n)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.hi) - np.array(self.lo)

    def axes(self) -> list[np.ndarray]:
        out = []
        for lo, hi, g, per in zip(self.lo, self.hi, self.grid, self.periodic):
            if per:
                out.append(lo + (hi - lo) * np.arange(g) / g)
            else:
                out.append(np.linspace(lo, hi, g))
        return out

    def weights(self) -> list[np.ndarray]:
        """Quadrature weights per axis.

        Composite trapezoid by default, the rectangle rule on periodic axes,
        and Romberg extrapolation of nested trapezoid rules on axes marked
        ``"romberg"``.
        """
        out = []
        for lo, hi, g, per, rule in zip(self.lo, self.hi, self.grid, self.periodic,
                                        self.rules):
            if per:
                out.append(np.full(g, (hi - lo) / g))
            elif rule == "romberg":
                out.append((hi - lo) * romberg_weights(g))
            else:
                out.append((hi - lo) * _trapezoid(g))
        return out

    def grid_points(self) -> np.ndarray:
        """All grid points, shape (prod(grid), dim), C order over axes."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def with_grid(self, grid) -> "Chart":
        if isinstance(grid, int):
            grid = (grid,) * self.dim
        return Chart(self.lo, self.hi, tuple(grid), self.orientation, self.periodic,
                     self.rules)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into [lo, hi)."""
        if not any(self.periodic):
            return x
        x = np.array(x, dtype=float, copy=True)
        for i, per in enumerate(self.periodic):
            if per:
                L = self.hi[i] - self.lo[i]
                x[..., i] = self.lo[i] + np.mod(x[..., i] - self.lo[i], L)
        return x

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        x = np.asarray(x)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i, per in enumerate(self.periodic):
            if per:
                continue
            scale = tol * max(1.0, self.hi[i] - self.lo[i])
            ok &= (x[..., i] >= self.lo[i] - scale) & (x[..., i] <= self.hi[i] + scale)
        return ok


def _trapezoid(n: int) -> np.ndarray:
    w = np.full(n, 1.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@functools.lru_cache(maxsize=None)
def romberg_weights(n: int) -> np.ndarray:
    """Weights on [0, 1] of the full Romberg tableau over n = 2^j + 1 nodes."""
    j = int(round(math.log2(n - 1)))
    if 2 ** j + 1 != n:
        raise ValueError("Romberg rule needs 2^j + 1 nodes")
    col = []
    for i in range(j + 1):
        m = 2 ** i + 1
        w = np.zeros(n)
        w[:: (n - 1) // (m - 1)] = _trapezoid(m)
        col.append(w)
    for k in range(1, j + 1):
        col = [(4 ** k * col[i + 1] - col[i]) / (4 ** k - 1) for i in range(len(col) - 1)]
    return col[0]


FieldFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FormField:
    """A k-form field on a chart, given by a vectorised coefficient function.

    ``func`` maps points of shape (..., n) to coefficients (..., C(n, k)); it
    must be pure so evaluations are reproducible and thread safe.  ``fd_step``
    is the absolute coordinate step used by finite differences; ``fd_order``
    is 2 (central differences) or 4 (central differences with one Richardson
    extrapolation h, h/2).
    """

    chart: Chart
    degree: int
    func: FieldFunc
    fd_step: float = 1e-3
    fd_order: int = 4

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart.dim:
            raise ValueError(f"degree {self.degree} invalid on a {self.chart.dim}-chart")
        if self.fd_order not in (2, 4):
            raise ValueError("fd_order must be 2 or 4")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")

    @property
    def n(self) -> int:
        return self.chart.dim

    @property
    def size(self) -> int:
        return math.comb(self.n, self.degree)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.func(self.chart.wrap(x)))
        if out.shape != x.shape[:-1] + (self.size,):
            out = np.broadcast_to(out, x.shape[:-1] + (self.size,))
        return out

    def at(self, x) -> KForm:
        return KForm(self.n, self.degree, self(np.asarray(x, dtype=float)))

    def on_grid(self) -> np.ndarray:
        return self(self.chart.grid_points())

    def replace(self, **kw) -> "FormField":
        args = dict(chart=self.chart, degree=self.degree, func=self.func,
                    fd_step=self.fd_step, fd_order=self.fd_order)
        args.update(kw)
        return FormField(**args)

    # arithmetic on fields: pointwise
    def __add__(self, other: "FormField") -> "FormField":
        _same_field_shape(self, other)
        f, g = self.func, other.func
        return self.replace(func=lambda x: f(x) + g(x))

    def __sub__(self, other: "FormField") -> "FormField":
        _same_field_shape(self, other)
        f, g = self.func, other.func
        return self.replace(func=lambda x: f(x) - g(x))

    def __mul__(self, c: float) -> "FormField":
        f = self.func
        return self.replace(func=lambda x: c * f(x))

    __rmul__ = __mul__

    def __xor__(self, other: "FormField") -> "FormField":
        return wedge_fields(self, other)


def _same_field_shape(a: FormField, b: FormField) -> None:
    if a.n != b.n or a.degree != b.degree:
        raise ValueError("fields differ in dimension or degree")


def constant_field(chart: Chart, form: KForm, **kw) -> FormField:
    if form.n != chart.dim:
        raise ValueError("form dimension does not match chart")
    c = form.coeffs.copy()
    return FormField(chart, form.k, lambda x: np.broadcast_to(c, np.shape(x)[:-1] + c.shape), **kw)


def wedge_fields(a: FormField, b: FormField) -> FormField:
    if a.n != b.n:
        raise ValueError("fields live on charts of different dimension")
    n, ka, kb = a.n, a.degree, b.degree
    if ka + kb > n:
        raise ValueError(f"degree overflow: {ka} + {kb} > {n}")
    fa, fb = a.func, b.func
    return a.replace(degree=ka + kb,
                     func=lambda x: wedge_coeffs(fa(x), fb(x), n, ka, kb))


def partials(f: Callable[[np.ndarray], np.ndarray], chart: Chart, x: np.ndarray,
             h: float, order: int = 4) -> np.ndarray:
    """Coordinate partial derivatives of a vectorised function at points ``x``.

    Returns shape x.shape[:-1] + (n,) + value shape.  Central differences in
    the interior; one-sided second-order stencils where a central stencil
    would leave a non-periodic axis.  ``order=4`` applies one Richardson step.
    """
    x = np.asarray(x, dtype=float)
    n = chart.dim

    def deriv(step: float) -> np.ndarray:
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            if chart.periodic[i]:
                fwd = np.ones(x.shape[:-1], dtype=bool)
                bwd = fwd
            else:
                fwd = x[..., i] + 2 * step <= chart.hi[i] + 1e-12
                bwd = x[..., i] - 2 * step >= chart.lo[i] - 1e-12
            central = (f(x + e) - f(x - e)) / (2 * step)
            if np.all(fwd & bwd):
                cols.append(central)
                continue
            f0 = f(x)
            one_fwd = (-3 * f0 + 4 * f(x + e) - f(x + 2 * e)) / (2 * step)
            one_bwd = (3 * f0 - 4 * f(x - e) + f(x - 2 * e)) / (2 * step)
            expand = (Ellipsis,) + (None,) * (central.ndim - fwd.ndim)
            out = np.where((fwd & bwd)[expand], central,
                           np.where(fwd[expand], one_fwd, one_bwd))
            cols.append(out)
        return np.stack(cols, axis=x.ndim - 1)

    if order == 2:
        return deriv(h)
    return (4.0 * deriv(h / 2) - deriv(h)) / 3.0


def _check_step(chart: Chart, h: float) -> None:
    if h > 0.25 * float(np.min(chart.extent)):
        raise ValueError(f"fd_step {h} exceeds 1/4 of the smallest chart extent")


def exterior_derivative(f: FormField) -> FormField:
    """Finite-difference exterior derivative of a form field."""
    n, k = f.n, f.degree
    if k >= n:
        raise ValueError(f"cannot differentiate a {k}-form on an {n}-chart")
    _check_step(f.chart, f.fd_step)
    W = _wedge_tensor(n, 1, k)
    def func(x):
        D = partials(f, f.chart, x, f.fd_step, f.fd_order)  # (..., n, C(n,k))
        return np.einsum("...iI,iIJ->...J", D, W)

    return f.replace(degree=k + 1, func=func)


d = exterior_derivative


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """Smooth map between charts; ``jacobian`` is optional (central FD otherwise)."""

    source: Chart
    target: Chart
    func: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-5

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)))

    def jac(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x))
        return self.fd_jac(x)

    def fd_jac(self, x, h: float | None = None) -> np.ndarray:
        h = self.fd_step if h is None else h
        x = np.asarray(x, dtype=float)
        cols = []
        for i in range(self.source.dim):
            e = np.zeros(self.source.dim)
            e[i] = h
            cols.append((self.func(x + e) - self.func(x - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def then(self, other: "SmoothMap") -> "SmoothMap":
        """Composition ``other o self``."""
        f, g = self, other

        def jac(x):
            return np.einsum("...ij,...jk->...ik", g.jac(f(x)), f.jac(x))

        return SmoothMap(f.source, g.target, lambda x: g(f(x)), jac, self.fd_step)


def linear_map(source: Chart, target: Chart, A: np.ndarray, b=None) -> SmoothMap:
    A = np.asarray(A, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    return SmoothMap(source, target,
                     lambda x: np.einsum("ij,...j->...i", A, x) + b,
                     lambda x: np.broadcast_to(A, np.shape(x)[:-1] + A.shape))


def pullback(f: FormField, m: SmoothMap, check_domain: bool = True) -> FormField:
    """Pull a form field back along a smooth map; result lives on ``m.source``."""
    if m.target.dim != f.n:
        raise ValueError(f"map target has dim {m.target.dim}, field lives on {f.n}")
    k = f.degree

    def func(x):
        y = m(x)
        if check_domain:
            inside = f.chart.contains(y)
            if not np.all(inside):
                bad = np.asarray(y)[~inside][0]
                raise ValueError(f"image point {bad.tolist()} outside the field's chart")
        return pullback_coeffs(f(y), m.jac(x), k)

    return FormField(m.source, k, func, f.fd_step, f.fd_order)


def integrate(f: FormField) -> float:
    """Integral of a top-degree field over its chart (tensor trapezoid rule)."""
    if f.degree != f.n:
        raise ValueError(f"need a top form, got degree {f.degree} on {f.n}-chart")
    vals = f.on_grid()[..., 0].reshape(f.chart.grid)
    for w in reversed(f.chart.weights()):
        vals = vals @ w
    return float(f.chart.orientation * vals)


def chain_integral(f: FormField, cube: SmoothMap) -> float:
    """Integral of a 3-form field over a parametrised 3-cube."""
    if f.degree != 3:
        raise ValueError("chain_integral expects a 3-form field")
    if cube.source.dim != 3:
        raise ValueError("cube must be parametrised by a 3-dimensional box")
    return integrate(pullback(f, cube))
