"""Maximal spacelike graphs in R^{p,q}.

A graph x -> (x, u(x)) over a domain D in R^p is spacelike when
g = I - Du^T Du is positive definite; its volume is the integral of
sqrt(det g).  We discretise u by continuous piecewise-linear functions on a
simplicial mesh (Kuhn triangulation of a grid, optionally mapped onto a
ball), so the discrete volume is an exact sum over simplices and its
gradient and Hessian are available in closed form.  Maximal graphs are
critical points; Newton's method with step halving finds them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import G2FormsError, MaxIters, NotSpacelike, SpacelikeLost
from .exterior import Chart
from .reductions import SpacelikeImmersion, indefinite_norm_sq

SPACELIKE_EPS = 1e-6


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh: nodes (N, p), simplices (M, p + 1), boundary mask (N,).

    ``shape`` is the logical grid shape and ``lo``/``hi`` the reference box
    it was built on; ``kind`` says whether nodes were mapped off the box.
    """

    nodes: np.ndarray
    simplices: np.ndarray
    boundary: np.ndarray
    shape: tuple[int, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    kind: str = "box"
    grads: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)
    lumped: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = self.nodes[self.simplices]                          # (M, p+1, p)
        D = X[:, 1:, :] - X[:, :1, :]                           # (M, p, p) rows: edges
        det = np.linalg.det(D)
        if np.any(np.abs(det) < 1e-14 * np.max(np.abs(D)) ** self.dim):
            raise ValueError("mesh has degenerate simplices")
        vol = np.abs(det) / math.factorial(self.dim)
        Dinv = np.linalg.inv(D)                                 # columns: grads of bary 1..p
        g = np.swapaxes(Dinv, -1, -2)                           # (M, p, p) rows
        grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
        lumped = np.bincount(self.simplices.ravel(),
                             weights=np.repeat(vol / (self.dim + 1), self.dim + 1),
                             minlength=len(self.nodes))
        object.__setattr__(self, "grads", grads)
        object.__setattr__(self, "volumes", vol)
        object.__setattr__(self, "lumped", lumped)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def free(self) -> np.ndarray:
        return ~self.boundary

    def volume(self) -> float:
        return float(np.sum(self.volumes))


def _kuhn(shape: tuple[int, ...]) -> np.ndarray:
    """Kuhn triangulation of a grid of the given node shape (C order indices)."""
    p = len(shape)
    cells = np.stack(np.meshgrid(*[np.arange(s - 1) for s in shape], indexing="ij"),
                     axis=-1).reshape(-1, p)
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(p)])
    out = []
    for perm in itertools.permutations(range(p)):
        verts = [cells]
        cur = cells.copy()
        for ax in perm:
            cur = cur.copy()
            cur[:, ax] += 1
            verts.append(cur)
        out.append(np.stack([v @ strides for v in verts], axis=1))
    return np.concatenate(out, axis=0)


def _grid_nodes(shape, lo, hi) -> np.ndarray:
    axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, shape)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))


def box_mesh(p: int, n: int | tuple[int, ...] = 17, lo=-1.0, hi=1.0) -> Mesh:
    shape = (n,) * p if isinstance(n, int) else tuple(n)
    lo = (float(lo),) * p if np.isscalar(lo) else tuple(map(float, lo))
    hi = (float(hi),) * p if np.isscalar(hi) else tuple(map(float, hi))
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"),
                   axis=-1).reshape(-1, p)
    boundary = np.any((idx == 0) | (idx == np.array(shape) - 1), axis=1)
    return Mesh(_grid_nodes(shape, lo, hi), _kuhn(shape), boundary, shape, lo, hi)


def cube_to_ball(xi: np.ndarray) -> np.ndarray:
    """Map [-1, 1]^p onto the unit ball, faces onto the sphere (p = 1, 2, 3).

    The classical 'elliptical' square-to-disc map and its cube analogue.
    """
    xi = np.asarray(xi, dtype=float)
    p = xi.shape[-1]
    if p == 1:
        return xi.copy()
    sq = xi ** 2
    if p == 2:
        return xi * np.sqrt(1.0 - sq[..., ::-1] / 2.0)
    if p == 3:
        out = np.empty_like(xi)
        for i in range(3):
            a, b = sq[..., (i + 1) % 3], sq[..., (i + 2) % 3]
            out[..., i] = xi[..., i] * np.sqrt(1.0 - a / 2 - b / 2 + a * b / 3)
        return out
    raise ValueError("ball meshes are available for p <= 3")


def ball_mesh(p: int, n: int = 17, radius: float = 1.0) -> Mesh:
    """Mapped grid on the ball of given radius (boundary nodes on the sphere)."""
    base = box_mesh(p, n)
    nodes = radius * cube_to_ball(base.nodes)
    return Mesh(nodes, base.simplices, base.boundary, base.shape, base.lo, base.hi, "ball")


def cylinder_mesh(section: Mesh, length: float, n: int) -> Mesh:
    """[0, length] x section, with the section's grid map applied slice-wise."""
    shape = (n,) + section.shape
    base = box_mesh(len(shape), shape, (0.0,) + section.lo, (length,) + section.hi)
    nodes = base.nodes.copy()
    if section.kind == "ball":
        radius = float(np.max(np.linalg.norm(section.nodes, axis=1)))
        nodes[:, 1:] = radius * cube_to_ball(nodes[:, 1:])
    return Mesh(nodes, base.simplices, base.boundary, shape, base.lo, base.hi,
                "cylinder-" + section.kind)


# ---------------------------------------------------------------------------
# the discrete volume functional
# ---------------------------------------------------------------------------

def local_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Du on each simplex, shape (M, q, p)."""
    return np.einsum("mvq,mvp->mqp", u[mesh.simplices], mesh.grads)


def _metric(A: np.ndarray) -> np.ndarray:
    p = A.shape[-1]
    return np.eye(p) - np.swapaxes(A, -1, -2) @ A


def density_derivatives(A: np.ndarray, order: int = 1):
    """E = sqrt det(I - A^T A) with dE/dA (and d2E/dA2 when order = 2)."""
    G = _metric(A)
    E = np.sqrt(np.linalg.det(G))
    Gi = np.linalg.inv(G)
    K = A @ Gi                                                   # (..., q, p)
    dE = -E[..., None, None] * K
    if order == 1:
        return E, dE
    q = A.shape[-2]
    KAt = K @ np.swapaxes(A, -1, -2)                             # (..., q, q)
    H = (np.einsum("...ai,...bj->...aibj", K, K)
         - np.einsum("...aj,...bi->...aibj", K, K)
         - np.einsum("ab,...ij->...aibj", np.eye(q), Gi)
         - np.einsum("...ab,...ij->...aibj", KAt, Gi))
    return E, dE, E[..., None, None, None, None] * H


def _check(mesh: Mesh, A: np.ndarray, eps: float = 0.0) -> None:
    lo = np.linalg.eigvalsh(_metric(A))[:, 0]
    if np.any(lo <= eps):
        m = int(np.argmin(lo))
        where = mesh.nodes[mesh.simplices[m]].mean(axis=0).tolist()
        raise NotSpacelike(where, float(lo[m]))


def min_spacelike_margin(mesh: Mesh, u: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(_metric(local_gradients(mesh, u)))[:, 0]))


def discrete_volume(mesh: Mesh, u: np.ndarray) -> float:
    A = local_gradients(mesh, u)
    _check(mesh, A)
    return float(np.sum(mesh.volumes * np.sqrt(np.linalg.det(_metric(A)))))


def volume_gradient(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """dV/du at every node, shape (N, q)."""
    A = local_gradients(mesh, u)
    _check(mesh, A)
    _, dE = density_derivatives(A)
    loc = np.einsum("m,mai,mvi->mva", mesh.volumes, dE, mesh.grads)
    q = u.shape[1]
    out = np.zeros((len(mesh.nodes), q))
    for a in range(q):
        out[:, a] = np.bincount(mesh.simplices.ravel(), weights=loc[:, :, a].ravel(),
                                minlength=len(mesh.nodes))
    return out


def _local_hessians(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Element Hessians (M, (p+1) q, (p+1) q) in node-major local order (v, a)."""
    A = local_gradients(mesh, u)
    _, _, H = density_derivatives(A, order=2)                  # (M, q, p, q, p)
    Hab = np.ascontiguousarray(np.transpose(H, (0, 1, 3, 2, 4)))  # (M, q, q, p, p)
    Gr = mesh.grads[:, None, None]                               # (M, 1, 1, P, p)
    loc = Gr @ Hab @ np.swapaxes(Gr, -1, -2)                     # (M, q, q, P, P)
    loc *= mesh.volumes[:, None, None, None, None]
    M, q, P = loc.shape[0], loc.shape[1], loc.shape[3]
    return np.transpose(loc, (0, 3, 1, 4, 2)).reshape(M, P * q, P * q)


class _Assembler:
    """Sparsity pattern of the Hessian restricted to a set of dofs, computed once."""

    def __init__(self, mesh: Mesh, q: int, keep: np.ndarray):
        P = mesh.dim + 1
        dof = (mesh.simplices[:, :, None] * q + np.arange(q)).reshape(-1, P * q)
        new = -np.ones(len(keep), dtype=np.int64)
        new[keep] = np.arange(int(keep.sum()))
        d = new[dof]
        rows = np.repeat(d, P * q, axis=1).ravel()
        cols = np.tile(d, (1, P * q)).ravel()
        self.mask = (rows >= 0) & (cols >= 0)
        n = int(keep.sum())
        key = rows[self.mask] * n + cols[self.mask]
        uniq, self.inverse = np.unique(key, return_inverse=True)
        r, c = np.divmod(uniq, n)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
        self.indices = c
        self.n = n

    def __call__(self, loc: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=loc.reshape(-1)[self.mask],
                           minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def volume_hessian(mesh: Mesh, u: np.ndarray, free_only: bool = False) -> sp.csr_matrix:
    """Sparse Hessian of the discrete volume in node-major dof order (v, a)."""
    q = u.shape[1]
    keep = np.repeat(mesh.free if free_only else np.ones(len(mesh.nodes), bool), q)
    return _Assembler(mesh, q, keep)(_local_hessians(mesh, u))


def stiffness(mesh: Mesh) -> sp.csr_matrix:
    P = mesh.dim + 1
    loc = np.einsum("m,mvi,mwi->mvw", mesh.volumes, mesh.grads, mesh.grads)
    rows = np.repeat(mesh.simplices, P, axis=1).ravel()
    cols = np.tile(mesh.simplices, (1, P)).ravel()
    n = len(mesh.nodes)
    return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpacelikeGraph:
    """Node values u (N, q) of a piecewise-linear graph over ``mesh``."""

    mesh: Mesh
    u: np.ndarray
    iterations: int = 0
    history: tuple[tuple[float, float], ...] = ()

    @property
    def p(self) -> int:
        return self.mesh.dim

    @property
    def q(self) -> int:
        return self.u.shape[1]

    def grid_values(self) -> np.ndarray:
        """u reshaped to the logical grid, (*shape, q)."""
        return self.u.reshape(self.mesh.shape + (self.q,))


def volume(g: SpacelikeGraph) -> float:
    """Discrete induced volume (exact for piecewise-linear graphs)."""
    return discrete_volume(g.mesh, g.u)


def el_residual(g: SpacelikeGraph, source: np.ndarray | None = None) -> float:
    """Max over interior nodes of the divergence-form Euler-Lagrange residual.

    The discrete gradient of the volume divided by the lumped nodal mass
    approximates div(sqrt(det g) Du g^{-1}) with a second-order stencil.
    """
    return float(np.max(np.abs(_residual_vector(g.mesh, g.u, source)), initial=0.0))


def _residual_vector(mesh: Mesh, u: np.ndarray, source) -> np.ndarray:
    grad = volume_gradient(mesh, u)
    if source is not None:
        grad = grad - mesh.lumped[:, None] * source
    return (grad / mesh.lumped[:, None])[mesh.free]


def _boundary_values(mesh: Mesh, boundary, q: int | None) -> np.ndarray:
    xb = mesh.nodes[mesh.boundary]
    vals = boundary(xb) if callable(boundary) else np.asarray(boundary, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if vals.shape[0] == len(mesh.nodes):
        vals = vals[mesh.boundary]
    if vals.ndim == 1:
        vals = vals[:, None]
    if q is not None and vals.shape[1] != q:
        raise ValueError(f"boundary data has {vals.shape[1]} components, expected {q}")
    return vals


def harmonic_extension(mesh: Mesh, boundary, q: int | None = None) -> SpacelikeGraph:
    """Componentwise discrete harmonic extension of boundary data."""
    vals = _boundary_values(mesh, boundary, q)
    K = stiffness(mesh)
    free, bnd = mesh.free, mesh.boundary
    Kff = K[free][:, free].tocsc()
    rhs = -K[free][:, bnd] @ vals
    u = np.zeros((len(mesh.nodes), vals.shape[1]))
    u[bnd] = vals
    if free.any():
        lu = spla.splu(Kff)
        u[free] = lu.solve(rhs)
    return SpacelikeGraph(mesh, u)


def solve_maximal(mesh: Mesh, boundary, init: SpacelikeGraph | np.ndarray | None = None,
                  tol: float = 1e-8, max_iters: int = 50,
                  source: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None,
                  q: int | None = None) -> SpacelikeGraph:
    """Damped Newton for a discrete maximal graph with Dirichlet data.

    ``source`` adds a prescribed right-hand side f (nodes -> R^q), solving
    div(sqrt(det g) Du g^{-1}) = f; used for manufactured solutions.  Steps
    are halved until the iterate stays spacelike (margin > 1e-6), the
    residual decreases and the volume does not drop.
    """
    vals = _boundary_values(mesh, boundary, q)
    q = vals.shape[1]
    if init is None:
        u = harmonic_extension(mesh, vals).u
    else:
        u = np.array(init.u if isinstance(init, SpacelikeGraph) else init, dtype=float)
        u[mesh.boundary] = vals
    if min_spacelike_margin(mesh, u) <= SPACELIKE_EPS:
        raise NotSpacelike("initial guess", min_spacelike_margin(mesh, u))
    f = None
    if source is not None:
        f = np.asarray(source(mesh.nodes) if callable(source) else source, dtype=float)
        f = f.reshape(len(mesh.nodes), q)
    free_dof = np.repeat(mesh.free, q)
    assemble = _Assembler(mesh, q, free_dof)
    solve_linear = _newton_solver(mesh, q)

    def objective(w):
        val = discrete_volume(mesh, w)
        if f is not None:
            val -= float(np.sum(mesh.lumped[:, None] * f * w))
        return val

    res = float(np.max(np.abs(_residual_vector(mesh, u, f)), initial=0.0))
    vol = objective(u)
    history = [(res, vol)]
    it = 0
    while res >= tol:
        if it >= max_iters:
            raise MaxIters(it, res)
        grad = volume_gradient(mesh, u)
        if f is not None:
            grad = grad - mesh.lumped[:, None] * f
        H = assemble(_local_hessians(mesh, u))
        step = np.zeros_like(u)
        step[mesh.free] = solve_linear(-H, grad.reshape(-1)[free_dof]).reshape(-1, q)
        t = 1.0
        while True:
            cand = u + t * step
            ok = min_spacelike_margin(mesh, cand) > SPACELIKE_EPS
            if ok:
                r = float(np.max(np.abs(_residual_vector(mesh, cand, f)), initial=0.0))
                v = objective(cand)
                if r < res and v >= vol - 1e-13 * max(1.0, abs(vol)):
                    break
            t *= 0.5
            if t < 1e-10:
                raise SpacelikeLost(f"no admissible step at iteration {it} (residual {res:.3g})")
        u, res, vol = cand, r, v
        history.append((res, vol))
        it += 1
    return SpacelikeGraph(mesh, u, it, tuple(history))


def _newton_solver(mesh: Mesh, q: int):
    """Linear solver for Newton steps.

    Small systems are solved directly.  Larger ones use conjugate gradients
    preconditioned by the factorised scalar stiffness matrix (applied to each
    component), which is the Hessian at u = 0 up to sign.
    """
    nfree = int(mesh.free.sum())
    if nfree * q <= 20_000:
        return lambda A, b: spla.spsolve(A.tocsc(), b)
    K = stiffness(mesh)[mesh.free][:, mesh.free].tocsc()
    lu = spla.splu(K)

    def precond(r):
        return lu.solve(r.reshape(nfree, q)).reshape(-1)

    M = spla.LinearOperator((nfree * q, nfree * q), matvec=precond)

    def solve(A, b):
        x, info = spla.cg(A.tocsr(), b, M=M, rtol=1e-12, atol=0.0, maxiter=500)
        if info != 0:
            x = spla.spsolve(A.tocsc(), b)
        return x

    return solve


def perturbation_test(g: SpacelikeGraph, n: int = 100, size: float = 1e-3,
                      seed: int = 0) -> np.ndarray:
    """Volume changes under random small interior perturbations (all < 0 at a maximum)."""
    rng = np.random.default_rng(seed)
    v0 = volume(g)
    out = np.empty(n)
    for k in range(n):
        du = np.zeros_like(g.u)
        du[g.mesh.free] = rng.uniform(-size, size, size=du[g.mesh.free].shape)
        out[k] = discrete_volume(g.mesh, g.u + du) - v0
    return out


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

def maximal_operator(grad_u: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                     h: float = 1e-3) -> np.ndarray:
    """div(sqrt(det g) Du g^{-1}) for an analytic gradient (points -> (q, p)).

    Fourth-order central differences of the flux; accurate to about 1e-11.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[-1]

    def flux(y):
        E, dE = density_derivatives(grad_u(y))
        return -dE                                           # sqrt(det g) A g^{-1}

    out = 0.0
    for i in range(p):
        e = np.zeros(p)
        e[i] = h
        d1 = (flux(x + e) - flux(x - e)) / (2 * h)
        d2 = (flux(x + 2 * e) - flux(x - 2 * e)) / (4 * h)
        out = out + ((4 * d1 - d2) / 3)[..., :, i]
    return out


@dataclass(frozen=True)
class ConvergenceStudy:
    sizes: tuple[int, ...]
    errors: tuple[float, ...]
    orders: tuple[float, ...]


def manufactured_convergence(u_exact: Callable, grad_exact: Callable, p: int = 2,
                             sizes=(9, 17, 33), tol: float = 1e-11) -> ConvergenceStudy:
    """Solve with the source of a known u* and measure max nodal error per grid."""
    errors = []
    for n in sizes:
        mesh = box_mesh(p, n)
        g = solve_maximal(mesh, u_exact, tol=tol,
                          source=lambda y: maximal_operator(grad_exact, y))
        errors.append(float(np.max(np.abs(g.u - u_exact(mesh.nodes)))))
    orders = tuple(math.log2(errors[i] / errors[i + 1]) * 1.0
                   / math.log2((sizes[i + 1] - 1) / (sizes[i] - 1))
                   for i in range(len(errors) - 1))
    return ConvergenceStudy(tuple(sizes), tuple(errors), orders)


# ---------------------------------------------------------------------------
# boundary geometry and the volume bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryCurvature:
    mu: np.ndarray
    norm_sq: np.ndarray
    kind: list[str]
    outward: np.ndarray

    @property
    def norm(self) -> np.ndarray:
        return np.sqrt(np.abs(self.norm_sq))


def boundary_mean_curvature(sigma: SpacelikeImmersion, points,
                            domain_normal: Callable[[np.ndarray], np.ndarray] | None = None,
                            atol: float = 1e-8) -> BoundaryCurvature:
    """Mean curvature vector of a (p-1)-fold in R^{p,q} and its classification.

    ``outward`` compares the projection of mu to R^p with the outward normal
    of the domain: both must lie on the same side of the projected tangent
    space.  Without ``domain_normal`` the radial direction is used.
    """
    s = np.asarray(points, dtype=float)
    mu = sigma.mean_curvature_vector(s)
    nsq = indefinite_norm_sq(mu, sigma.signature)
    scale = np.maximum(np.linalg.norm(mu, axis=-1), atol)
    kinds = []
    for m, v in zip(np.linalg.norm(mu, axis=-1).reshape(-1), (nsq / scale ** 2).reshape(-1)):
        if m <= atol:
            kinds.append("zero")
        elif v > 1e-9:
            kinds.append("spacelike")
        elif v < -1e-9:
            kinds.append("timelike")
        else:
            kinds.append("null")
    p = sigma.signature[0]
    y = sigma(s)
    J = sigma.jac(s)[..., :p, :]
    n = domain_normal(y[..., :p]) if domain_normal is not None else y[..., :p]
    side_mu = np.linalg.det(np.concatenate([mu[..., :p, None], J], axis=-1))
    side_n = np.linalg.det(np.concatenate([np.asarray(n)[..., :, None], J], axis=-1))
    outward = side_mu * side_n > 0
    return BoundaryCurvature(mu, nsq, kinds, outward)


def sphere_boundary(p: int, q: int, data: Callable[[np.ndarray], np.ndarray] | None = None,
                    radius: float = 1.0, grid: int = 17) -> SpacelikeImmersion:
    """The boundary sphere of the radius-r ball, lifted by boundary data u = data(x)."""
    if p == 2:
        chart = Chart((0.0,), (2 * math.pi,), (2 * (grid - 1),), periodic=(True,))

        def pos(t):
            return radius * np.stack([np.cos(t[..., 0]), np.sin(t[..., 0])], axis=-1)
    elif p == 3:
        chart = Chart((0.0, 0.0), (math.pi, 2 * math.pi), (grid, 2 * (grid - 1)),
                      periodic=(False, True), rules=("romberg", "trapezoid"))

        def pos(t):
            th, ph = t[..., 0], t[..., 1]
            return radius * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                                      np.cos(th)], axis=-1)
    else:
        raise ValueError("sphere boundaries are available for p = 2, 3")

    def func(t):
        x = pos(t)
        u = np.zeros(x.shape[:-1] + (q,)) if data is None else np.asarray(data(x))
        return np.concatenate([x, u.reshape(x.shape[:-1] + (q,))], axis=-1)

    return SpacelikeImmersion(chart, func, signature=(p, q), fd_step=1e-4)


def boundary_volume(sigma: SpacelikeImmersion) -> float:
    """Integral of the induced area density over the chart quadrature grid."""
    chart = sigma.source
    x = chart.grid_points()
    dens = np.sqrt(np.maximum(np.linalg.det(sigma.metric(x)), 0.0))
    w = chart.weights()
    W = w[0]
    for wi in w[1:]:
        W = np.multiply.outer(W, wi)
    return float(np.sum(dens.reshape(-1) * W.reshape(-1)))


@dataclass(frozen=True)
class MaximalVolumeBound:
    lhs: float
    rhs: float
    slack: float
    min_mu: float
    boundary_volume: float

    @property
    def ratio(self) -> float:
        return self.rhs / self.lhs


class BoundaryHypothesisFailed(G2FormsError):
    """The boundary mean curvature is not spacelike and outward everywhere."""


def check_eq16(g: SpacelikeGraph, sigma: SpacelikeImmersion, points=None) -> MaximalVolumeBound:
    """Vol(Xi) <= ((p-1)/p) Vol(Sigma) / min |mu_Sigma|."""
    x = sigma.source.grid_points() if points is None else np.asarray(points, dtype=float)
    x = x.reshape(-1, sigma.dim)
    dens = np.sqrt(np.maximum(np.linalg.det(sigma.metric(x)), 0.0))
    x = x[dens > 1e-6 * np.max(dens)]                  # skip coordinate singularities
    bc = boundary_mean_curvature(sigma, x)
    if any(k != "spacelike" for k in bc.kind) or not np.all(bc.outward):
        raise BoundaryHypothesisFailed("boundary mean curvature must be spacelike and outward")
    m = float(np.min(bc.norm))
    bv = boundary_volume(sigma)
    p = g.p
    lhs = volume(g)
    rhs = (p - 1) / p * bv / m
    return MaximalVolumeBound(lhs, rhs, rhs - lhs, m, bv)


# ---------------------------------------------------------------------------
# cylinders
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CylinderReport:
    ends_distance: float
    product_deviation: float
    converged: bool
    residual: float
    iterations: int
    message: str


def cylinder_experiment(xi0: SpacelikeGraph, xi1: SpacelikeGraph, length: float = 1.0,
                        n: int | None = None, tol: float = 1e-10,
                        max_iters: int = 50) -> CylinderReport:
    """Fill [0, L] x Xi_0 u {L} x Xi_1 u [0, L] x Sigma by a maximal graph in R^{p+1,q}."""
    if xi0.mesh.shape != xi1.mesh.shape or not np.allclose(xi0.mesh.nodes, xi1.mesh.nodes):
        raise ValueError("the two graphs must share a mesh")
    bnd = xi0.mesh.boundary
    if np.max(np.abs(xi0.u[bnd] - xi1.u[bnd]), initial=0.0) > 1e-12:
        raise ValueError("the two graphs must have the same boundary")
    n = n or xi0.mesh.shape[0]
    mesh = cylinder_mesh(xi0.mesh, length, n)
    N0 = len(xi0.mesh.nodes)
    layer = np.repeat(np.arange(n), N0)
    sect = np.tile(np.arange(N0), n)
    s = layer / (n - 1)
    vals = (1 - s)[:, None] * xi0.u[sect] + s[:, None] * xi1.u[sect]
    dist = float(np.max(np.abs(xi0.u - xi1.u)))
    init = harmonic_extension(mesh, vals[mesh.boundary])
    try:
        sol = solve_maximal(mesh, vals[mesh.boundary], init=init, tol=tol,
                            max_iters=max_iters)
    except (MaxIters, SpacelikeLost, NotSpacelike) as exc:
        return CylinderReport(dist, float("nan"), False,
                              getattr(exc, "residual", float("nan")), max_iters, str(exc))
    dev = float(np.max(np.abs(sol.u - xi0.u[sect])))
    return CylinderReport(dist, dev, True, el_residual(sol), sol.iterations, "converged")


# ---------------------------------------------------------------------------
# interpolation and intrinsic curvature
# ---------------------------------------------------------------------------

def graph_immersion(g: SpacelikeGraph, signature: tuple[int, int] | None = None,
                    degree: int = 5) -> SpacelikeImmersion:
    """Tensor-product spline interpolant x -> (x, u(x)) of a graph on a box mesh.

    The Jacobian comes from analytic spline derivatives; quintic splines keep
    the finite differences taken on top of it (curvatures, torsion) clean.
    """
    from scipy.interpolate import NdBSpline, make_interp_spline

    if g.mesh.kind != "box":
        raise ValueError("interpolation needs a box mesh")
    p, q = g.p, g.q
    axes = [np.linspace(a, b, n) for a, b, n in zip(g.mesh.lo, g.mesh.hi, g.mesh.shape)]
    c = g.grid_values()
    knots = []
    for ax, xs in enumerate(axes):
        spl = make_interp_spline(xs, c, k=degree, axis=ax)
        knots.append(spl.t)
        c = spl.c
    spline = NdBSpline(tuple(knots), c, degree)
    lo, hi = np.array(g.mesh.lo), np.array(g.mesh.hi)
    chart = Chart(g.mesh.lo, g.mesh.hi, g.mesh.shape)

    def func(x):
        x = np.asarray(x, dtype=float)
        u = spline(np.clip(x.reshape(-1, p), lo, hi)).reshape(x.shape[:-1] + (q,))
        return np.concatenate([x, u], axis=-1)

    def jac(x):
        x = np.asarray(x, dtype=float)
        flat = np.clip(x.reshape(-1, p), lo, hi)
        cols = [spline(flat, nu=tuple(int(i == j) for j in range(p))) for i in range(p)]
        Du = np.stack(cols, axis=-1).reshape(x.shape[:-1] + (q, p))
        top = np.broadcast_to(np.eye(p), x.shape[:-1] + (p, p))
        return np.concatenate([top, Du], axis=-2)

    return SpacelikeImmersion(chart, func, jac, signature or (p, q), fd_step=1e-4)


def induced_ricci_min(g: SpacelikeGraph) -> tuple[float, float]:
    """(min Ricci eigenvalue, curvature scale) of the induced metric at interior grid nodes.

    Finite differences on the box grid; report-only (fourth derivatives of u
    are involved, so the result is noisy on coarse grids).
    """
    if g.mesh.kind != "box":
        raise ValueError("needs a box mesh")
    p = g.p
    U = g.grid_values()
    hs = [(b - a) / (n - 1) for a, b, n in zip(g.mesh.lo, g.mesh.hi, g.mesh.shape)]
    Du = np.stack(np.gradient(U, *hs, axis=tuple(range(p))), axis=-1)   # (..., q, p)
    G = np.eye(p) - np.swapaxes(Du, -1, -2) @ Du
    dG = np.stack(np.gradient(G, *hs, axis=tuple(range(p))), axis=-1)   # [..., i, j, k]=d_k g_ij
    Gi = np.linalg.inv(G)
    # Gamma^l_ij = g^{lk} (d_i g_kj + d_j g_ki - d_k g_ij) / 2
    low = 0.5 * (np.einsum("...kji->...kij", dG) + dG - np.einsum("...ijk->...kij", dG))
    Gam = np.einsum("...lk,...kij->...lij", Gi, low)
    dGam = np.stack(np.gradient(Gam, *hs, axis=tuple(range(p))), axis=-1)  # [..., l, i, j, m]
    # R_ij = d_l Gam^l_ij - d_j Gam^l_il + Gam^l_lm Gam^m_ij - Gam^l_jm Gam^m_il
    Ric = (np.einsum("...lijl->...ij", dGam) - np.einsum("...lilj->...ij", dGam)
           + np.einsum("...llm,...mij->...ij", Gam, Gam)
           - np.einsum("...ljm,...mil->...ij", Gam, Gam))
    inner = tuple(slice(2, -2) for _ in range(p))
    Ric = 0.5 * (Ric + np.swapaxes(Ric, -1, -2))[inner]
    Gin = G[inner]
    L = np.linalg.cholesky(Gin)
    Li = np.linalg.inv(L)
    ev = np.linalg.eigvalsh(Li @ Ric @ np.swapaxes(Li, -1, -2))
    return float(np.min(ev)), float(np.max(np.abs(ev)))
