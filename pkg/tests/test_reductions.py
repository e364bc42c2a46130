import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from g2forms import g2, sl3c
from g2forms.errors import DependentSigmas, NonSymmetricS, NotClosed, NotSpacelike
from g2forms.exterior import Chart, FormField, exterior_derivative
from g2forms.reductions import (
    SpacelikeImmersion,
    baraglia_phi,
    baraglia_rho,
    eps_from_sigmas,
    lemma2_check,
    sigmas_from_eps,
    torus_reduction,
)
from g2forms.scenarios import _hyperboloid, _sphere2, _tilted_plane, _torus_sigmas

SQUARE = Chart((-0.5, -0.5), (0.5, 0.5), (5, 5))
SPHERE_PTS = np.random.default_rng(1).uniform((0.5, 0.5), (2.6, 5.5), (6, 2))


def paraboloid(space, time):
    """Graph (s, space |s|^2, time |s|^2, 0, 0) with mean curvature along (0, 0, space, time)."""
    def f(s):
        r2 = s[..., 0] ** 2 + s[..., 1] ** 2
        z = np.zeros_like(r2)
        return np.stack([s[..., 0], s[..., 1], space * r2, time * r2, z, z], -1)
    return SpacelikeImmersion(SQUARE, f)


def test_affine_plane_gives_constant_integrable_form():
    A = np.array([[1, 0], [0, 1], [0.2, 0.1], [0.3, 0], [0, 0.1], [0.1, 0.2]])
    rho = baraglia_rho(SpacelikeImmersion(SQUARE, lambda s: s @ A.T))
    x = np.random.default_rng(0).uniform(0, 0.4, (5, 6))
    c = rho(x)
    assert np.ptp(c, axis=0).max() < 1e-10
    assert sl3c.quartic_invariant(c[0]) < 0
    drt = exterior_derivative(sl3c.rho_tilde_field(rho))(x)
    assert np.abs(drt).max() < 1e-7


def test_baraglia_rho_is_closed():
    rho = baraglia_rho(_sphere2())
    x = np.concatenate([SPHERE_PTS, np.zeros((6, 4))], -1)
    assert np.abs(exterior_derivative(rho)(x)).max() < 1e-6      # finite-difference floor


def test_timelike_surface_is_rejected():
    bad = SpacelikeImmersion(SQUARE, lambda s: np.stack(
        [s[..., 0], 0 * s[..., 0], 0 * s[..., 0], s[..., 1], 0 * s[..., 0], 0 * s[..., 0]], -1))
    with pytest.raises(NotSpacelike):
        baraglia_rho(bad)


def test_unit_sphere_in_r33():
    r = lemma2_check(_sphere2(), SPHERE_PTS, orientation=-1)
    assert r.residual < 1e-3
    assert np.max(np.abs(r.det22)) < 1e-8
    # mu = 2 x outward radial unit vector
    assert np.allclose(r.mu, 2 * _sphere2()(SPHERE_PTS), atol=1e-6)
    assert set(r.classes) == {"semipositive"}
    assert r.outward.all() and r.spacelike.all() and r.criterion_agrees


def test_sphere_with_reversed_orientation_is_not_mean_convex():
    r = lemma2_check(_sphere2(), SPHERE_PTS, orientation=1)
    assert set(r.classes) == {"seminegative"} and r.criterion_agrees


def test_flat_plane_both_sides_vanish():
    r = lemma2_check(paraboloid(0.0, 0.0), np.zeros((1, 2)) + 0.1)
    assert r.residual < 1e-6
    assert r.classes == ["zero"]


def test_timelike_mean_curvature_is_not_mean_convex():
    r = lemma2_check(paraboloid(0.1, 0.5), np.random.default_rng(2).uniform(-0.3, 0.3, (4, 2)))
    assert not r.spacelike.any()
    assert "semipositive" not in r.classes and "positive" not in r.classes
    assert r.criterion_agrees
    h = lemma2_check(_hyperboloid(), np.random.default_rng(3).uniform(-0.4, 0.4, (4, 2)))
    assert h.criterion_agrees and "semipositive" not in h.classes


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.integers(0, 2 ** 16))
def test_mean_convexity_class_matches_geometric_criterion(space, time, seed):
    assume(abs(abs(space) - abs(time)) > 0.05)      # null mu is the undecidable boundary case
    s = np.random.default_rng(seed).uniform(-0.3, 0.3, (2, 2))
    r = lemma2_check(paraboloid(space, time), s)
    assert r.residual < 1e-3
    assert np.max(np.abs(r.det22)) < 1e-8
    assert r.criterion_agrees


def test_flat_three_plane_is_torsion_free():
    phi = baraglia_phi(_tilted_plane())
    x = np.concatenate([np.random.default_rng(0).uniform(-0.5, 0.5, (5, 3)),
                        np.random.default_rng(1).uniform(0, 1, (5, 4))], -1)
    r = g2.torsion_residual(phi, 1, x)
    assert r.d_phi < 1e-8 and r.d_star_phi < 1e-8


# -- torus reductions -------------------------------------------------------

def _fields(funcs, periodic=False):
    ch = Chart((0.0,) * 3, (1.0,) * 3, (4,) * 3, periodic=(periodic,) * 3)
    return [FormField(ch, 2, f) for f in funcs]


def _const(c):
    return lambda y: np.broadcast_to(np.asarray(c, float), np.shape(y)[:-1] + (3,))


# sigma_i = dy_j dy_k in the basis (dy12, dy13, dy23)
STANDARD = _fields([_const([0, 0, 1]), _const([0, -1, 0]), _const([1, 0, 0])])


def test_constant_sigmas_give_coordinate_coframe():
    td = torus_reduction(STANDARD)
    y = np.random.default_rng(0).uniform(0, 1, (4, 3))
    assert np.allclose(td.eps(y), np.eye(3))
    assert np.abs(td.S(y)).max() < 1e-12
    assert set(td.classify(y)) == {"zero"}


def test_conformal_coframe_round_trip():
    # eps_i = exp(y_i) dy_i, so sigma_i = exp(y_j + y_k) dy_j dy_k is closed
    def sig(i):
        def f(y):
            E = np.zeros(y.shape[:-1] + (3, 3))
            E[..., np.arange(3), np.arange(3)] = np.exp(y)
            return sigmas_from_eps(E)[..., i, :]
        return f
    td = torus_reduction(_fields([sig(i) for i in range(3)]))
    y = np.random.default_rng(1).uniform(0.1, 0.9, (6, 3))
    assert np.allclose(td.eps(y), np.exp(y)[..., None] * np.eye(3), atol=1e-12)
    S = td.S(y)
    assert np.abs(S - np.swapaxes(S, -1, -2)).max() < 1e-8


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_sigma_eps_round_trip(seed):
    rng = np.random.default_rng(seed)
    E = np.eye(3) + 0.3 * rng.standard_normal((5, 3, 3))
    E = E[np.linalg.det(E) > 0.05]
    S = sigmas_from_eps(E)
    assert np.allclose(eps_from_sigmas(S), E, atol=1e-10)
    assert np.abs(sigmas_from_eps(eps_from_sigmas(S)) - S).max() < 1e-12


def test_dependent_sigmas_are_rejected():
    with pytest.raises(DependentSigmas):
        torus_reduction(_fields([_const([0, 0, 1]), _const([0, 0, 2]), _const([1, 0, 0])]))


def test_non_closed_sigmas_are_rejected():
    def wavy(y):
        z = np.zeros(y.shape[:-1])
        return np.stack([np.sin(y[..., 2]), z, 1 + z], -1)    # d = cos(y3) dy123
    funcs = [wavy, _const([0, -1, 0]), _const([1, 0, 0])]
    with pytest.raises(NotClosed):
        torus_reduction(_fields(funcs))
    with pytest.raises(NonSymmetricS):
        torus_reduction(_fields(funcs), closed_tol=10.0)


@pytest.fixture(scope="module")
def wave_reduction():
    return torus_reduction(_torus_sigmas())


def test_formula_rho_tilde_matches_intrinsic(wave_reduction):
    x = np.random.default_rng(4).uniform(0, 1, (8, 6))
    assert np.abs(wave_reduction.rho_tilde_formula(x)
                  - wave_reduction.rho_tilde_intrinsic(x)).max() < 1e-8
    assert np.all(sl3c.quartic_invariant(wave_reduction.rho(x)) < 0)


def test_d_rho_tilde_matches_S_formula(wave_reduction):
    x = np.random.default_rng(5).uniform(0, 1, (6, 6))
    fd = exterior_derivative(sl3c.rho_tilde_field(wave_reduction.rho_field))(x)
    assert np.abs(fd - wave_reduction.d_rho_tilde_formula(x)).max() < 1e-6


def test_opposite_coframe_sign_gives_minus_rho_tilde(wave_reduction):
    # cof(-E) = cof(E): only det E > 0 reproduces the intrinsic rho tilde
    x = np.random.default_rng(6).uniform(0, 1, (4, 6))
    assert np.all(np.linalg.det(wave_reduction.eps(x[:, :3])) > 0)
    assert np.abs(wave_reduction.rho_tilde_formula(x)
                  + wave_reduction.rho_tilde_intrinsic(x)).max() > 0.5


def _baraglia_torsion(n):
    from g2forms.maximal import SpacelikeGraph, box_mesh, graph_immersion, solve_maximal
    from g2forms.scenarios import _boundary3
    mesh = box_mesh(3, n)
    g = solve_maximal(mesh, _boundary3, tol=1e-10)
    bump = np.prod(1 - mesh.nodes ** 2, axis=1)[:, None] * np.array([1.0, -1.0, 1.0])
    bent = SpacelikeGraph(mesh, g.u + 0.05 * bump)
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.uniform(-0.6, 0.6, (10, 3)), rng.uniform(0, 1, (10, 4))], -1)
    return [g2.torsion_residual(baraglia_phi(graph_immersion(h, (3, 3))), 1, x)
            for h in (g, bent)]


def test_maximal_graph_torsion_beats_perturbed_graph():
    solved, bent = _baraglia_torsion(9)
    assert solved.d_phi < 1e-8
    assert bent.d_star_phi > 10 * solved.d_star_phi


@pytest.mark.slow
def test_maximal_graph_torsion_on_fine_grid():
    # the residual is discretisation error of the graph, O(h^2)
    solved, bent = _baraglia_torsion(33)
    assert solved.d_star_phi < 1e-4
    assert bent.d_star_phi > 10 * solved.d_star_phi
