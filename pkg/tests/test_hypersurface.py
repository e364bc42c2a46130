import math

import numpy as np
import pytest

from g2forms import sl3c
from g2forms.exterior import Chart, SmoothMap, linear_map
from g2forms.hypersurface import (
    HypersurfaceData,
    NotStrictlyMeanConvex,
    ambient_volume,
    ball_map,
    beta11,
    bound_eq15,
    ellipsoid_cap,
    ellipsoid_samples,
    flat_phi_field,
    induce,
    induced_volume,
    inward_co_orientation,
    measure_defect,
    min_det_cuberoot,
    slice_points,
    sphere_angles_map,
    verify_eq9,
    verify_eq10,
    verify_prop1,
)

AMB = flat_phi_field()


def graph_map(f, grad, half=0.4):
    src = Chart.box(6, -half, half, 5)

    def func(z):
        return np.concatenate([z, f(z)[..., None]], -1)

    def jac(z):
        J = np.zeros(z.shape[:-1] + (7, 6))
        J[..., np.arange(6), np.arange(6)] = 1.0
        J[..., 6, :] = grad(z)
        return J

    return SmoothMap(src, AMB.chart, func, jac)


def random_graph(seed):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(6, 6))
    Q = (Q + Q.T) / 4
    c = 0.1 * rng.normal(size=(6, 6, 6))

    def f(z):
        return (0.5 * np.einsum("...i,ij,...j->...", z, Q, z)
                + np.einsum("...i,...j,...k,ijk->...", z, z, z, c))

    def grad(z):
        return (np.einsum("ij,...j->...i", Q, z)
                + np.einsum("...j,...k,ijk->...i", z, z, c)
                + np.einsum("...i,...k,ijk->...j", z, z, c)
                + np.einsum("...i,...j,ijk->...k", z, z, c))

    return graph_map(f, grad)


@pytest.fixture(scope="module")
def hyperplane():
    P = np.zeros((7, 6))
    P[:6, :6] = np.eye(6)
    return induce(AMB, linear_map(Chart.box(6, -0.5, 0.5, 5), AMB.chart, P), 1, flat=True)


@pytest.fixture(scope="module")
def cap():
    emb = ellipsoid_cap((1.0,) * 7, 6, 1, 0.5)
    return induce(AMB, emb, inward_co_orientation(AMB, emb), flat=True)


PTS = np.random.default_rng(0).uniform(-0.3, 0.3, (5, 6))


def test_hyperplane_is_totally_geodesic(hyperplane):
    assert np.all(hyperplane.second_fundamental(PTS) == 0)
    assert np.all(hyperplane.mean_curvature(PTS) == 0)
    assert np.allclose(hyperplane.rho(PTS), sl3c.rho_model().coeffs)
    assert np.allclose(hyperplane.omega(PTS), sl3c.omega_model().coeffs)
    assert verify_eq10(hyperplane, PTS).residual == 0.0


def test_hyperplane_is_not_strictly_mean_convex(hyperplane):
    with pytest.raises(NotStrictlyMeanConvex):
        verify_eq9(hyperplane, PTS[:2])


def test_unit_sphere_has_identity_second_fundamental_form(cap):
    x = slice_points(cap.chart, 3, (0, 1))
    B = cap.second_fundamental(x)
    assert np.max(np.abs(B - cap.induced_metric(x))) < 1e-6
    assert np.max(np.abs(cap.mean_curvature(x) - 6)) < 1e-4
    assert np.allclose(np.linalg.norm(cap.normal(x), axis=-1), 1.0, atol=1e-10)


def test_flipping_co_orientation_negates_mean_curvature(cap):
    x = slice_points(cap.chart, 3, (2, 3))
    flip = induce(AMB, cap.embedding, -cap.co_orientation, flat=True)
    assert np.allclose(flip.mean_curvature(x), -cap.mean_curvature(x), atol=1e-9)
    assert np.allclose(flip.second_fundamental(x), -cap.second_fundamental(x), atol=1e-9)


def test_ellipsoid_principal_curvatures_at_axis_point():
    axes = (1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.5)
    emb = ellipsoid_cap(axes, 6, 1, 0.3)
    h = induce(AMB, emb, inward_co_orientation(AMB, emb), flat=True)
    z = np.zeros((1, 6))
    k = np.linalg.eigvalsh(np.linalg.solve(h.induced_metric(z), h.second_fundamental(z)))[0]
    expected = sorted(1.5 / np.array([1.0, 2.0, 1.0, 1.0, 1.0, 1.0]) ** 2)
    assert np.max(np.abs(k - expected)) < 1e-3


def test_paraboloid_beta11_is_levi_form():
    # t = |z|^2: B = Hess f = 2 Id at 0 and beta11 = -i dbar d f = 2 omega_0
    h = induce(AMB, graph_map(lambda z: np.sum(z ** 2, -1), lambda z: 2 * z), 1, flat=True)
    z = np.zeros((1, 6))
    B = h.second_fundamental(z)
    assert np.allclose(B[0], 2 * np.eye(6), atol=1e-6)
    beta = beta11(B, h.complex_structure(z))[0]
    assert np.allclose(beta, 2 * sl3c.omega_model().coeffs, atol=1e-6)


def test_unit_sphere_satisfies_both_identities(cap):
    r = verify_prop1(cap, slice_points(cap.chart, 5, (0, 1)))
    assert r.id1_residual < 1e-3 and r.id2_residual < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_random_graphs_satisfy_both_identities(seed):
    h = induce(AMB, random_graph(seed), 1, flat=True)
    x = np.random.default_rng(seed + 10).uniform(-0.2, 0.2, (5, 6))
    r = verify_prop1(h, x)
    assert r.id1_residual < 1e-3 and r.id2_residual < 1e-3
    assert verify_eq10(h, x).residual < 1e-3
    assert measure_defect(h, x).max() < 1e-8


def test_identity_two_converges_quadratically():
    emb = ellipsoid_cap((1.0,) * 7, 3, -1, 0.5)
    co = inward_co_orientation(AMB, emb)
    x = slice_points(emb.source, 3, (0, 4))
    r = [verify_prop1(HypersurfaceData(AMB, emb, co, h, 2, flat=True), x).id2_residual
         for h in (2e-3, 1e-3)]
    assert 3.5 < r[0] / r[1] < 4.5


def test_closed_but_not_torsion_free_ambient():
    from g2forms.constructions import jump_example, mollify_closed
    amb = mollify_closed(jump_example("scale"), 0.05).phi_field
    emb = SmoothMap(Chart.box(6, 0.2, 0.8, 5), amb.chart, lambda z: np.concatenate(
        [z, (0.02 * np.sin(2 * np.pi * z[..., 0]))[..., None]], -1))
    h = induce(amb, emb, 1, fd_step=1e-3)
    r = verify_prop1(h, np.random.default_rng(0).uniform(0.3, 0.7, (4, 6)))
    assert r.id2_residual < 1e-3
    assert math.isfinite(r.id1_residual)


def test_round_sphere_equality_and_squashed_slack(cap):
    e = verify_eq9(cap, slice_points(cap.chart, 3, (4, 5)))
    assert np.max(np.abs(e.mu - 6)) < 1e-3
    assert np.max(np.abs(e.det22 - 64)) < 0.5
    assert abs(e.min_slack) < 1e-3
    sq = min(verify_eq9(c, x).min_slack
             for c, x in ellipsoid_samples((1.0, 1.0, 0.8, 0.8, 0.6, 0.6, 1.0), 40, 1))
    assert sq > 0


def test_d_omega_identity_on_round_sphere(cap):
    assert verify_eq10(cap, slice_points(cap.chart, 3, (0, 5))).residual < 1e-3


def test_unit_six_sphere_area():
    sph = sphere_angles_map()
    h = HypersurfaceData(AMB, sph, inward_co_orientation(AMB, sph, np.zeros(7)), 1e-3, 2,
                         flat=True)
    assert induced_volume(h) == pytest.approx(16 * math.pi ** 3 / 15, rel=1e-2)


@pytest.mark.slow
@pytest.mark.parametrize("radius", [1.0, 2.0])
def test_ball_equality_is_scale_invariant(radius):
    axes = (radius,) * 7
    sph = sphere_angles_map(axes)
    co = inward_co_orientation(AMB, sph, np.zeros(7))
    area = induced_volume(HypersurfaceData(AMB, sph, co, 1e-3, 2, flat=True))
    m = min_det_cuberoot(ellipsoid_samples(axes, 60, 0))
    b = bound_eq15(area, m, ambient_volume(AMB, ball_map(axes)))
    assert 0.99 < b.ratio < 1.01
