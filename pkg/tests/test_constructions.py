import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2forms import constructions as C
from g2forms.errors import NotClosed, OmegaNotTaming, PositivityLost
from g2forms.exterior import Chart, FormField, exterior_derivative, wedge_coeffs
from g2forms.sl3c import omega_model, rho_model, rho_tilde_field

R0, W0 = rho_model().coeffs, omega_model().coeffs


def collar_points(eps, n=40, seed=0, near=True):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 6))
    if near:
        t = rng.uniform(-2 * eps, 2 * eps, n)
    else:
        t = rng.choice([-1, 1], n) * rng.uniform(2 * eps, 0.9, n)
    return np.concatenate([x, t[:, None]], 1)


def test_cutoff_and_bump():
    r = np.linspace(0, 3, 301)
    c = C.cutoff(r, 1.0, 2.0)
    assert np.all(c[r <= 1] == 1) and np.all(c[r >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    h = 1e-6
    fd = (C.cutoff(r + h, 1.0, 2.0) - C.cutoff(r - h, 1.0, 2.0)) / (2 * h)
    assert np.max(np.abs(fd - C.cutoff_deriv(r, 1.0, 2.0))) < 1e-6
    s = np.linspace(-0.1, 0.1, 20001)
    assert np.trapezoid(C.bump(s, 0.1), s) == pytest.approx(1.0, abs=1e-8)


def test_scale_jump_is_smoothed():
    eps = 0.05
    f = C.jump_example("scale")
    m = C.mollify_closed(f, eps)
    near = collar_points(eps)
    assert m.closedness_residual(near) < 1e-8
    assert m.collar_residual(near) < 1e-8
    assert np.min(m.margin(near)) > 0
    far = collar_points(eps, near=False)
    assert np.max(np.abs(m.phi(far) - f.phi(far))) < 1e-12


def test_wave_jump_is_smoothed():
    eps = 0.05
    m = C.mollify_closed(C.jump_example("wave"), eps)
    near = collar_points(eps, 20, seed=1)
    assert m.closedness_residual(near) < 1e-8
    assert np.min(m.margin(near)) > 0


def test_zero_jump_changes_nothing():
    f = C.CollarField(C.torus6(), (-1.0, 1.0),
                      lambda x, t: np.broadcast_to(R0, np.shape(t) + (20,)),
                      lambda x, t: np.broadcast_to(W0, np.shape(t) + (15,)), jump=0.0)
    m = C.mollify_closed(f, 0.1)
    X = collar_points(0.1, 60)
    assert np.max(np.abs(m.phi(X) - f.phi(X))) < 1e-10


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05, 0.01])
def test_leaving_the_cone_is_detected(eps):
    with pytest.raises(PositivityLost) as info:
        C.mollify_closed(C.jump_example("nontaming"), eps)
    assert info.value.margin <= 0


def test_mollify_preconditions():
    f = C.jump_example("scale")
    with pytest.raises(ValueError):
        C.mollify_closed(f, 0.5)
    with pytest.raises(ValueError):
        C.mollify_closed(C.model_path()[0], 0.1)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.02, 0.3), st.integers(0, 1000))
def test_mollification_only_changes_the_collar(eps, seed):
    f = C.jump_example("wave")
    m = C.mollify_closed(f, eps)
    far = collar_points(eps, 10, seed, near=False)
    far[:, 6] = np.clip(far[:, 6], -1.0, 1.0)
    assert np.max(np.abs(m.phi(far) - f.phi(far))) < 1e-12


# -- degenerate family ------------------------------------------------------

def test_radial_primitive_has_derivative_omega0():
    ch = Chart.box(6, -1.0, 1.0, 3)
    eta = FormField(ch, 1, C.radial_primitive)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (5, 6))
    assert np.allclose(exterior_derivative(eta)(x), W0, atol=1e-10)


def test_phi_degenerates_only_on_the_axis():
    r = C.phi_eps_family(1.0, 0.0)
    assert abs(r.margin_at_origin) < 1e-10
    away = np.linalg.norm(r.points[:, :6], axis=1) > 0
    assert np.min(r.margins[away]) > 0
    assert r.boundary_mismatch == 0.0


def test_admissible_parameters_and_large_eps():
    kappa, eps, margin = C.admissible_parameters()
    assert margin > 0
    r = C.phi_eps_family(kappa, eps)
    assert r.min_margin > 0 and r.boundary_mismatch == 0.0
    assert r.closedness < 1e-6
    assert C.phi_eps_family(kappa, 1e3 * eps).min_margin < 0


def test_positive_lambda_removes_the_degeneration():
    r = C.phi_eps_family(1.0, 0.0, lam=0.5)
    assert r.margin_at_origin > 0 and r.min_margin > 0


def test_phi_eps_rejects_bad_parameters():
    with pytest.raises(ValueError):
        C.phi_eps_family(0.0, 0.1)


# -- taming thresholds and cobordisms ---------------------------------------

X40 = np.random.default_rng(0).uniform(0, 1, (40, 7))


def test_model_threshold_is_one():
    path, Om = C.model_path()
    th = C.taming_threshold(path, Om, X40)
    assert th.A_star == pytest.approx(1.0, abs=1e-6)
    assert th.passes_above and th.fails_below


def test_already_tamed_path_needs_nothing():
    path, Om = C.model_path()
    tamed = C.cobordism(path, Om, 2.0)          # omega~ = +omega_0
    assert C.taming_threshold(tamed, Om, X40).A_star == 0.0


def test_non_taming_omega_is_rejected():
    path, Om = C.model_path()
    with pytest.raises(OmegaNotTaming):
        C.taming_threshold(path, lambda x: -Om(x), X40)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 39), st.integers(0, 1000))
def test_threshold_is_monotone_in_the_sample_set(k, seed):
    path, Om = C.torus_path()
    X = np.random.default_rng(seed).uniform(0, 1, (40, 7))
    assert C.taming_threshold(path, Om, X[:k]).A_star <= C.taming_threshold(path, Om, X).A_star


def test_torus_cobordism():
    path, Om = C.torus_path()
    th = C.taming_threshold(path, Om, X40)
    assert 0 < th.A_star < np.inf and th.passes_above and th.fails_below
    cob = C.cobordism(path, Om, 2 * th.A_star)
    assert cob.collar_residual(X40[:10]) < 1e-5
    assert np.min(cob.margin(X40)) > 0


# -- taming obstruction -----------------------------------------------------

@pytest.fixture(scope="module")
def torus_rho():
    path, _ = C.torus_path()
    ch = Chart((0.0,) * 6, (1.0,) * 6, (6, 6, 6, 2, 2, 2), periodic=(True,) * 6)
    return FormField(ch, 3, lambda x: path.rho(x, np.ones(x.shape[:-1])), 1e-3, 4)


def _coupling():
    dy, dth = np.eye(6)[:3], np.eye(6)[3:]
    return sum(wedge_coeffs(dy[i], dth[j], 6, 1, 1) for i in range(3) for j in range(3))


def test_obstruction_vanishes_for_closed_pairs(torus_rho):
    Oc = _coupling()
    Om = FormField(torus_rho.chart, 2, lambda x: np.broadcast_to(Oc, x.shape[:-1] + (15,)))
    r = C.taming_obstruction(torus_rho, Om)
    assert abs(r.integral) < 1e-6
    assert r.integrand_max > 1e-3          # the integrand itself is not trivial


def test_obstruction_of_constant_rho_is_zero():
    ch = Chart((0.0,) * 6, (1.0,) * 6, (3,) * 6, periodic=(True,) * 6)
    rho = FormField(ch, 3, lambda x: np.broadcast_to(R0, x.shape[:-1] + (20,)))
    Om = FormField(ch, 2, lambda x: np.broadcast_to(W0, x.shape[:-1] + (15,)))
    assert C.taming_obstruction(rho, Om).integral == 0.0


def test_manufactured_non_closed_omega_is_caught(torus_rho):
    torus_rho = torus_rho.replace(chart=torus_rho.chart.with_grid((4, 4, 4, 2, 2, 2)))
    Oc = _coupling()
    sig = exterior_derivative(rho_tilde_field(torus_rho))

    def h(x):
        return wedge_coeffs(sig(x), Oc, 6, 4, 2)[..., 0]

    s = 0.5
    bad = FormField(torus_rho.chart, 2, lambda x: (1 + s * h(x))[..., None] * Oc, 1e-3, 4)
    with pytest.raises(NotClosed):
        C.taming_obstruction(torus_rho, bad)
    r = C.taming_obstruction(torus_rho, bad, require_closed=False)
    expected = s * np.mean(h(torus_rho.chart.grid_points()) ** 2)
    assert r.integral == pytest.approx(expected, rel=1e-9)
    assert r.integral > 0


def test_obstruction_needs_a_closed_manifold():
    ch = Chart.box(6, 0.0, 1.0, 3)
    rho = FormField(ch, 3, lambda x: np.broadcast_to(R0, x.shape[:-1] + (20,)))
    Om = FormField(ch, 2, lambda x: np.broadcast_to(W0, x.shape[:-1] + (15,)))
    with pytest.raises(ValueError):
        C.taming_obstruction(rho, Om)
