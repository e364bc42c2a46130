import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from g2forms.exterior import (
    Chart,
    FormField,
    KForm,
    basis,
    constant_field,
    contract,
    exterior_derivative,
    hodge_star,
    integrate,
    linear_map,
    perm_sign,
    pullback,
    romberg_weights,
    wedge,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def form(n, k):
    return arrays(float, math.comb(n, k), elements=finite).map(lambda c: KForm(n, k, c))


def test_basis_is_lexicographic():
    assert basis(3, 2) == ((0, 1), (0, 2), (1, 2))
    assert len(basis(7, 3)) == 35


def test_perm_sign():
    assert perm_sign((0, 1, 2)) == 1
    assert perm_sign((1, 0, 2)) == -1
    assert perm_sign((2, 0, 1)) == 1
    assert perm_sign((0, 0, 1)) == 0


def test_wedge_of_coordinate_one_forms():
    assert wedge(KForm.dx(3, 0), KForm.dx(3, 1))[(0, 1)] == 1.0
    assert wedge(KForm.dx(3, 1), KForm.dx(3, 0))[(0, 1)] == -1.0
    assert wedge(KForm.dx(3, 0), KForm.dx(3, 0)).norm() == 0.0


def test_kform_validation():
    with pytest.raises(ValueError):
        KForm(3, 2, np.zeros(4))
    with pytest.raises(ValueError):
        KForm(3, 4, np.zeros(1))
    with pytest.raises(ValueError):
        wedge(KForm.dx(3, 0, 1), KForm.dx(3, 1, 2))


def test_contract_dx12():
    a = KForm.dx(3, 0, 1)
    assert contract([1.0, 0, 0], a).allclose(KForm.dx(3, 1))
    assert contract([0, 1.0, 0], a).allclose(-KForm.dx(3, 0))


def test_hodge_star_euclidean_r3():
    assert hodge_star(KForm.dx(3, 0)).allclose(KForm.dx(3, 1, 2))
    assert hodge_star(KForm.dx(3, 1)).allclose(-KForm.dx(3, 0, 2))


@given(form(5, 2), form(5, 1), form(5, 2))
def test_wedge_graded_commutative_and_associative(a, b, c):
    assert wedge(a, b).allclose(wedge(b, a), atol=1e-9)          # (-1)^{2*1} = 1
    ab_c = wedge(wedge(a, b), c) if a.k + b.k + c.k <= 5 else None
    if ab_c is not None:
        assert ab_c.allclose(wedge(a, wedge(b, c)), atol=1e-8)


@given(form(5, 1), form(5, 1))
def test_one_forms_anticommute(a, b):
    assert wedge(a, b).allclose(-wedge(b, a), atol=1e-9)


@given(form(5, 2), form(5, 1), arrays(float, 5, elements=finite))
def test_contraction_is_a_graded_derivation(a, b, v):
    lhs = contract(v, wedge(a, b))
    rhs = wedge(contract(v, a), b) + wedge(a, contract(v, b))   # deg a = 2
    assert lhs.allclose(rhs, atol=1e-8)


@given(form(4, 2), arrays(float, (4, 4), elements=finite), arrays(float, (4, 4), elements=finite))
def test_pullback_functorial(a, A, B):
    assert a.pullback(A).pullback(B).allclose(a.pullback(A @ B), atol=1e-6 * (1 + a.norm())
                                              * (1 + np.abs(A).max()) ** 2
                                              * (1 + np.abs(B).max()) ** 2)


@given(form(4, 1), form(4, 2), arrays(float, (4, 4), elements=finite))
def test_pullback_commutes_with_wedge(a, b, A):
    scale = (1 + a.norm()) * (1 + b.norm()) * (1 + np.abs(A).max()) ** 3
    assert wedge(a, b).pullback(A).allclose(wedge(a.pullback(A), b.pullback(A)),
                                            atol=1e-9 * scale)


@given(st.integers(0, 6).flatmap(lambda k: form(6, k)))
def test_star_squared_in_even_dimension(a):
    # on R^6, ** = (-1)^{k(6-k)}
    k = a.k
    assert hodge_star(hodge_star(a)).allclose((-1) ** (k * (6 - k)) * a, atol=1e-9)


@given(st.integers(0, 7).flatmap(lambda k: form(7, k)))
def test_star_squared_is_identity_in_odd_dimension(a):
    assert hodge_star(hodge_star(a)).allclose(a, atol=1e-9)


def _poly_field(chart):
    # x1^2 x2 dx3 - x2^2 x1 dx1
    def f(x):
        out = np.zeros(x.shape[:-1] + (3,))
        out[..., 2] = x[..., 0] ** 2 * x[..., 1]
        out[..., 0] = -x[..., 1] ** 2 * x[..., 0]
        return out
    return FormField(chart, 1, f)


def test_d_of_x2_dx1():
    ch = Chart.box(2, -1.0, 1.0, 5)
    f = FormField(ch, 1, lambda x: np.stack([x[..., 1], 0 * x[..., 0]], -1))
    df = exterior_derivative(f)
    assert np.allclose(df(ch.grid_points()), -1.0, atol=1e-10)


def test_d_of_polynomial_one_form():
    ch = Chart.box(3, -1.0, 1.0, 5)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 3))
    dA = exterior_derivative(_poly_field(ch))(x)
    # d(x1^2 x2 dx3) = 2 x1 x2 dx13 + x1^2 dx23 ; d(-x2^2 x1 dx1) = 2 x1 x2 dx12
    a, b = x[:, 0], x[:, 1]
    exact = np.stack([2 * a * b, 2 * a * b, a ** 2], -1)
    assert np.max(np.abs(dA - exact)) < 1e-8


def test_d_squared_vanishes():
    ch = Chart.box(4, 0.0, 1.0, 5)

    def f(x):
        return np.stack([np.sin(x[..., 0] * x[..., 1]), np.exp(x[..., 2]) * x[..., 3],
                         x[..., 0] ** 3, np.cos(x[..., 1] + x[..., 3])], -1)

    dd = exterior_derivative(exterior_derivative(FormField(ch, 1, f)))
    x = np.random.default_rng(1).uniform(0.3, 0.7, (10, 4))
    assert np.max(np.abs(dd(x))) < 1e-6


def test_leibniz_rule_for_fields():
    ch = Chart.box(3, 0.0, 1.0, 5)
    a = FormField(ch, 1, lambda x: np.stack([x[..., 1] ** 2, x[..., 0] * x[..., 2],
                                             np.sin(x[..., 0])], -1))
    b = FormField(ch, 1, lambda x: np.stack([x[..., 2], np.cos(x[..., 1]), x[..., 0] ** 2], -1))
    x = np.random.default_rng(2).uniform(0.3, 0.7, (10, 3))
    lhs = exterior_derivative(a ^ b)(x)
    rhs = (exterior_derivative(a) ^ b)(x) - (a ^ exterior_derivative(b))(x)
    assert np.max(np.abs(lhs - rhs)) < 1e-7


def test_d_commutes_with_pullback():
    src = Chart.box(3, -0.5, 0.5, 5)
    tgt = Chart.box(3, -2.0, 2.0, 5)
    A = np.array([[1.0, 0.5, 0.0], [0.2, 1.0, 0.3], [0.0, -0.4, 1.2]])
    m = linear_map(src, tgt, A)
    f = _poly_field(tgt)
    x = np.random.default_rng(3).uniform(-0.3, 0.3, (10, 3))
    lhs = exterior_derivative(pullback(f, m))(x)
    rhs = pullback(exterior_derivative(f), m)(x)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_integrate_volume_of_box_and_sphere_polynomial():
    ch = Chart.box(3, 0.0, 2.0, 9)
    vol = constant_field(ch, KForm.dx(3, 0, 1, 2))
    assert integrate(vol) == pytest.approx(8.0)
    f = FormField(ch, 3, lambda x: (x[..., 0] ** 2)[..., None])
    assert integrate(f) == pytest.approx(8 / 3 * 4, rel=2e-2)


def test_romberg_weights_integrate_quartics_exactly():
    w = romberg_weights(9)
    x = np.linspace(0, 1, 9)
    assert w.sum() == pytest.approx(1.0)
    assert w @ x ** 4 == pytest.approx(0.2, abs=1e-14)


def test_chart_validation_and_periodic_wrap():
    with pytest.raises(ValueError):
        Chart((0.0,), (0.0,), (3,))
    ch = Chart((0.0, 0.0), (1.0, 1.0), (4, 4), periodic=(True, False))
    assert np.allclose(ch.wrap(np.array([1.25, 0.5])), [0.25, 0.5])
    assert ch.axes()[0].tolist() == [0.0, 0.25, 0.5, 0.75]


def test_fd_step_too_large_is_rejected():
    ch = Chart.box(2, 0.0, 1.0, 3)
    with pytest.raises(ValueError):
        exterior_derivative(FormField(ch, 0, lambda x: x[..., :1], fd_step=0.5))
