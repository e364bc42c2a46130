import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from g2forms.errors import DomainError, ParseError
from g2forms.expr import (
    BinOp, Call, Const, Neg, Num, Var, bind, compile_expr, evaluate, parse, to_text, variables,
)


def ev(text, **env):
    return float(evaluate(parse(text), env))


def test_basic_evaluation():
    assert ev("x1*x2 + sin(t)", x1=2.0, x2=3.0, t=0.0) == 6.0
    assert ev("2 + 3*4") == 14.0
    assert ev("(2 + 3)*4") == 20.0
    assert ev("10 - 4 - 3") == 3.0
    assert ev("12 / 3 / 2") == 2.0
    assert ev("2*pi") == pytest.approx(2 * math.pi)
    assert ev("log(e)") == pytest.approx(1.0)
    assert ev("1.5e2 + .5") == 150.5


def test_power_precedence():
    assert ev("2^3^2") == 512.0
    assert ev("-x1^2", x1=2.0) == -4.0
    assert ev("2^-1") == 0.5
    assert ev("2^-1^2") == 0.5
    assert ev("(-2)^2") == 4.0
    assert parse("2^3^2") == BinOp("^", Num(2.0), BinOp("^", Num(3.0), Num(2.0)))


@pytest.mark.parametrize("text", ["1/0", "log(0)", "sqrt(-1)", "log(x1 - 1)", "(-1)^0.5"])
def test_domain_errors_at_evaluation(text):
    e = parse(text)  # parsing succeeds
    with pytest.raises(DomainError):
        evaluate(e, {"x1": np.array([2.0, 1.0])})


def test_exp_overflow_is_domain_error():
    with pytest.raises(DomainError):
        ev("exp(1000)")


@pytest.mark.parametrize("text, offset", [
    ("x1 + foo", 5),
    ("  bar", 2),
    ("x1 + é", 5),
    ("x1 + ", 5),
    ("(x1", 3),
    ("x1 $ 2", 3),
    ("sin x1", 4),
])
def test_parse_error_byte_offsets(text, offset):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert info.value.offset == offset


def test_non_ascii_offset_counts_bytes():
    # a no-break space is two bytes in UTF-8, so "foo" starts at byte 2
    with pytest.raises(ParseError) as info:
        parse("\u00a0foo")
    assert info.value.offset == 2
    with pytest.raises(ParseError) as info:
        parse("x1\u00a0\u00a0+ λ")
    assert info.value.offset == 8


def test_polynomial_matches_hand_code_exactly():
    g = np.linspace(-2, 2, 9)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    f = compile_expr("x1^2*x2 - x2^2*x1", 2)
    x, y = pts[..., 0], pts[..., 1]
    np.testing.assert_array_equal(f(pts), x ** 2 * y - y ** 2 * x)


def test_compile_dimension_check_and_t():
    with pytest.raises(ParseError):
        compile_expr("x4", 3)
    f = compile_expr("t", 7)
    pts = np.arange(14.0).reshape(2, 7)
    np.testing.assert_array_equal(f(pts), [6.0, 13.0])
    # constants broadcast over the points
    assert compile_expr("3", 2)(np.zeros((4, 2))).shape == (4,)


def test_bind_and_variables():
    env = bind(np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(env["x2"], [1.0, 4.0])
    np.testing.assert_array_equal(env["t"], env["x3"])
    assert variables(parse("x1*sin(x3) + t - pi")) == {"x1", "x3", "t"}


def test_unbound_variable():
    with pytest.raises(DomainError):
        ev("x5")


leaves = st.one_of(
    st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num),
    st.sampled_from(["x1", "x2", "x3", "t"]).map(Var),
    st.sampled_from(["pi", "e"]).map(Const),
)
exprs = st.recursive(
    leaves,
    lambda sub: st.one_of(
        sub.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), sub, sub).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sqrt", "exp", "log", "sin", "cos"]), sub).map(
            lambda a: Call(*a)),
    ),
    max_leaves=12,
)


@given(exprs)
def test_round_trip(e):
    assert parse(to_text(e)) == e


@given(exprs)
def test_printing_is_stable(e):
    s = to_text(e)
    assert to_text(parse(s)) == s
