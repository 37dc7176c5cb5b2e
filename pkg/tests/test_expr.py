import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from projeq.expr import (
    BinOp,
    Call,
    DomainError,
    Dual,
    Neg,
    Num,
    ParseError,
    Pi,
    Pow,
    UnboundVariableError,
    Var,
    derivative,
    eval_dual,
    eval_value,
    parse,
    serialize,
    substitute,
    validate_profile,
)

F_DEFAULT = "2 + 0.5*cos(2*pi*x)"


def dual_at(expr, **values):
    names = sorted(values)
    binds = {n: Dual.variable(values[n], i, len(names)) for i, n in enumerate(names)}
    return eval_dual(expr, binds)


# --------------------------------------------------------------------------
# parsing


def test_parse_single_variable():
    assert parse("x") == Var("x")


def test_parse_profile_structure():
    e = parse(F_DEFAULT)
    expected = BinOp(
        "+",
        Num(2.0),
        BinOp("*", Num(0.5), Call("cos", BinOp("*", BinOp("*", Num(2.0), Pi()), Var("x")))),
    )
    assert e == expected


def test_parse_unbalanced_call_reports_end_offset():
    src = "2 + 0.5*cos(2*pi*"
    with pytest.raises(ParseError) as exc:
        parse(src)
    assert exc.value.offset == len(src)


def test_parse_empty_source():
    with pytest.raises(ParseError):
        parse("   ")


def test_parse_unknown_function():
    with pytest.raises(ParseError, match="unknown function"):
        parse("tan(x)")


def test_parse_unknown_identifier_with_allowlist():
    with pytest.raises(ParseError, match="unknown identifier"):
        parse("x + w", variables=("x", "y"))
    assert parse("x + y", variables=("x", "y")) == BinOp("+", Var("x"), Var("y"))


def test_parse_unexpected_character_offset():
    with pytest.raises(ParseError) as exc:
        parse("1 + $x")
    assert exc.value.offset == 4


def test_precedence_power_binds_tighter_than_unary_minus():
    # -x^2 is -(x^2)
    assert eval_value(parse("-x^2"), {"x": 3.0}) == -9.0


def test_precedence_left_associativity():
    assert eval_value(parse("2 - 3 - 4"), {}) == -5.0
    assert eval_value(parse("16 / 4 / 2"), {}) == 2.0


def test_power_constant_exponents():
    assert eval_value(parse("x^-2"), {"x": 2.0}) == 0.25
    assert eval_value(parse("x^(-2)"), {"x": 2.0}) == 0.25
    assert eval_value(parse("x^0.5"), {"x": 9.0}) == 3.0
    with pytest.raises(ParseError, match="numeric constant"):
        parse("x^y")


# --------------------------------------------------------------------------
# dual evaluation


def test_eval_dual_identity():
    d = dual_at(parse("x"), x=3.0)
    assert d.value == 3.0
    assert d.deriv.tolist() == [1.0]


def test_eval_dual_profile_at_zero():
    d = dual_at(parse(F_DEFAULT), x=0.0)
    assert d.value == pytest.approx(2.5, abs=1e-15)
    assert d.deriv[0] == pytest.approx(0.0, abs=1e-15)


def test_eval_dual_profile_at_quarter():
    # hand evaluation: value 2 + 0.5 cos(pi/2) = 2, derivative -0.5*2pi*sin(pi/2) = -pi
    d = dual_at(parse(F_DEFAULT), x=0.25)
    assert d.value == pytest.approx(2.0, abs=1e-12)
    assert d.deriv[0] == pytest.approx(-math.pi, rel=1e-12)


def test_eval_dual_unbound_variable():
    with pytest.raises(UnboundVariableError):
        eval_dual(parse("x + y"), {"x": Dual.variable(1.0, 0, 1)})


@pytest.mark.parametrize("src", ["1/x", "log(x)", "sqrt(x)", "x^0.5"])
def test_eval_dual_domain_errors(src):
    with pytest.raises(DomainError):
        dual_at(parse(src), x=0.0)
    with pytest.raises(DomainError):
        dual_at(parse("log(x)"), x=-1.0)


def test_dual_product_rule_exact():
    a = Dual(3.0, np.array([1.0, 0.0]))
    b = Dual(5.0, np.array([0.0, 1.0]))
    p = a * b
    assert p.value == 15.0
    assert p.deriv.tolist() == [5.0, 3.0]


def test_abs_derivative_sign_convention():
    assert dual_at(parse("abs(x)"), x=-2.0).deriv[0] == -1.0
    assert dual_at(parse("abs(x)"), x=2.0).deriv[0] == 1.0
    assert dual_at(parse("abs(x)"), x=0.0).deriv[0] == 0.0


# --------------------------------------------------------------------------
# serialization round-trip

# negative literals are spelled with unary minus by the grammar, so only
# nonnegative Num leaves are in the parser's image
_leaf = st.one_of(
    st.floats(min_value=0, max_value=4, allow_nan=False).map(lambda v: Num(round(v, 4))),
    st.sampled_from([Var("x"), Var("y"), Pi()]),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs"]), children).map(
            lambda t: Call(*t)
        ),
        st.tuples(children, st.sampled_from([2.0, 3.0, 0.5, -1.0, -2.5])).map(lambda t: Pow(*t)),
    )


expr_trees = st.recursive(_leaf, _extend, max_leaves=12)


@given(expr_trees)
@settings(max_examples=300)
def test_serialize_parse_round_trip(e):
    assert parse(serialize(e)) == e


def test_serialize_examples():
    assert serialize(parse("2 + 0.5*cos(2*pi*x)")) == "2 + 0.5 * cos(2 * pi * x)"
    assert serialize(Neg(Pow(Var("x"), 2.0))) == "-x^2"
    assert serialize(BinOp("-", Num(1.0), BinOp("-", Var("x"), Var("y")))) == "1 - (x - y)"


# --------------------------------------------------------------------------
# derivative vs central finite differences

_fd_leaf = st.one_of(
    st.floats(min_value=0, max_value=2, allow_nan=False).map(lambda v: Num(round(v, 4))),
    st.sampled_from([Var("x"), Var("y")]),
)


def _fd_extend(children):
    # shapes chosen to stay smooth and bounded on the test box
    return st.one_of(
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: Call(*t)),
        children.map(lambda e: Call("exp", Call("sin", e))),
        children.map(lambda e: Call("log", BinOp("+", Num(3.0), Call("cos", e)))),
        children.map(lambda e: Call("sqrt", BinOp("+", Num(2.5), Call("sin", e)))),
        children.map(lambda e: BinOp("/", Num(1.0), BinOp("+", Num(3.0), Call("cos", e)))),
        children.map(lambda e: Pow(BinOp("+", Num(2.5), Call("sin", e)), 1.5)),
        children.map(lambda e: Pow(e, 2.0)),
    )


fd_trees = st.recursive(_fd_leaf, _fd_extend, max_leaves=10)


@given(fd_trees, st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=200, deadline=None)
def test_dual_derivative_matches_central_differences(e, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2.0, 2.0, size=(50, 2))
    h = 1e-6
    for x, y in pts:
        try:
            d = dual_at(e, x=x, y=y)
            fx1 = eval_value(e, {"x": x + h, "y": y})
            fx0 = eval_value(e, {"x": x - h, "y": y})
            fy1 = eval_value(e, {"x": x, "y": y + h})
            fy0 = eval_value(e, {"x": x, "y": y - h})
        except DomainError:
            continue
        if not all(abs(v) < 1e3 for v in (d.value, fx1, fx0, fy1, fy0)):
            continue
        fd = np.array([(fx1 - fx0) / (2 * h), (fy1 - fy0) / (2 * h)])
        tol = 1e-6 * max(1.0, float(np.abs(d.deriv).max()))
        assert np.abs(fd - d.deriv).max() <= tol


# --------------------------------------------------------------------------
# structural transforms


def test_substitute_preserves_untouched_structure():
    e = parse(F_DEFAULT)
    assert substitute(e, {"z": Var("w")}) == e
    swapped = substitute(e, {"x": Var("z")})
    assert serialize(swapped) == "2 + 0.5 * cos(2 * pi * z)"


def test_derivative_matches_dual_on_samples():
    e = parse("(2 + 0.5*cos(2*pi*x)) * exp(sin(2*pi*y)) / (3 + x^2)")
    dx = derivative(e, "x")
    for x, y in [(0.1, 0.7), (0.45, 0.2), (0.9, 0.9)]:
        expected = dual_at(e, x=x, y=y).deriv[0]
        assert eval_value(dx, {"x": x, "y": y}) == pytest.approx(expected, rel=1e-12)


# --------------------------------------------------------------------------
# profile validation


def test_validate_profile_default_passes():
    # min of a + b cos is a - |b| = 1.5 > 1
    assert validate_profile(parse(F_DEFAULT), "x", 256) == []


def test_validate_profile_below_one():
    # same formula: min 0.5
    out = validate_profile(parse("1 + 0.5*cos(2*pi*x)"), "x", 256)
    assert [v.kind for v in out] == ["below-one"]
    assert "min f = 0.5" in out[0].message


def test_validate_profile_not_periodic():
    out = validate_profile(parse("x"), "x", 256)
    assert "not-periodic" in [v.kind for v in out]


def test_validate_profile_constant():
    out = validate_profile(parse("2 + 0*x"), "x", 64)
    assert "constant" in [v.kind for v in out]


def test_validate_profile_grid_minimum():
    with pytest.raises(ValueError):
        validate_profile(parse(F_DEFAULT), "x", 8)


def test_validate_profile_propagates_eval_error_with_point():
    with pytest.raises(DomainError, match="x = 0.5"):
        validate_profile(parse("2 + 1/(x - 0.5)"), "x", 256)
