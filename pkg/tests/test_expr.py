import math
import random

import numpy as np
import pytest

from virtman.errors import (
    EvaluationDomainError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
)
from virtman.expr import (
    BinOp,
    Call,
    Neg,
    Num,
    Var,
    compile_expression,
    differentiate,
    evaluate,
    parse_expression,
    subs,
    to_text,
    variables,
)


def test_parse_shapes():
    e = parse_expression("x0^2 + sin(x1)")
    assert e == BinOp("+", BinOp("^", Var("x0"), Num(2.0)), Call("sin", Var("x1")))

    e = parse_expression("2*-x0")
    assert e == BinOp("*", Num(2.0), Neg(Var("x0")))


def test_power_right_associative():
    e = parse_expression("x0^x1^2")
    assert e == BinOp("^", Var("x0"), BinOp("^", Var("x1"), Num(2.0)))


def test_unary_minus_precedence():
    # ^ binds tighter than unary minus
    assert evaluate(parse_expression("-x0^2"), (3.0,)) == -9.0
    # unary minus binds tighter than *
    assert evaluate(parse_expression("-x0*x1"), (3.0, 2.0)) == -6.0


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse_expression("x0 +")
    assert exc.value.offset == 4


def test_unknown_identifiers_rejected():
    with pytest.raises(UnknownIdentifierError):
        parse_expression("foo(x0)")
    with pytest.raises(UnknownIdentifierError):
        parse_expression("x16 + 1")
    with pytest.raises(UnknownIdentifierError):
        parse_expression("y0")


def test_evaluate_examples():
    assert evaluate(parse_expression("x0^2 + sin(x1)"), (2.0, 0.0)) == 4.0
    assert evaluate(parse_expression("bump(x0)"), (1.0,)) == 0.0
    assert evaluate(parse_expression("bump(x0)"), (0.0,)) == 1.0


def test_evaluate_domain_errors():
    with pytest.raises(EvaluationDomainError):
        evaluate(parse_expression("sqrt(x0)"), (-1.0,))
    with pytest.raises(EvaluationDomainError):
        evaluate(parse_expression("1/x0"), (0.0,))
    with pytest.raises(EvaluationDomainError):
        evaluate(parse_expression("x0"), (), u_value=None)


def test_u_gating():
    e = parse_expression("u*x0")
    assert evaluate(e, (3.0,), u_value=2.0) == 6.0
    with pytest.raises(EvaluationDomainError):
        evaluate(e, (3.0,))


def test_bump_profile_values():
    b = parse_expression("bump(x0)")
    assert evaluate(b, (0.0,)) == 1.0
    assert evaluate(b, (1.0,)) == 0.0
    assert evaluate(b, (-1.0,)) == 0.0
    assert evaluate(b, (5.0,)) == 0.0
    # interior value matches the closed form
    t = 0.6
    assert evaluate(b, (t,)) == pytest.approx(math.exp(1 - 1 / (1 - t * t)), abs=0)


def test_bump_derivatives_clamp():
    b = parse_expression("bump(x0)")
    d1 = differentiate(b, "x0")
    d2 = differentiate(d1, "x0")
    for t in (1.0, -1.0, 1.5, -2.0):
        assert evaluate(d1, (t,)) == 0.0
        assert evaluate(d2, (t,)) == 0.0
    # smooth vanishing approaching the edge
    assert abs(evaluate(d1, (0.999,))) < 1e-100


def test_step_profile():
    s = parse_expression("step(x0)")
    assert evaluate(s, (-0.5,)) == 1.0
    assert evaluate(s, (0.0,)) == 1.0
    assert evaluate(s, (1.0,)) == 0.0
    assert evaluate(s, (2.0,)) == 0.0
    assert evaluate(s, (0.5,)) == pytest.approx(0.5)
    # monotone decreasing inside
    vals = [evaluate(s, (t,)) for t in np.linspace(0.01, 0.99, 21)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_step_derivative_matches_finite_difference():
    s = parse_expression("step(x0)")
    d = differentiate(s, "x0")
    h = 1e-6
    for t in (0.2, 0.5, 0.8):
        fd = (evaluate(s, (t + h,)) - evaluate(s, (t - h,))) / (2 * h)
        assert evaluate(d, (t,)) == pytest.approx(fd, abs=1e-6)
    assert evaluate(d, (0.0,)) == 0.0
    assert evaluate(d, (1.0,)) == 0.0


def test_differentiate_power_rule():
    assert to_text(differentiate(parse_expression("x0^2"), "x0")) == "2.0*x0"
    assert differentiate(parse_expression("x0^2"), "x1") == Num(0.0)


def test_derivative_roundtrip_through_text():
    d = differentiate(parse_expression("bump(x0*x1)"), "x0")
    again = parse_expression(to_text(d))
    assert again == d
    assert evaluate(again, (0.3, 0.5)) == evaluate(d, (0.3, 0.5))


def _random_expression(rng, depth, nvars):
    leaf_choices = ["var", "const"]
    if depth <= 0:
        kind = rng.choice(leaf_choices)
    else:
        kind = rng.choice(["add", "sub", "mul", "fn", "pow", "var", "const"])
    if kind == "var":
        return Var(f"x{rng.randrange(nvars)}")
    if kind == "const":
        return Num(round(rng.uniform(0.1, 3.0), 3))
    if kind == "pow":
        return BinOp("^", _random_expression(rng, 0, nvars), Num(float(rng.randrange(1, 4))))
    if kind == "fn":
        fn = rng.choice(["sin", "cos", "tanh", "exp", "bump"])
        return Call(fn, _random_expression(rng, depth - 1, nvars))
    op = {"add": "+", "sub": "-", "mul": "*"}[kind]
    return BinOp(op, _random_expression(rng, depth - 1, nvars),
                 _random_expression(rng, depth - 1, nvars))


def test_symbolic_derivative_vs_central_difference():
    rng = random.Random(20240817)
    nvars = 3
    h = 1e-5
    checked = 0
    for _ in range(100):
        e = _random_expression(rng, 3, nvars)
        i = rng.randrange(nvars)
        d = differentiate(e, f"x{i}")
        p = [rng.uniform(-1.5, 1.5) for _ in range(nvars)]
        pp, pm = list(p), list(p)
        pp[i] += h
        pm[i] -= h
        fd = (evaluate(e, pp) - evaluate(e, pm)) / (2 * h)
        val = evaluate(d, p)
        assert abs(val - fd) <= 1e-5 * (1.0 + abs(val)), to_text(e)
        checked += 1
    assert checked == 100


def test_roundtrip_bit_for_bit():
    rng = random.Random(7)
    for _ in range(100):
        e = _random_expression(rng, 3, 3)
        text = to_text(e)
        again = parse_expression(text)
        assert again == e
        p = [rng.uniform(-2, 2) for _ in range(3)]
        assert evaluate(again, p) == evaluate(e, p)


def test_compiled_matches_scalar():
    rng = random.Random(99)
    for _ in range(30):
        e = _random_expression(rng, 3, 2)
        f = compile_expression(e)
        pts = np.array([[rng.uniform(-2, 2), rng.uniform(-2, 2)] for _ in range(17)])
        vec = f(pts)
        scal = np.array([evaluate(e, tuple(row)) for row in pts])
        np.testing.assert_allclose(vec, scal, rtol=1e-13, atol=1e-300)


def test_compiled_bump_handles_nonfinite():
    f = compile_expression(parse_expression("bump(1/x0)"))
    vals = f(np.array([[0.0], [0.5], [10.0]]))
    # 1/0 -> inf -> outside support -> exactly 0
    assert vals[0] == 0.0
    assert vals[1] == 0.0  # 1/0.5 = 2 outside support
    assert vals[2] > 0.0


def test_subs_and_variables():
    e = parse_expression("x0^2 + x1")
    assert variables(e) == frozenset({"x0", "x1"})
    g = subs(e, {"x0": parse_expression("sin(x2)")})
    assert variables(g) == frozenset({"x1", "x2"})
    assert evaluate(g, (0, 1, 0)) == 1.0
