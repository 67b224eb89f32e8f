"""Scalar expression language: parsing, evaluation, symbolic differentiation.

Every coefficient function, membership constraint, chart map, cutoff, and
radial profile in the package is an immutable expression tree over the
coordinates x0..x15, the degree-2 parameter u, and the flow angle theta.
Trees are hashable, structurally comparable, and print back to parseable
text, so they double as cache keys and as the embedded language of scene
files.

Grammar (EBNF, also reproduced in the README):

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          # right-associative
    atom    := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
    NUMBER  := decimal literal, optional fraction and exponent
    IDENT   := x0..x15 | u | theta | function name

Functions: sin cos exp sqrt tanh abs bump step, plus the derivative
helpers bump_dN / step_dN that `differentiate` emits so that derivative
trees stay printable and exactly clamped outside their supports.

bump(t) = exp(1 - 1/(1 - t^2)) for |t| < 1 and exactly 0 outside; all
derivatives vanish at |t| = 1.  step(t) is the matching smooth ramp:
exactly 1 for t <= 0, exactly 0 for t >= 1, and
bump(t) / (bump(t) + bump(1 - t)) in between.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    EvaluationDomainError,
    ExpressionError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
)

MAX_COORDS = 16

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "tanh", "abs", "bump", "step")

_COORD_RE = re.compile(r"^x([0-9]+)$")
_DERIV_RE = re.compile(r"^(bump|step)_d([1-9][0-9]*)$")


class Expression:
    """Base node. Immutable; operators build new trees."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return pow_(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Num(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expression):
    name: str

    @property
    def index(self) -> int:
        m = _COORD_RE.match(self.name)
        return int(m.group(1)) if m else -1


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True, slots=True)
class BinOp(Expression):
    op: str  # one of + - * / ^
    lhs: Expression
    rhs: Expression


@dataclass(frozen=True, slots=True)
class Call(Expression):
    fn: str
    arg: Expression


@dataclass(frozen=True, slots=True)
class ProfileDeriv(Expression):
    """order-th derivative of the bump or step profile, clamped outside."""

    kind: str  # "bump" | "step"
    order: int
    arg: Expression


U = Var("u")
THETA = Var("theta")

ExprLike = Union[Expression, float, int]


def as_expr(v: ExprLike) -> Expression:
    if isinstance(v, Expression):
        return v
    if isinstance(v, (int, float)):
        return num(float(v))
    raise TypeError(f"cannot coerce {type(v).__name__} to Expression")


def var(i: int) -> Var:
    if not 0 <= i < MAX_COORDS:
        raise ExpressionError(f"coordinate index {i} outside x0..x{MAX_COORDS - 1}")
    return Var(f"x{i}")


def num(v: float) -> Expression:
    v = float(v)
    if v == 0.0:
        return Num(0.0)  # avoid -0.0 so printing round-trips
    if v < 0.0:
        return Neg(Num(-v))
    return Num(v)


# Smart constructors fold constants and drop identities so derivative trees
# stay small.  No rewriting beyond that.

def _const(e: Expression) -> Optional[float]:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Num):
        return -e.arg.value
    return None


def add(a: ExprLike, b: ExprLike) -> Expression:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return num(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a: ExprLike, b: ExprLike) -> Expression:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return num(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: ExprLike, b: ExprLike) -> Expression:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return num(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return Num(0.0)
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if ca == -1.0:
        return neg(b)
    if cb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: ExprLike, b: ExprLike) -> Expression:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _const(a), _const(b)
    if cb is not None and cb != 0.0:
        if ca is not None:
            return num(ca / cb)
        if cb == 1.0:
            return a
    return BinOp("/", a, b)


def pow_(a: ExprLike, b: ExprLike) -> Expression:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _const(a), _const(b)
    if cb == 1.0:
        return a
    if cb == 0.0:
        return Num(1.0)
    if ca is not None and cb is not None:
        if ca < 0.0 and cb != round(cb):
            raise EvaluationDomainError(f"({ca}) ^ {cb} leaves the reals")
        return num(ca**cb)
    return BinOp("^", a, b)


def neg(a: ExprLike) -> Expression:
    a = as_expr(a)
    if isinstance(a, Num):
        return num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(fn: str, arg: ExprLike) -> Expression:
    if fn not in FUNCTIONS:
        raise ExpressionError(f"unknown function {fn!r}")
    return Call(fn, as_expr(arg))


def emax(a: ExprLike, b: ExprLike) -> Expression:
    """Pointwise max via abs; exact, piecewise-smooth."""
    a, b = as_expr(a), as_expr(b)
    return div(add(add(a, b), call("abs", sub(a, b))), 2.0)


def emin(a: ExprLike, b: ExprLike) -> Expression:
    a, b = as_expr(a), as_expr(b)
    return div(sub(add(a, b), call("abs", sub(a, b))), 2.0)


def esum(terms: Iterable[ExprLike]) -> Expression:
    out: Expression = Num(0.0)
    for t in terms:
        out = add(out, t)
    return out


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip leading spaces manually to report the true offset
            k = pos
            while k < n and text[k].isspace():
                k += 1
            if k >= n:
                break
            raise ExpressionSyntaxError(f"unexpected character {text[k]!r}", k)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        if not text or not text.strip():
            raise ExpressionSyntaxError("empty expression", 0)
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_sym(self, sym: str):
        kind, value, off = self.next()
        if kind != "sym" or value != sym:
            raise ExpressionSyntaxError(f"expected {sym!r}", off)

    def parse(self) -> Expression:
        e = self.expr()
        kind, value, off = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {value!r}", off)
        return e

    def expr(self) -> Expression:
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "sym" and value in "+-":
                self.next()
                rhs = self.term()
                e = BinOp(value, e, rhs)
            else:
                return e

    def term(self) -> Expression:
        e = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "sym" and value in "*/":
                self.next()
                rhs = self.unary()
                e = BinOp(value, e, rhs)
            else:
                return e

    def unary(self) -> Expression:
        kind, value, _ = self.peek()
        if kind == "sym" and value == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "sym" and value == "^":
            self.next()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, value, off = self.next()
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "sym" and nxt_value == "(":
                self.next()
                arg = self.expr()
                self.expect_sym(")")
                if value in FUNCTIONS:
                    return Call(value, arg)
                dm = _DERIV_RE.match(value)
                if dm:
                    return ProfileDeriv(dm.group(1), int(dm.group(2)), arg)
                raise UnknownIdentifierError(f"unknown function {value!r}", off)
            m = _COORD_RE.match(value)
            if m:
                if int(m.group(1)) >= MAX_COORDS:
                    raise UnknownIdentifierError(
                        f"coordinate {value!r} outside x0..x{MAX_COORDS - 1}", off
                    )
                return Var(value)
            if value in ("u", "theta"):
                return Var(value)
            raise UnknownIdentifierError(f"unknown identifier {value!r}", off)
        if kind == "sym" and value == "(":
            e = self.expr()
            self.expect_sym(")")
            return e
        raise ExpressionSyntaxError(
            "unexpected end of input" if kind == "end" else f"unexpected {value!r}", off
        )


def parse_expression(text: str) -> Expression:
    """Parse text into an Expression; raises with a character offset on error."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_LEVEL_ADD, _LEVEL_MUL, _LEVEL_NEG, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _level(e: Expression) -> int:
    if isinstance(e, BinOp):
        if e.op in "+-":
            return _LEVEL_ADD
        if e.op in "*/":
            return _LEVEL_MUL
        return _LEVEL_POW
    if isinstance(e, Neg):
        return _LEVEL_NEG
    return _LEVEL_ATOM


def _fmt_float(v: float) -> str:
    return repr(v)


def to_text(e: Expression) -> str:
    """Print so that parse(to_text(e)) reproduces the tree exactly."""
    if isinstance(e, Num):
        return _fmt_float(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _level(e.arg) < _LEVEL_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    if isinstance(e, ProfileDeriv):
        return f"{e.kind}_d{e.order}({to_text(e.arg)})"
    if isinstance(e, BinOp):
        lt, rt = to_text(e.lhs), to_text(e.rhs)
        if e.op in "+-":
            if _level(e.lhs) < _LEVEL_ADD:
                lt = f"({lt})"
            if _level(e.rhs) <= _LEVEL_ADD:
                rt = f"({rt})"
            return f"{lt} {e.op} {rt}"
        if e.op in "*/":
            if _level(e.lhs) < _LEVEL_MUL:
                lt = f"({lt})"
            if _level(e.rhs) <= _LEVEL_MUL:
                rt = f"({rt})"
            return f"{lt}{e.op}{rt}"
        # power: left binds strictly tighter, exponent is a unary production
        if _level(e.lhs) < _LEVEL_ATOM:
            lt = f"({lt})"
        if _level(e.rhs) < _LEVEL_NEG:
            rt = f"({rt})"
        return f"{lt}^{rt}"
    raise TypeError(f"not an Expression: {e!r}")


# ---------------------------------------------------------------------------
# Variable inventory and substitution
# ---------------------------------------------------------------------------

def variables(e: Expression) -> frozenset[str]:
    """Names of all variables appearing in the tree."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Neg):
            stack.append(n.arg)
        elif isinstance(n, BinOp):
            stack.append(n.lhs)
            stack.append(n.rhs)
        elif isinstance(n, (Call, ProfileDeriv)):
            stack.append(n.arg)
    return frozenset(out)


def max_coord(e: Expression) -> int:
    """Largest coordinate index used, or -1 if none."""
    best = -1
    for name in variables(e):
        m = _COORD_RE.match(name)
        if m:
            best = max(best, int(m.group(1)))
    return best


def subs(e: Expression, mapping: Mapping[str, ExprLike]) -> Expression:
    """Substitute variables by expressions (simultaneous)."""
    table = {k: as_expr(v) for k, v in mapping.items()}

    def walk(n: Expression) -> Expression:
        if isinstance(n, Num):
            return n
        if isinstance(n, Var):
            return table.get(n.name, n)
        if isinstance(n, Neg):
            return neg(walk(n.arg))
        if isinstance(n, BinOp):
            a, b = walk(n.lhs), walk(n.rhs)
            if n.op == "+":
                return add(a, b)
            if n.op == "-":
                return sub(a, b)
            if n.op == "*":
                return mul(a, b)
            if n.op == "/":
                return div(a, b)
            return pow_(a, b)
        if isinstance(n, Call):
            return Call(n.fn, walk(n.arg))
        if isinstance(n, ProfileDeriv):
            return ProfileDeriv(n.kind, n.order, walk(n.arg))
        raise TypeError(f"not an Expression: {n!r}")

    return walk(e)


def shift_coords(e: Expression, offset: int) -> Expression:
    """Rename every xi to x(i+offset)."""
    if offset == 0:
        return e
    mapping = {}
    for name in variables(e):
        m = _COORD_RE.match(name)
        if m:
            mapping[name] = var(int(m.group(1)) + offset)
    return subs(e, mapping)


# ---------------------------------------------------------------------------
# Profile helpers (bump / step internals)
# ---------------------------------------------------------------------------

def _bump_scalar(t: float) -> float:
    if not math.isfinite(t) or abs(t) >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - t * t))


def _step_scalar(t: float) -> float:
    if not math.isfinite(t):
        return 0.0
    if t <= 0.0:
        return 1.0
    if t >= 1.0:
        return 0.0
    b = _bump_scalar(t)
    return b / (b + _bump_scalar(1.0 - t))


_T = Var("x0")  # formal parameter of the cached profile-derivative factors


@lru_cache(maxsize=None)
def _bump_factor(order: int) -> Expression:
    """g_n with bump^(n)(t) = bump(t) * g_n(t) on |t| < 1."""
    if order == 1:
        return div(mul(-2.0, _T), pow_(sub(1.0, mul(_T, _T)), 2.0))
    prev = _bump_factor(order - 1)
    return add(differentiate(prev, "x0"), mul(_bump_factor(1), prev))


@lru_cache(maxsize=None)
def _step_interior(order: int) -> Expression:
    """order-th derivative of the step profile, valid on 0 < t < 1."""
    if order == 0:
        b = Call("bump", _T)
        return div(b, add(b, Call("bump", sub(1.0, _T))))
    return differentiate(_step_interior(order - 1), "x0")


# ---------------------------------------------------------------------------
# Evaluation (strict scalar path)
# ---------------------------------------------------------------------------

def evaluate(
    e: Expression,
    point: Sequence[float] = (),
    u_value: Optional[float] = None,
    theta_value: Optional[float] = None,
) -> float:
    """IEEE double evaluation. Raises EvaluationDomainError when the result
    leaves the reals; bump/step clamp exactly outside their supports."""

    def ev(n: Expression) -> float:
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Var):
            if n.name == "u":
                if u_value is None:
                    raise EvaluationDomainError("u appears but no u value supplied")
                return float(u_value)
            if n.name == "theta":
                if theta_value is None:
                    raise EvaluationDomainError("theta appears but no theta value supplied")
                return float(theta_value)
            i = n.index
            if i >= len(point):
                raise EvaluationDomainError(
                    f"point of dimension {len(point)} does not supply {n.name}"
                )
            return float(point[i])
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, BinOp):
            a = ev(n.lhs)
            b = ev(n.rhs)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                if b == 0.0:
                    raise EvaluationDomainError("division by zero")
                return a / b
            if a < 0.0 and b != round(b):
                raise EvaluationDomainError(f"({a}) ^ {b} leaves the reals")
            try:
                return float(a**b)
            except (OverflowError, ZeroDivisionError) as exc:
                raise EvaluationDomainError(str(exc)) from exc
        if isinstance(n, Call):
            t = ev(n.arg)
            if n.fn == "sin":
                return math.sin(t)
            if n.fn == "cos":
                return math.cos(t)
            if n.fn == "exp":
                return math.exp(t)
            if n.fn == "tanh":
                return math.tanh(t)
            if n.fn == "abs":
                return abs(t)
            if n.fn == "sqrt":
                if t < 0.0:
                    raise EvaluationDomainError(f"sqrt of negative value {t}")
                return math.sqrt(t)
            if n.fn == "bump":
                return _bump_scalar(t)
            return _step_scalar(t)
        if isinstance(n, ProfileDeriv):
            t = ev(n.arg)
            if n.kind == "bump":
                if not math.isfinite(t) or abs(t) >= 1.0:
                    return 0.0
                return _bump_scalar(t) * evaluate(_bump_factor(n.order), (t,))
            if not math.isfinite(t) or t <= 0.0 or t >= 1.0:
                return 0.0
            return evaluate(_step_interior(n.order), (t,))
        raise TypeError(f"not an Expression: {n!r}")

    return ev(e)


# ---------------------------------------------------------------------------
# Vectorized evaluation
# ---------------------------------------------------------------------------
#
# compile_expression returns f(points, u=None, theta=None) -> ndarray over
# rows of `points`.  The vector path keeps IEEE semantics (nan/inf propagate)
# except that bump/step treat non-finite arguments as outside support, which
# keeps partition-of-unity products exact when chart maps blow up off-region.

_EvalCtx = tuple  # (points, u, theta)


def _np_bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    with np.errstate(all="ignore"):
        m = np.abs(t) < 1.0  # False for nan/inf
        tm = t[m]
        out[m] = np.exp(1.0 - 1.0 / (1.0 - tm * tm))
    return out


def _np_step(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    with np.errstate(all="ignore"):
        out[t <= 0.0] = 1.0
        m = (t > 0.0) & (t < 1.0)
        tm = t[m]
        b = np.exp(1.0 - 1.0 / (1.0 - tm * tm))
        bbar = np.exp(1.0 - 1.0 / (1.0 - (1.0 - tm) * (1.0 - tm)))
        out[m] = b / (b + bbar)
    return out


def _build(n: Expression) -> Callable[[_EvalCtx], np.ndarray]:
    if isinstance(n, Num):
        v = n.value
        return lambda ctx: np.full(ctx[0].shape[0], v)
    if isinstance(n, Var):
        if n.name == "u":
            def f_u(ctx):
                if ctx[1] is None:
                    raise EvaluationDomainError("u appears but no u value supplied")
                return np.broadcast_to(np.asarray(ctx[1], dtype=float), (ctx[0].shape[0],)).copy()
            return f_u
        if n.name == "theta":
            def f_th(ctx):
                if ctx[2] is None:
                    raise EvaluationDomainError("theta appears but no theta value supplied")
                return np.broadcast_to(np.asarray(ctx[2], dtype=float), (ctx[0].shape[0],)).copy()
            return f_th
        i = n.index
        def f_var(ctx):
            pts = ctx[0]
            if i >= pts.shape[1]:
                raise EvaluationDomainError(
                    f"points of dimension {pts.shape[1]} do not supply x{i}"
                )
            return pts[:, i].astype(float, copy=False)
        return f_var
    if isinstance(n, Neg):
        fa = _build(n.arg)
        return lambda ctx: -fa(ctx)
    if isinstance(n, BinOp):
        fa, fb = _build(n.lhs), _build(n.rhs)
        op = n.op
        if op == "+":
            return lambda ctx: fa(ctx) + fb(ctx)
        if op == "-":
            return lambda ctx: fa(ctx) - fb(ctx)
        if op == "*":
            return lambda ctx: fa(ctx) * fb(ctx)
        if op == "/":
            def f_div(ctx):
                with np.errstate(all="ignore"):
                    return fa(ctx) / fb(ctx)
            return f_div
        def f_pow(ctx):
            with np.errstate(all="ignore"):
                return np.power(fa(ctx), fb(ctx))
        return f_pow
    if isinstance(n, Call):
        fa = _build(n.arg)
        fn = n.fn
        if fn == "sin":
            return lambda ctx: np.sin(fa(ctx))
        if fn == "cos":
            return lambda ctx: np.cos(fa(ctx))
        if fn == "exp":
            def f_exp(ctx):
                with np.errstate(all="ignore"):
                    return np.exp(fa(ctx))
            return f_exp
        if fn == "tanh":
            return lambda ctx: np.tanh(fa(ctx))
        if fn == "abs":
            return lambda ctx: np.abs(fa(ctx))
        if fn == "sqrt":
            def f_sqrt(ctx):
                with np.errstate(all="ignore"):
                    return np.sqrt(fa(ctx))
            return f_sqrt
        if fn == "bump":
            return lambda ctx: _np_bump(fa(ctx))
        return lambda ctx: _np_step(fa(ctx))
    if isinstance(n, ProfileDeriv):
        fa = _build(n.arg)
        if n.kind == "bump":
            factor = compile_expression(_bump_factor(n.order))
            def f_bd(ctx):
                t = fa(ctx)
                out = np.zeros_like(t)
                with np.errstate(all="ignore"):
                    m = np.abs(t) < 1.0
                tm = t[m].reshape(-1, 1)
                if tm.size:
                    out[m] = _np_bump(t[m]) * factor(tm)
                return out
            return f_bd
        interior = compile_expression(_step_interior(n.order))
        def f_sd(ctx):
            t = fa(ctx)
            out = np.zeros_like(t)
            with np.errstate(all="ignore"):
                m = (t > 0.0) & (t < 1.0)
            tm = t[m].reshape(-1, 1)
            if tm.size:
                out[m] = interior(tm)
            return out
        return f_sd
    raise TypeError(f"not an Expression: {n!r}")


@lru_cache(maxsize=4096)
def _compiled(e: Expression) -> Callable[[_EvalCtx], np.ndarray]:
    return _build(e)


def compile_expression(e: Expression):
    """Vectorized evaluator: f(points (N, d), u=None, theta=None) -> (N,)."""
    f = _compiled(e)

    def run(points, u=None, theta=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return f((pts, u, theta))

    return run


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

def differentiate(e: Expression, varname: str) -> Expression:
    """Exact symbolic partial derivative with respect to a coordinate (or theta)."""
    if varname == "u":
        raise ExpressionError("differentiation with respect to u is not defined")

    def d(n: Expression) -> Expression:
        if isinstance(n, Num):
            return Num(0.0)
        if isinstance(n, Var):
            return Num(1.0) if n.name == varname else Num(0.0)
        if isinstance(n, Neg):
            return neg(d(n.arg))
        if isinstance(n, BinOp):
            a, b = n.lhs, n.rhs
            da, db = d(a), d(b)
            if n.op == "+":
                return add(da, db)
            if n.op == "-":
                return sub(da, db)
            if n.op == "*":
                return add(mul(da, b), mul(a, db))
            if n.op == "/":
                return div(sub(mul(da, b), mul(a, db)), pow_(b, 2.0))
            c = _const(b)
            if c is None:
                raise ExpressionError(
                    "cannot differentiate a power with non-constant exponent"
                )
            return mul(mul(num(c), pow_(a, c - 1.0)), da)
        if isinstance(n, Call):
            g = n.arg
            dg = d(g)
            if n.fn == "sin":
                return mul(Call("cos", g), dg)
            if n.fn == "cos":
                return neg(mul(Call("sin", g), dg))
            if n.fn == "exp":
                return mul(Call("exp", g), dg)
            if n.fn == "tanh":
                return mul(sub(1.0, pow_(Call("tanh", g), 2.0)), dg)
            if n.fn == "sqrt":
                return div(dg, mul(2.0, Call("sqrt", g)))
            if n.fn == "abs":
                # a.e. derivative; the kink at 0 has measure zero
                return mul(div(g, Call("abs", g)), dg)
            if n.fn == "bump":
                return mul(ProfileDeriv("bump", 1, g), dg)
            return mul(ProfileDeriv("step", 1, g), dg)
        if isinstance(n, ProfileDeriv):
            return mul(ProfileDeriv(n.kind, n.order + 1, n.arg), d(n.arg))
        raise TypeError(f"not an Expression: {n!r}")

    return d(e)


def gradient(e: Expression, dim: int) -> tuple[Expression, ...]:
    return tuple(differentiate(e, f"x{i}") for i in range(dim))


def evaluate_map(exprs: Sequence[Expression], points, u=None, theta=None) -> np.ndarray:
    """Apply a coordinate map (one expression per output axis) to points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not exprs:
        return np.zeros((pts.shape[0], 0))
    cols = [compile_expression(e)(pts, u=u, theta=theta) for e in exprs]
    return np.stack(cols, axis=-1)


def compose_map(outer: Sequence[Expression], inner: Sequence[Expression]):
    """outer after inner, as expressions (xi of outer fed by inner[i])."""
    mapping = {f"x{i}": g for i, g in enumerate(inner)}
    return tuple(subs(e, mapping) for e in outer)


def identity_map(dim: int) -> tuple[Expression, ...]:
    return tuple(var(i) for i in range(dim))
