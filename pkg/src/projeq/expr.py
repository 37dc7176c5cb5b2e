"""Closed-form scalar expressions with exact forward-mode derivatives.

The grammar covers numeric literals, named variables, the constant ``pi``,
binary ``+ - * /``, unary minus, ``^`` with a constant exponent, and the
functions sin, cos, exp, log, sqrt, abs.  Precedence is
``^`` > unary ``-`` > ``* /`` > ``+ -`` with left associativity for binary
operators of equal precedence (see README for the EBNF).

Evaluation is deterministic and total on the declared domain: log/sqrt of a
nonpositive value, division by zero, and fractional powers of negative bases
raise :class:`DomainError` instead of producing NaN.

Expressions also compile to a flat stack-machine tape (:class:`Program`)
consumed by the numeric core; the tree-walking evaluator here is the readable
reference the core is tested against.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")


class ExpressionError(ValueError):
    pass


class ParseError(ExpressionError):
    """Syntax or identifier error, with the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ExpressionError):
    pass


class UnboundVariableError(EvalError):
    pass


class DomainError(EvalError):
    pass


# --------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return serialize(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Pi(Expr):
    pass


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


# --------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables):
        if not source or not source.strip():
            raise ParseError("empty expression", 0)
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = None if variables is None else frozenset(variables)

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, got, pos = self.next()
        if got != text:
            raise ParseError(f"expected {text!r}, got {got!r}" if got else f"expected {text!r}, got end of input", pos)

    def parse(self) -> Expr:
        e = self.sum()
        kind, text, pos = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected {text!r}", pos)
        return e

    def sum(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while self.peek()[1] == "^":
            self.next()
            e = Pow(e, self.exponent())
        return e

    def exponent(self) -> float:
        # constant exponents only; keeps dual arithmetic total
        kind, text, pos = self.next()
        sign = 1.0
        parens = False
        if text == "(":
            parens = True
            kind, text, pos = self.next()
        if text == "-":
            sign = -1.0
            kind, text, pos = self.next()
        if kind != "num":
            raise ParseError("exponent must be a numeric constant", pos)
        value = sign * float(text)
        if parens:
            self.expect(")")
        return value

    def atom(self) -> Expr:
        kind, text, pos = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text == "pi":
                return Pi()
            if self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos)
                self.next()
                arg = self.sum()
                self.expect(")")
                return Call(text, arg)
            if self.variables is not None and text not in self.variables:
                raise ParseError(f"unknown identifier {text!r}", pos)
            return Var(text)
        if text == "(":
            e = self.sum()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {text!r}" if text else "unexpected end of input", pos)


def parse(source: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse ``source`` into an AST.

    When ``variables`` is given, bare identifiers outside that set are
    rejected at parse time (used to catch typos against chart coordinates).
    """
    return _Parser(source, variables).parse()


# --------------------------------------------------------------------------
# Serialization (minimal parentheses; parse(serialize(e)) == e)

_PREC_SUM, _PREC_TERM, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC_SUM if e.op in "+-" else _PREC_TERM
    if isinstance(e, Neg):
        return _PREC_UNARY
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def serialize(e: Expr) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = serialize(e.arg)
        if _prec(e.arg) < _PREC_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        left = serialize(e.left)
        if _prec(e.left) < _prec(e):
            left = f"({left})"
        right = serialize(e.right)
        if _prec(e.right) <= _prec(e):  # grammar is left-associative
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Pow):
        base = serialize(e.base)
        if _prec(e.base) < _PREC_ATOM:
            base = f"({base})"
        return f"{base}^{format_number(e.exponent)}"
    if isinstance(e, Call):
        return f"{e.func}({serialize(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Pow):
        return free_vars(e.base)
    if isinstance(e, Call):
        return free_vars(e.arg)
    return frozenset()


# --------------------------------------------------------------------------
# Dual numbers and the reference evaluator


class Dual:
    """Forward-mode value: a real plus a fixed-width vector of partials.

    Arithmetic implements the product/quotient/chain rules exactly; a
    variable seeded with a unit slot reproduces partial derivatives.
    """

    __slots__ = ("value", "deriv")

    def __init__(self, value: float, deriv):
        self.value = float(value)
        self.deriv = np.asarray(deriv, dtype=float)

    @classmethod
    def constant(cls, value: float, width: int) -> "Dual":
        return cls(value, np.zeros(width))

    @classmethod
    def variable(cls, value: float, slot: int, width: int) -> "Dual":
        d = np.zeros(width)
        d[slot] = 1.0
        return cls(value, d)

    def _coerce(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual(other, np.zeros_like(self.deriv))

    def __add__(self, other):
        o = self._coerce(other)
        return Dual(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Dual(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        o = self._coerce(other)
        return Dual(self.value * o.value, self.deriv * o.value + self.value * o.deriv)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.value == 0.0:
            raise DomainError("division by zero")
        inv = 1.0 / o.value
        return Dual(self.value * inv, (self.deriv - self.value * inv * o.deriv) * inv)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv.tolist()!r})"


def _dual_pow(u: Dual, c: float) -> Dual:
    if c == round(c):
        c = float(round(c))
        if u.value == 0.0 and c < 0:
            raise DomainError("zero raised to a negative power")
        if c == 0.0:
            return Dual(1.0, np.zeros_like(u.deriv))
        return Dual(u.value**c, c * u.value ** (c - 1.0) * u.deriv)
    if u.value < 0.0:
        raise DomainError("fractional power of a negative base")
    if u.value == 0.0 and c <= 1.0:
        raise DomainError("fractional power at zero has no derivative")
    return Dual(u.value**c, c * u.value ** (c - 1.0) * u.deriv)


def _dual_call(func: str, u: Dual) -> Dual:
    v = u.value
    if func == "sin":
        return Dual(math.sin(v), math.cos(v) * u.deriv)
    if func == "cos":
        return Dual(math.cos(v), -math.sin(v) * u.deriv)
    if func == "exp":
        e = math.exp(v)
        return Dual(e, e * u.deriv)
    if func == "log":
        if v <= 0.0:
            raise DomainError(f"log of nonpositive value {v}")
        return Dual(math.log(v), u.deriv / v)
    if func == "sqrt":
        if v <= 0.0:
            raise DomainError(f"sqrt of nonpositive value {v}")
        s = math.sqrt(v)
        return Dual(s, u.deriv / (2.0 * s))
    if func == "abs":
        # subgradient convention: sign(0) = 0
        return Dual(abs(v), math.copysign(1.0, v) * u.deriv if v != 0.0 else 0.0 * u.deriv)
    raise EvalError(f"unknown function {func!r}")


def eval_dual(e: Expr, bindings: Mapping[str, Dual]) -> Dual:
    """Evaluate ``e`` with all free variables bound to duals."""
    width = next(iter(bindings.values())).deriv.shape[0] if bindings else 0
    return _eval_dual(e, bindings, width)


def _eval_dual(e: Expr, bindings, width: int) -> Dual:
    if isinstance(e, Num):
        return Dual.constant(e.value, width)
    if isinstance(e, Pi):
        return Dual.constant(math.pi, width)
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnboundVariableError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval_dual(e.arg, bindings, width)
    if isinstance(e, BinOp):
        l = _eval_dual(e.left, bindings, width)
        r = _eval_dual(e.right, bindings, width)
        if e.op == "+":
            return l + r
        if e.op == "-":
            return l - r
        if e.op == "*":
            return l * r
        return l / r
    if isinstance(e, Pow):
        return _dual_pow(_eval_dual(e.base, bindings, width), e.exponent)
    if isinstance(e, Call):
        return _dual_call(e.func, _eval_dual(e.arg, bindings, width))
    raise TypeError(f"not an expression node: {e!r}")


def eval_value(e: Expr, values: Mapping[str, float]) -> float:
    """Plain evaluation without derivative tracking."""
    return eval_dual(e, {k: Dual.constant(v, 0) for k, v in values.items()}).value


# --------------------------------------------------------------------------
# Structural transforms


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions; untouched nodes are preserved."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    return e


def _is_const(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Num(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return Num(0.0)
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def derivative(e: Expr, var: str) -> Expr:
    """Structural first derivative d(e)/d(var).

    Zero/one folding is applied while building (the result would otherwise
    explode under the product rule); parsed trees are never rewritten.
    """
    if isinstance(e, (Num, Pi)):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0) if e.name == var else Num(0.0)
    if isinstance(e, Neg):
        d = derivative(e.arg, var)
        return Num(0.0) if _is_const(d, 0.0) else Neg(d)
    if isinstance(e, BinOp):
        dl = derivative(e.left, var)
        dr = derivative(e.right, var)
        if e.op == "+":
            return _add(dl, dr)
        if e.op == "-":
            return _sub(dl, dr)
        if e.op == "*":
            return _add(_mul(dl, e.right), _mul(e.left, dr))
        return _div(_sub(_mul(dl, e.right), _mul(e.left, dr)), Pow(e.right, 2.0))
    if isinstance(e, Pow):
        db = derivative(e.base, var)
        if e.exponent == 0.0:
            return Num(0.0)
        if e.exponent == 1.0:
            return db
        return _mul(_mul(Num(e.exponent), Pow(e.base, e.exponent - 1.0)), db)
    if isinstance(e, Call):
        du = derivative(e.arg, var)
        u = e.arg
        if e.func == "sin":
            return _mul(Call("cos", u), du)
        if e.func == "cos":
            return _mul(Neg(Call("sin", u)), du)
        if e.func == "exp":
            return _mul(Call("exp", u), du)
        if e.func == "log":
            return _div(du, u)
        if e.func == "sqrt":
            return _div(du, _mul(Num(2.0), Call("sqrt", u)))
        if e.func == "abs":
            # u/|u| * u'; undefined at u = 0 (raises there via division)
            return _mul(_div(u, Call("abs", u)), du)
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Profile validation


@dataclass(frozen=True)
class ProfileViolation:
    kind: str  # "below-one" | "not-periodic" | "constant"
    message: str


def validate_profile(
    e: Expr,
    var: str = "x",
    grid: int = 256,
    margin: float = 1e-6,
    tol_periodic: float = 1e-9,
    margin_nonconst: float = 1e-6,
) -> list[ProfileViolation]:
    """Heuristic guard for a profile function: f > 1, 1-periodic, nonconstant.

    Checks on the grid {i/grid}; a quiet result is evidence, not proof.
    Evaluation errors propagate with the offending grid point.
    """
    if grid < 16:
        raise ValueError("grid must be at least 16")
    extra = free_vars(e) - {var}
    if extra:
        raise UnboundVariableError(f"profile uses variables besides {var!r}: {sorted(extra)}")

    def at(t: float) -> float:
        try:
            return eval_value(e, {var: t})
        except EvalError as exc:
            raise type(exc)(f"{exc} while evaluating profile at {var} = {t}") from None

    values = [at(i / grid) for i in range(grid)]
    violations = []
    lo, hi = min(values), max(values)
    if lo <= 1.0 + margin:
        violations.append(ProfileViolation("below-one", f"f <= 1: min f = {lo} on the grid"))
    gap = abs(at(0.0) - at(1.0))
    if gap > tol_periodic:
        violations.append(ProfileViolation("not-periodic", f"|f(0) - f(1)| = {gap} exceeds {tol_periodic}"))
    if hi - lo <= margin_nonconst:
        violations.append(ProfileViolation("constant", f"max f - min f = {hi - lo} on the grid"))
    return violations


# --------------------------------------------------------------------------
# Tape compilation for the numeric core

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POW = 7
OP_SIN = 8
OP_COS = 9
OP_EXP = 10
OP_LOG = 11
OP_SQRT = 12
OP_ABS = 13
OP_OUT = 14

_CALL_OPS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "log": OP_LOG, "sqrt": OP_SQRT, "abs": OP_ABS}
_BIN_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}

MAX_STACK = 128

# evaluation status codes shared by both cores
STATUS_OK = 0
STATUS_DIV_ZERO = 1
STATUS_LOG_DOMAIN = 2
STATUS_SQRT_DOMAIN = 3
STATUS_POW_DOMAIN = 4

STATUS_MESSAGES = {
    STATUS_DIV_ZERO: "division by zero",
    STATUS_LOG_DOMAIN: "log of nonpositive value",
    STATUS_SQRT_DOMAIN: "sqrt of nonpositive value",
    STATUS_POW_DOMAIN: "power outside its domain",
}


@dataclass(frozen=True)
class Program:
    """Flat stack-machine tape for a list of expressions over shared variables."""

    ops: np.ndarray  # int32
    iargs: np.ndarray  # int32
    fargs: np.ndarray  # float64
    n_out: int
    n_var: int
    max_stack: int
    var_names: tuple[str, ...]


def compile_program(exprs: Iterable[Expr], var_names: Iterable[str]) -> Program:
    """Flatten expressions into one tape; output slots follow input order."""
    names = tuple(var_names)
    index = {n: i for i, n in enumerate(names)}
    ops: list[int] = []
    iargs: list[int] = []
    fargs: list[float] = []
    depth = 0
    max_depth = 0

    def emit(op: int, ia: int = 0, fa: float = 0.0, delta: int = 0):
        nonlocal depth, max_depth
        ops.append(op)
        iargs.append(ia)
        fargs.append(fa)
        depth += delta
        max_depth = max(max_depth, depth)

    def rec(e: Expr):
        if isinstance(e, Num):
            emit(OP_CONST, fa=e.value, delta=+1)
        elif isinstance(e, Pi):
            emit(OP_CONST, fa=math.pi, delta=+1)
        elif isinstance(e, Var):
            if e.name not in index:
                raise UnboundVariableError(f"unbound variable {e.name!r}")
            emit(OP_VAR, ia=index[e.name], delta=+1)
        elif isinstance(e, Neg):
            rec(e.arg)
            emit(OP_NEG)
        elif isinstance(e, BinOp):
            rec(e.left)
            rec(e.right)
            emit(_BIN_OPS[e.op], delta=-1)
        elif isinstance(e, Pow):
            rec(e.base)
            emit(OP_POW, fa=e.exponent)
        elif isinstance(e, Call):
            rec(e.arg)
            emit(_CALL_OPS[e.func])
        else:
            raise TypeError(f"not an expression node: {e!r}")

    n_out = 0
    for e in exprs:
        rec(e)
        emit(OP_OUT, ia=n_out, delta=-1)
        n_out += 1
    if max_depth > MAX_STACK:
        raise ExpressionError(f"expression too deep for the core (stack {max_depth} > {MAX_STACK})")
    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        iargs=np.asarray(iargs, dtype=np.int32),
        fargs=np.asarray(fargs, dtype=np.float64),
        n_out=n_out,
        n_var=len(names),
        max_stack=max_depth,
        var_names=names,
    )
