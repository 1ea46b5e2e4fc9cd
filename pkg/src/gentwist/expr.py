"""Arithmetic expressions over chart coordinates, evaluated to 2-jets.

Grammar, loosest binding first::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := number | coord | func '(' sum ')' | '(' sum ')'

So ``-x^2`` is ``-(x^2)`` and ``2^-1`` is ``2^(-1)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("atan", "cos", "exp", "log", "sin", "sqrt")


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(sorted(set(expected)))
        suffix = f"; expected one of: {' '.join(self.expected)}" if self.expected else ""
        super().__init__(f"{message} at line {line}, column {col}{suffix}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, line: int, col: int):
        self.name = name
        self.line = line
        self.col = col
        super().__init__(f"unknown identifier {name!r} at line {line}, column {col}")


class DomainError(ExprError):
    def __init__(self, message: str, subexpr: str):
        self.subexpr = subexpr
        super().__init__(f"{message} in {subexpr!r}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Neg:
    operand: Expr


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call:
    func: str
    arg: Expr


Expr = Num | Var | Neg | BinOp | Call

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)

_ATOM_START = ("number", "identifier", "(")
_UNARY_START = ("-", "+") + _ATOM_START


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, col, _UNARY_START)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "num":
            tokens.append(_Token("number", m.group(), line, col))
        elif kind == "id":
            tokens.append(_Token("identifier", m.group(), line, col))
        elif kind == "op":
            tokens.append(_Token(m.group(), m.group(), line, col))
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, coords):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.coords = {name: i for i, name in enumerate(coords)}

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected):
        tok = self.peek()
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {found}", tok.line, tok.col, expected)

    def parse(self) -> Expr:
        node = self.sum()
        if self.peek().kind != "end":
            self.fail(("+", "-", "*", "/", "^", "end of input"))
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            node = BinOp(op, node, self.product())
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.peek().kind in ("*", "/"):
            op = self.take().kind
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind = self.peek().kind
        if kind == "-":
            self.take()
            return Neg(self.unary())
        if kind == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "(":
            self.take()
            node = self.sum()
            self.expect(")")
            return node
        if tok.kind == "identifier":
            self.take()
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in self.coords:
                return Var(tok.text, self.coords[tok.text])
            raise UnknownIdentifierError(tok.text, tok.line, tok.col)
        self.fail(_UNARY_START)

    def expect(self, kind: str):
        if self.peek().kind != kind:
            self.fail((kind, "+", "-", "*", "/", "^") if kind == ")" else (kind,))
        self.take()


def parse(text: str, coords) -> Expr:
    """Parse ``text`` with the given coordinate names in chart order."""
    return _Parser(text, tuple(coords)).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def to_text(e: Expr) -> str:
    """Print with the fewest parentheses that reparse to the same tree."""
    if isinstance(e, Num):
        text = repr(float(e.value))
        return f"({text})" if e.value < 0 else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        return f"-({inner})" if _prec(e.operand) < 3 else f"-{inner}"
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= 4:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


class Jet2:
    """Value, gradient and Hessian of a scalar at a point."""

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val: float, grad: np.ndarray, hess: np.ndarray):
        self.val = float(val)
        self.grad = grad
        self.hess = 0.5 * (hess + hess.T)

    @classmethod
    def constant(cls, value: float, n: int) -> Jet2:
        return cls(value, np.zeros(n), np.zeros((n, n)))

    @classmethod
    def variable(cls, point, index: int) -> Jet2:
        n = len(point)
        grad = np.zeros(n)
        grad[index] = 1.0
        return cls(point[index], grad, np.zeros((n, n)))

    def _lift(self, other):
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(other, self.grad.shape[0])

    def __add__(self, other):
        o = self._lift(other)
        return Jet2(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Jet2(self.val - o.val, self.grad - o.grad, self.hess - o.hess)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Jet2(-self.val, -self.grad, -self.hess)

    def __mul__(self, other):
        o = self._lift(other)
        cross = np.outer(self.grad, o.grad)
        return Jet2(
            self.val * o.val,
            self.val * o.grad + o.val * self.grad,
            self.val * o.hess + o.val * self.hess + cross + cross.T,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def chain(self, f0: float, f1: float, f2: float) -> Jet2:
        """Compose with a scalar function given its value and two derivatives."""
        return Jet2(f0, f1 * self.grad, f1 * self.hess + f2 * np.outer(self.grad, self.grad))

    def reciprocal(self) -> Jet2:
        t = self.val
        if t == 0.0:
            raise ZeroDivisionError
        return self.chain(1.0 / t, -1.0 / t**2, 2.0 / t**3)

    def power_const(self, c: float) -> Jet2:
        t = self.val
        f0 = t**c
        f1 = c * t ** (c - 1) if c != 0 else 0.0
        f2 = c * (c - 1) * t ** (c - 2) if c not in (0.0, 1.0) else 0.0
        return self.chain(f0, f1, f2)

    def __pow__(self, other):
        o = self._lift(other)
        if not o.grad.any() and not o.hess.any():
            return self.power_const(o.val)
        return (o * self.log()).exp()

    def sin(self):
        t = self.val
        return self.chain(math.sin(t), math.cos(t), -math.sin(t))

    def cos(self):
        t = self.val
        return self.chain(math.cos(t), -math.sin(t), -math.cos(t))

    def exp(self):
        e = math.exp(self.val)
        return self.chain(e, e, e)

    def log(self):
        t = self.val
        return self.chain(math.log(t), 1.0 / t, -1.0 / t**2)

    def sqrt(self):
        r = math.sqrt(self.val)
        return self.chain(r, 0.5 / r, -0.25 / (r * self.val))

    def atan(self):
        t = self.val
        d = 1.0 + t * t
        return self.chain(math.atan(t), 1.0 / d, -2.0 * t / d**2)

    def __repr__(self):
        return f"Jet2(val={self.val!r}, grad={self.grad!r})"


def _check_domain(e: Expr, func: str, t: float):
    if func == "log" and t <= 0.0:
        raise DomainError("log of non-positive value", to_text(e))
    if func == "sqrt" and t <= 0.0:
        # the derivative of sqrt is unbounded at 0, so 0 is excluded as well
        raise DomainError("sqrt of non-positive value", to_text(e))


def _power_domain(e: BinOp, base: float, exponent: float, constant: bool):
    if constant:
        if base == 0.0 and exponent < 2.0 and exponent not in (0.0, 1.0):
            raise DomainError("power of zero is not twice differentiable", to_text(e))
        if base < 0.0 and not float(exponent).is_integer():
            raise DomainError("fractional power of negative value", to_text(e))
    elif base <= 0.0:
        raise DomainError("variable power of non-positive value", to_text(e))


def _jet(e: Expr, point, n: int) -> Jet2:
    if isinstance(e, Num):
        return Jet2.constant(e.value, n)
    if isinstance(e, Var):
        return Jet2.variable(point, e.index)
    if isinstance(e, Neg):
        return -_jet(e.operand, point, n)
    if isinstance(e, Call):
        arg = _jet(e.arg, point, n)
        _check_domain(e, e.func, arg.val)
        return getattr(arg, e.func)()
    a = _jet(e.left, point, n)
    b = _jet(e.right, point, n)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if b.val == 0.0:
            raise DomainError("division by zero", to_text(e))
        return a / b
    constant = not b.grad.any() and not b.hess.any()
    _power_domain(e, a.val, b.val, constant)
    try:
        return a**b
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise DomainError(str(exc), to_text(e)) from None


def eval_jet(e: Expr, point) -> Jet2:
    point = np.asarray(point, float)
    return _jet(e, point, point.shape[0])


def evaluate(e: Expr, point) -> float:
    """Plain value, no derivatives."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(point[e.index])
    if isinstance(e, Neg):
        return -evaluate(e.operand, point)
    if isinstance(e, Call):
        t = evaluate(e.arg, point)
        _check_domain(e, e.func, t)
        return getattr(math, e.func)(t)
    a = evaluate(e.left, point)
    b = evaluate(e.right, point)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if b == 0.0:
            raise DomainError("division by zero", to_text(e))
        return a / b
    if a < 0.0 and not float(b).is_integer():
        raise DomainError("fractional power of negative value", to_text(e))
    return a**b


def is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0.0
