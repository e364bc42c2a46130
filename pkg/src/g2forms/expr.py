"""A tiny expression language for coefficient functions.

Grammar: real literals, the variables x1..x8 and t, the constants pi and e,
the functions sqrt exp log sin cos, binary + - * / ^ and unary minus.
Precedence from tightest: ^, unary -, * /, + -.  ``^`` groups to the right,
the other binaries to the left.  Errors carry byte offsets into the UTF-8
source.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import DomainError, ParseError

VARIABLES = tuple(f"x{i}" for i in range(1, 9)) + ("t",)
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]

# binding powers: (left, right); ^ is right-associative
_BINARY = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (41, 40)}
_UNARY_BP = 30

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int        # byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            lead = len(text[pos:]) - len(text[pos:].lstrip())
            at = byte + len(text[pos:pos + lead].encode())
            raise ParseError(f"unexpected character {text[pos + lead]!r}", at)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), byte + len(text[pos:start].encode())))
        byte += len(text[pos:m.end()].encode())
        pos = m.end()
    toks.append(_Tok("end", "", len(text.encode())))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.offset)

    def expr(self, min_bp: int = 0) -> Expr:
        left = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _BINARY:
                break
            lbp, rbp = _BINARY[tok.text]
            if lbp < min_bp:
                break
            self.next()
            # the exponent may carry its own sign: 2^-1
            right = self.expr(rbp) if tok.text != "^" else self.exponent()
            left = BinOp(tok.text, left, right)
        return left

    def exponent(self) -> Expr:
        if self.peek().text == "-":
            self.next()
            return Neg(self.exponent())
        return self.expr(_BINARY["^"][1])

    def prefix(self) -> Expr:
        tok = self.next()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.text == "-":
            return Neg(self.expr(_UNARY_BP))
        if tok.text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in CONSTANTS:
                return Const(tok.text)
            if tok.text in VARIABLES:
                return Var(tok.text)
            raise ParseError(f"unknown identifier {tok.text!r}", tok.offset)
        raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.offset)


def parse(text: str) -> Expr:
    p = _Parser(text)
    out = p.expr()
    tok = p.peek()
    if tok.kind != "end":
        raise ParseError(f"unexpected {tok.text!r}", tok.offset)
    return out


def to_text(e: Expr) -> str:
    """Print with the parentheses the grammar needs; parse(to_text(e)) == e."""
    return _show(e, 0)


def _show(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        s = repr(e.value)
        if s in ("inf", "nan"):
            raise ValueError("non-finite literal cannot be printed")
        return s
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_show(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _show(e.operand, _UNARY_BP)
        return f"({s})" if ctx > _UNARY_BP else s
    lbp, rbp = _BINARY[e.op]
    if e.op == "^":
        # a negated exponent prints bare: 2^-1
        right = ("-" + _show(e.right.operand, _UNARY_BP + 1) if isinstance(e.right, Neg)
                 else _show(e.right, rbp))
        s = f"{_show(e.left, lbp + 1)}^{right}"
    else:
        s = f"{_show(e.left, lbp)} {e.op} {_show(e.right, rbp)}"
    return f"({s})" if lbp < ctx else s


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, Call):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    return set()


def evaluate(e: Expr, env: Mapping[str, np.ndarray | float]):
    """Vectorised evaluation; raises DomainError instead of producing inf or nan."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Var):
        if e.name not in env:
            raise DomainError(f"variable {e.name} is not bound here")
        return np.asarray(env[e.name], dtype=float)
    if isinstance(e, Neg):
        return -evaluate(e.operand, env)
    if isinstance(e, Call):
        a = np.asarray(evaluate(e.arg, env), dtype=float)
        if e.func == "sqrt":
            _require(a >= 0, "sqrt of a negative number")
            return np.sqrt(a)
        if e.func == "log":
            _require(a > 0, "log of a nonpositive number")
            return np.log(a)
        with np.errstate(over="raise"):
            try:
                return getattr(np, e.func)(a)
            except FloatingPointError:
                raise DomainError(f"{e.func} overflowed") from None
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        _require(np.asarray(b) != 0, "division by zero")
        return a / b
    with np.errstate(all="ignore"):
        out = np.power(np.asarray(a, dtype=float), b)
    _require(np.isfinite(out), "power outside its domain")
    return out


def _require(ok, msg: str) -> None:
    if not np.all(ok):
        raise DomainError(msg)


def bind(points: np.ndarray) -> dict[str, np.ndarray]:
    """Variables x1.. for the columns of ``points``; t names the last column."""
    points = np.asarray(points, dtype=float)
    env = {f"x{i + 1}": points[..., i] for i in range(points.shape[-1])}
    env["t"] = points[..., -1]
    return env


def compile_expr(text: str, dim: int):
    """Function of points (..., dim) -> (...,), checked against the dimension."""
    e = parse(text)
    allowed = {f"x{i}" for i in range(1, dim + 1)} | {"t"}
    extra = variables(e) - allowed
    if extra:
        raise ParseError(f"variables {sorted(extra)} not available in dimension {dim}", 0)

    def f(points):
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(evaluate(e, bind(points)), points.shape[:-1]).astype(float)

    return f
