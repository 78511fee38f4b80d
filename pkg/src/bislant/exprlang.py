"""Closed-form scalar expressions with forward-mode derivatives.

A tiny Pratt parser turns sources such as ``"u1*cos(u2)"`` into an immutable
AST.  Evaluation runs on dual numbers, so every first partial derivative is
exact to machine precision.

Precedence, loosest to tightest: ``+ -``, ``* /``, unary ``-``, ``^``.
``^`` is right-associative, the others left-associative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "ExprDomainError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expression",
    "Dual",
    "parse",
    "serialize",
    "evaluate",
    "eval_derivative",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
RESERVED = ("pi",)


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name} at byte offset {offset}")
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    pass


class ExprDomainError(ExprError):
    """Raised when an argument leaves a function's domain.

    ``subexpression`` holds the serialized offending node.
    """

    def __init__(self, message: str, subexpression: str):
        super().__init__(f"{message} in {subexpression}")
        self.subexpression = subexpression


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]


# --------------------------------------------------------------------------
# Tokenizer and parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)

_INFIX_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BP = 30


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _byte_offset(source: str, idx: int) -> int:
    return len(source[:idx].encode("utf-8"))


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {source[pos]!r}", _byte_offset(source, pos)
            )
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), _byte_offset(source, pos)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(source, len(source))))
    return toks


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.toks = _tokenize(source)
        self.i = 0
        self.variables = set(variables)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", tok.offset)
        return tok

    def parse(self) -> Node:
        node = self.expr(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.offset)
        return node

    def expr(self, rbp: int) -> Node:
        left = self.prefix()
        while True:
            tok = self.peek()
            lbp = _INFIX_BP.get(tok.text, 0) if tok.kind == "op" else 0
            if lbp <= rbp:
                return left
            self.next()
            # right associativity for ^: parse the rhs at a slightly lower power
            right = self.expr(lbp - 1 if tok.text == "^" else lbp)
            left = BinOp(tok.text, left, right)

    def prefix(self) -> Node:
        tok = self.next()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.text == "-":
            return Neg(self.expr(_UNARY_BP))
        if tok.text == "(":
            node = self.expr(0)
            self.expect(")")
            return node
        if tok.kind == "ident":
            return self.identifier(tok)
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {what}", tok.offset)

    def identifier(self, tok: _Tok) -> Node:
        name = tok.text
        if name in FUNCTIONS:
            if self.peek().text != "(":
                raise ArityError(f"function {name} expects 1 argument, got 0")
            self.next()
            if self.peek().text == ")":
                raise ArityError(f"function {name} expects 1 argument, got 0")
            args = [self.expr(0)]
            while self.peek().text == ",":
                self.next()
                args.append(self.expr(0))
            self.expect(")")
            if len(args) != 1:
                raise ArityError(f"function {name} expects 1 argument, got {len(args)}")
            return Call(name, args[0])
        if name == "pi":
            return Var("pi")
        if name not in self.variables:
            raise UnknownIdentifierError(name, tok.offset)
        if self.peek().text == "(":
            raise ExprSyntaxError(f"{name} is not a function", self.peek().offset)
        return Var(name)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def serialize(node: Node) -> str:
    """Fully parenthesized source text; reparses to the same AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{serialize(node.operand)})"
    if isinstance(node, BinOp):
        return f"({serialize(node.left)} {node.op} {serialize(node.right)})"
    return f"{node.func}({serialize(node.arg)})"


# --------------------------------------------------------------------------
# Dual numbers
# --------------------------------------------------------------------------


class Dual:
    """First-order dual number ``val + der*eps``."""

    __slots__ = ("val", "der")

    def __init__(self, val: float, der: float = 0.0):
        self.val = val
        self.der = der

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.der!r})"


def _is_integer(x: float) -> bool:
    return math.isfinite(x) and x == math.floor(x)


def _pow(a: Dual, b: Dual, node: Node) -> Dual:
    x, y = a.val, b.val
    if b.der == 0.0 and _is_integer(y):
        k = int(y)
        if x == 0.0 and k < 0:
            raise ExprDomainError("zero raised to a negative power", serialize(node))
        val = x**k
        der = k * x ** (k - 1) * a.der if k != 0 else 0.0
        return Dual(val, der)
    if x < 0.0:
        raise ExprDomainError("negative base with non-integer exponent", serialize(node))
    if x == 0.0:
        if y <= 0.0:
            raise ExprDomainError("zero raised to a non-positive power", serialize(node))
        if b.der != 0.0 or (a.der != 0.0 and y < 1.0):
            raise ExprDomainError("power not differentiable at zero base", serialize(node))
        return Dual(0.0, y * 0.0 ** (y - 1.0) * a.der if a.der else 0.0)
    val = x**y
    return Dual(val, val * (b.der * math.log(x) + y * a.der / x))


def _call(func: str, a: Dual, node: Node) -> Dual:
    x, dx = a.val, a.der
    if func == "sin":
        return Dual(math.sin(x), math.cos(x) * dx)
    if func == "cos":
        return Dual(math.cos(x), -math.sin(x) * dx)
    if func == "tan":
        c = math.cos(x)
        if c == 0.0:
            raise ExprDomainError("tan pole", serialize(node))
        return Dual(math.tan(x), dx / (c * c))
    if func == "exp":
        try:
            e = math.exp(x)
        except OverflowError:
            raise ExprDomainError("exp overflow", serialize(node)) from None
        return Dual(e, e * dx)
    if func == "log":
        if x <= 0.0:
            raise ExprDomainError("log of non-positive value", serialize(node))
        return Dual(math.log(x), dx / x)
    if func == "sqrt":
        if x < 0.0:
            raise ExprDomainError("sqrt of negative value", serialize(node))
        s = math.sqrt(x)
        if s == 0.0:
            if dx != 0.0:
                raise ExprDomainError("sqrt not differentiable at 0", serialize(node))
            return Dual(0.0, 0.0)
        return Dual(s, 0.5 * dx / s)
    # abs
    if x == 0.0 and dx != 0.0:
        raise ExprDomainError("abs not differentiable at 0", serialize(node))
    return Dual(abs(x), math.copysign(1.0, x) * dx if x != 0.0 else 0.0)


def _eval(node: Node, env: Mapping[str, Dual]) -> Dual:
    if isinstance(node, Num):
        return Dual(node.value)
    if isinstance(node, Var):
        if node.name == "pi" and "pi" not in env:
            return Dual(math.pi)
        return env[node.name]
    if isinstance(node, Neg):
        a = _eval(node.operand, env)
        return Dual(-a.val, -a.der)
    if isinstance(node, Call):
        return _call(node.func, _eval(node.arg, env), node)
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    op = node.op
    if op == "+":
        return Dual(a.val + b.val, a.der + b.der)
    if op == "-":
        return Dual(a.val - b.val, a.der - b.der)
    if op == "*":
        return Dual(a.val * b.val, a.der * b.val + a.val * b.der)
    if op == "/":
        if b.val == 0.0:
            raise ExprDomainError("division by zero", serialize(node))
        q = a.val / b.val
        return Dual(q, (a.der - q * b.der) / b.val)
    return _pow(a, b, node)


# --------------------------------------------------------------------------
# Public surface
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Expression:
    """Parsed expression together with its declared variable list."""

    root: Node
    variables: tuple[str, ...]

    def __str__(self) -> str:
        return serialize(self.root)

    def _env(self, bindings: Mapping[str, float], var: str | None) -> dict[str, Dual]:
        missing = [v for v in self.variables if v not in bindings]
        if missing:
            raise ExprError(f"missing bindings for {', '.join(missing)}")
        return {
            v: Dual(float(bindings[v]), 1.0 if v == var else 0.0) for v in self.variables
        }

    def eval(self, bindings: Mapping[str, float]) -> float:
        return _eval(self.root, self._env(bindings, None)).val

    def derivative(self, bindings: Mapping[str, float], var: str) -> float:
        if var not in self.variables:
            raise UnknownIdentifierError(var, 0)
        return _eval(self.root, self._env(bindings, var)).der

    def value_and_gradient(
        self, bindings: Mapping[str, float], wrt: Sequence[str] | None = None
    ) -> tuple[float, list[float]]:
        """Value plus partials w.r.t. ``wrt`` (default: all declared variables)."""
        wrt = self.variables if wrt is None else wrt
        if not wrt:
            return self.eval(bindings), []
        grad = []
        val = 0.0
        for v in wrt:
            d = _eval(self.root, self._env(bindings, v))
            val = d.val
            grad.append(d.der)
        return val, grad

    def uses(self) -> set[str]:
        """Names actually referenced by the AST."""
        out: set[str] = set()
        stack: list[Node] = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var) and node.name != "pi":
                out.add(node.name)
            elif isinstance(node, Neg):
                stack.append(node.operand)
            elif isinstance(node, BinOp):
                stack.extend((node.left, node.right))
            elif isinstance(node, Call):
                stack.append(node.arg)
        return out


def parse(source: str, variables: Sequence[str]) -> Expression:
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    if len(set(variables)) != len(variables):
        raise ExprError("variable names must be distinct")
    for v in variables:
        if v in RESERVED or v in FUNCTIONS:
            raise ExprError(f"{v} is reserved and cannot be a variable")
    return Expression(_Parser(source, variables).parse(), tuple(variables))


def evaluate(expr: Expression, bindings: Mapping[str, float]) -> float:
    return expr.eval(bindings)


def eval_derivative(expr: Expression, bindings: Mapping[str, float], var: str) -> float:
    return expr.derivative(bindings, var)
