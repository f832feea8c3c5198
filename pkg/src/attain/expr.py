"""Small arithmetic expression language for dynamics and cost terms.

Grammar (whitespace between tokens is ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?
    primary := NUMBER | VARIABLE | FUNC "(" expr ("," expr)* ")" | "(" expr ")"

    VARIABLE := "t" | "tf" | "x" DIGITS | "theta" DIGITS
    FUNC     := exp | log | sin | cos | tanh | abs | sqrt | min | max

``^`` is right associative and binds tighter than unary minus, so ``-x0^2``
is ``-(x0^2)``. ``min`` and ``max`` take two or more arguments; they are not
smooth, which matters when they appear inside a cost that gets differentiated
by finite differences.

Parsed trees are immutable. :func:`evaluate` walks the tree directly;
:func:`compile_vector` turns a list of trees into one Python function for the
integrator's inner loop. Both share the same primitive operations, so they
agree bit for bit.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "ExprSyntaxError",
    "ExprDomainError",
    "MissingBindingError",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "free_variables",
    "to_text",
    "compile_vector",
]

_VAR_RE = re.compile(r"^(t|tf|x\d+|theta\d+)$")

# name -> (min arity, max arity or None)
FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "exp": (1, 1),
    "log": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "tanh": (1, 1),
    "abs": (1, 1),
    "sqrt": (1, 1),
    "min": (2, None),
    "max": (2, None),
}


class ExprSyntaxError(ValueError):
    """Raised for malformed expression text. ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.reason = message


class ExprDomainError(ArithmeticError):
    """Raised when an operation leaves its real domain (log(-1), 1/0, ...)."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (subexpression at offset {offset})")
        self.offset = offset
        self.reason = message


class MissingBindingError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no value bound for variable '{self.name}'"


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]
    pos: int = field(default=0, compare=False)


Expr = Union[Num, Var, Neg, BinOp, Call]


# --------------------------------------------------------------------------
# primitive operations shared by the interpreter and the compiled form


def _div(a: float, b: float, pos: int) -> float:
    if b == 0.0:
        raise ExprDomainError("division by zero", pos)
    return a / b


def _pow(a: float, b: float, pos: int) -> float:
    if a == 0.0 and b < 0.0:
        raise ExprDomainError("zero raised to a negative power", pos)
    if a < 0.0 and not float(b).is_integer():
        raise ExprDomainError("negative base with non-integer exponent", pos)
    try:
        return math.pow(a, b)
    except OverflowError:
        if a < 0.0 and float(b) % 2.0 == 1.0:
            return -math.inf
        return math.inf


def _exp(a: float, pos: int) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def _log(a: float, pos: int) -> float:
    if a <= 0.0:
        raise ExprDomainError("log of non-positive value", pos)
    return math.log(a)


def _sqrt(a: float, pos: int) -> float:
    if a < 0.0:
        raise ExprDomainError("sqrt of negative value", pos)
    return math.sqrt(a)


def _trig(fn: Callable[[float], float]) -> Callable[[float, int], float]:
    def wrapped(a: float, pos: int) -> float:
        try:
            return fn(a)
        except ValueError:
            raise ExprDomainError(f"{fn.__name__} of non-finite value", pos) from None

    return wrapped


def _min(*args: float) -> float:
    return min(args[:-1])


def _max(*args: float) -> float:
    return max(args[:-1])


_PRIMS: dict[str, Callable[..., float]] = {
    "exp": _exp,
    "log": _log,
    "sin": _trig(math.sin),
    "cos": _trig(math.cos),
    "tanh": lambda a, pos: math.tanh(a),
    "abs": lambda a, pos: abs(a),
    "sqrt": _sqrt,
    "min": _min,
    "max": _max,
}


# --------------------------------------------------------------------------
# tokenizer and parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        # byte offsets, so multi-byte characters report correctly
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", self._byte(pos))
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), self._byte(pos)))
            pos = m.end()
        self.end = self._byte(len(text))
        self.i = 0

    def _byte(self, char_pos: int) -> int:
        return len(self.text[:char_pos].encode("utf-8"))

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of input", self.end)
        self.i += 1
        return tok

    def expect(self, value: str) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError(f"expected '{value}' but input ended", self.end)
        if tok[1] != value:
            raise ExprSyntaxError(f"expected '{value}', found '{tok[1]}'", tok[2])
        self.i += 1
        return tok

    def at_op(self, *values: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "op" and tok[1] in values

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 0)
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExprSyntaxError(f"unexpected token '{tok[1]}'", tok[2])
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.at_op("+", "-"):
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at_op("*", "/"):
            _, op, pos = self.take()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self) -> Expr:
        if self.at_op("-"):
            _, _, pos = self.take()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.at_op("^"):
            _, _, pos = self.take()
            return BinOp("^", base, self.unary(), pos)
        return base

    def primary(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value), pos)
        if kind == "ident":
            if self.at_op("("):
                if value not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function '{value}'", pos)
                self.take()
                args = [self.expr()]
                while self.at_op(","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                lo, hi = FUNCTIONS[value]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ExprSyntaxError(
                        f"function '{value}' called with {len(args)} argument(s)", pos
                    )
                return Call(value, tuple(args), pos)
            if value in FUNCTIONS:
                raise ExprSyntaxError(f"function '{value}' used without arguments", pos)
            if not _VAR_RE.match(value):
                raise ExprSyntaxError(f"unknown identifier '{value}'", pos)
            return Var(value, pos)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected token '{value}'", pos)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExprSyntaxError` carrying the byte offset of the problem.
    """
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise MissingBindingError(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.operand, bindings)
    if isinstance(e, BinOp):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return _div(a, b, e.pos)
        return _pow(a, b, e.pos)
    args = [evaluate(a, bindings) for a in e.args]
    return _PRIMS[e.func](*args, e.pos)


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    out: frozenset[str] = frozenset()
    for a in e.args:
        out |= free_variables(a)
    return out


def to_text(e: Expr) -> str:
    """Render ``e`` as fully parenthesised text that parses back to ``e``."""
    if isinstance(e, Num):
        return repr(e.value) if e.value >= 0 else f"(-{repr(-e.value)})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)}{e.op}{to_text(e.right)})"
    return f"{e.func}({', '.join(to_text(a) for a in e.args)})"


# --------------------------------------------------------------------------
# compilation to Python for the integrator


def _py(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        if e.name.startswith("theta"):
            return f"theta[{e.name[5:]}]"
        if e.name.startswith("x"):
            return f"x[{e.name[1:]}]"
        return e.name
    if isinstance(e, Neg):
        return f"(-{_py(e.operand)})"
    if isinstance(e, BinOp):
        a, b = _py(e.left), _py(e.right)
        if e.op == "/":
            return f"_div({a}, {b}, {e.pos})"
        if e.op == "^":
            return f"_pow({a}, {b}, {e.pos})"
        return f"({a} {e.op} {b})"
    args = ", ".join(_py(a) for a in e.args)
    return f"_{e.func}({args}, {e.pos})"


def compile_vector(exprs: Sequence[Expr]) -> Callable[[float, float, Sequence[float], Sequence[float]], tuple]:
    """Compile expressions into ``f(t, tf, x, theta) -> tuple`` of floats.

    Variable indices are not range checked here; callers validate them.
    """
    body = ", ".join(_py(e) for e in exprs)
    src = f"def _f(t, tf, x, theta):\n    return ({body},)\n"
    namespace: dict = {"_div": _div, "_pow": _pow}
    namespace.update({f"_{k}": v for k, v in _PRIMS.items()})
    exec(compile(src, "<attain-expr>", "exec"), namespace)
    return namespace["_f"]
