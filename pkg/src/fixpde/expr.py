"""Small expression language for right-hand sides and initial/boundary data.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right-associative
    atom   := NUMBER | NAME | NAME "(" args ")" | "(" expr ")"

Names are slot variables (``u1``, ``u2_x``, ``u1_t`` ...), the coordinates
``x y z t`` and the constant ``pi``.  Functions: sin cos exp tanh abs sqrt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
CONSTANTS = {"pi": np.pi}
COORDINATES = ("x", "y", "z", "t")
SLOT_RE = re.compile(r"u[1-9][0-9]*(_[txyz])?\Z")


class ExpressionError(ValueError):
    """Syntax or binding error, with the byte offset of the offending token."""

    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class DomainFault(ArithmeticError):
    """Evaluation hit sqrt of a negative, division by zero or an overflow."""

    def __init__(self, mask, message="domain fault during evaluation"):
        self.mask = np.asarray(mask)
        self.count = int(self.mask.sum())
        super().__init__(f"{message}: {self.count} flagged value(s)")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))")


def _tokenize(text: str):
    pos = 0
    tokens = []
    while True:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:]
            if rest.strip() == "":
                break
            off = pos + len(rest) - len(rest.lstrip())
            raise ExpressionError(f"unexpected character {text[off]!r}", off)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def is_known_name(name: str) -> bool:
    return name in COORDINATES or name in CONSTANTS or SLOT_RE.match(name) is not None


class _Parser:
    def __init__(self, text, allowed):
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, off = self.peek()
        if val != value or kind == "end":
            raise ExpressionError(f"unexpected {'end of input' if kind == 'end' else repr(val)}",
                                  off, {value})
        self.take()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {val!r}", off, {"+", "-", "*", "/", "^", "end"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {val!r}", off, FUNCTIONS)
                self.take()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ExpressionError(
                        f"function {val!r} takes 1 argument, got {len(args)}", off)
                return Call(val, args[0])
            if val in FUNCTIONS:
                raise ExpressionError(f"function {val!r} needs an argument list", off, {"("})
            if not is_known_name(val) or (self.allowed is not None and val not in self.allowed
                                          and val not in CONSTANTS):
                raise ExpressionError(f"unknown identifier {val!r}", off)
            return Var(val)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {what}", off, {"number", "name", "(", "-"})


def parse_expression(text: str, allowed=None):
    """Parse ``text`` into an AST.

    ``allowed`` optionally restricts the variable names (constants are always
    allowed); anything else is an unknown-identifier error.
    """
    return _Parser(text, None if allowed is None else set(allowed)).parse()


def variables(node) -> set[str]:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.arg)
    if isinstance(node, Call):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


def to_text(node) -> str:
    """Print an AST so that parsing the result gives back the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"


def _eval(node, env, faults):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        try:
            return env[node.name]
        except KeyError:
            raise NameError(f"unbound name {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env, faults)
    if isinstance(node, Call):
        a = _eval(node.arg, env, faults)
        if node.func == "sqrt":
            faults.append(np.asarray(a) < 0)
            a = np.where(np.asarray(a) < 0, 0.0, a)
        return FUNCTIONS[node.func](a)
    a = _eval(node.left, env, faults)
    b = _eval(node.right, env, faults)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        zero = np.asarray(b) == 0
        faults.append(zero)
        return a / np.where(zero, 1.0, b)
    # "^": negative base with a non-integer exponent has no real value
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    bad = (a_arr < 0) & (b_arr != np.round(b_arr))
    bad |= (a_arr == 0) & (b_arr < 0)
    faults.append(bad)
    safe_a = np.where(bad, 1.0, a_arr)
    return np.power(safe_a, b_arr)


def eval_expression(node, bindings: Mapping[str, object]):
    """Evaluate ``node`` with numpy broadcasting over the bound arrays.

    Raises :class:`DomainFault` (carrying the mask of faulty values) instead
    of returning NaN/Inf, and ``NameError`` for unbound names.
    """
    faults: list = []
    with np.errstate(all="ignore"):
        value = _eval(node, bindings, faults)
        value = np.asarray(value, dtype=float)
        bad = ~np.isfinite(value)
    for f in faults:
        bad = bad | np.asarray(f)
    if np.any(bad):
        raise DomainFault(np.broadcast_to(bad, np.broadcast_shapes(bad.shape, value.shape)))
    return value if value.ndim else float(value)
