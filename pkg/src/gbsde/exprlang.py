"""Small expression language for payoffs and drivers.

Grammar: numbers; variables t, x, y, z; binary + - * / ^; unary -;
functions abs, exp, tanh, min, max, pos, neg; parentheses. Precedence
^ > unary - > * / > + -, with ^ right-associative. Parsing produces an
AST with source spans; printing produces a source string that reparses to
an identical AST.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .core import GBSDEError

__all__ = [
    "ExpressionError",
    "Expression",
    "Num",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "parse_expression",
    "evaluate",
    "to_source",
    "collect_variables",
    "require_variables",
    "is_zero_literal",
]

VARIABLES = ("t", "x", "y", "z")
FUNCTIONS = {"abs": 1, "exp": 1, "tanh": 1, "min": 2, "max": 2, "pos": 1, "neg": 1}


class ExpressionError(GBSDEError):
    """Parse or evaluation failure, carrying a 1-based source column."""

    def __init__(self, message: str, source: str, position: int):
        self.column = position + 1
        self.source = source
        super().__init__(f"{message} (column {self.column})")


@dataclass(frozen=True, slots=True)
class Num:
    value: float
    span: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass(frozen=True, slots=True)
class Var:
    name: str
    span: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass(frozen=True, slots=True)
class Unary:
    op: str
    operand: "Node"
    span: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"
    span: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass(frozen=True, slots=True)
class Call:
    name: str
    args: tuple["Node", ...]
    span: tuple[int, int] = field(compare=False, default=(0, 0))


Node = Num | Var | Unary | Binary | Call


@dataclass(frozen=True, slots=True)
class Expression:
    """Parsed expression: structural equality compares the AST only."""

    root: Node
    source: str = field(compare=False, default="")


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # num, ident, op, lparen, rparen, comma, end
    text: str
    pos: int


_OPS = set("+-*/^")


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise ExpressionError(f"malformed number {text!r}", source, i) from None
            tokens.append(_Token("num", text, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("ident", source[i:j], i))
            i = j
            continue
        if c in _OPS:
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        if c == "(":
            tokens.append(_Token("lparen", c, i))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token("rparen", c, i))
            i += 1
            continue
        if c == ",":
            tokens.append(_Token("comma", c, i))
            i += 1
            continue
        raise ExpressionError(f"unexpected character {c!r}", source, i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _lex(source)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str) -> None:
        tok = self.cur
        got = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExpressionError(f"expected {expected}, got {got}", self.source, tok.pos)

    def parse(self) -> Node:
        node = self.expr()
        if self.cur.kind != "end":
            self.fail("operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.advance().text
            right = self.term()
            node = Binary(op, node, right, (node.span[0], right.span[1]))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.advance().text
            right = self.unary()
            node = Binary(op, node, right, (node.span[0], right.span[1]))
        return node

    def unary(self) -> Node:
        if self.cur.kind == "op" and self.cur.text == "-":
            tok = self.advance()
            operand = self.unary()
            return Unary("-", operand, (tok.pos, operand.span[1]))
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.cur.kind == "op" and self.cur.text == "^":
            self.advance()
            # right-associative; the exponent admits a leading unary minus
            exponent = self.unary()
            return Binary("^", base, exponent, (base.span[0], exponent.span[1]))
        return base

    def atom(self) -> Node:
        tok = self.cur
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text), (tok.pos, tok.pos + len(tok.text)))
        if tok.kind == "ident":
            self.advance()
            if tok.text in FUNCTIONS:
                if self.cur.kind != "lparen":
                    self.fail("'(' after function name")
                self.advance()
                args = [self.expr()]
                while self.cur.kind == "comma":
                    self.advance()
                    args.append(self.expr())
                if self.cur.kind != "rparen":
                    self.fail("')' or ','")
                close = self.advance()
                arity = FUNCTIONS[tok.text]
                if len(args) != arity:
                    raise ExpressionError(
                        f"{tok.text} takes {arity} argument(s), got {len(args)}",
                        self.source,
                        tok.pos,
                    )
                return Call(tok.text, tuple(args), (tok.pos, close.pos + 1))
            if tok.text in VARIABLES:
                return Var(tok.text, (tok.pos, tok.pos + len(tok.text)))
            raise ExpressionError(f"unknown identifier {tok.text!r}", self.source, tok.pos)
        if tok.kind == "lparen":
            self.advance()
            node = self.expr()
            if self.cur.kind != "rparen":
                self.fail("')'")
            self.advance()
            return node
        self.fail("number, variable, function, or '('")
        raise AssertionError("unreachable")


def parse_expression(source: str) -> Expression:
    """Parse source text; raises ExpressionError with a source column."""
    return Expression(_Parser(source).parse(), source)


def _walk(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, Unary):
        yield from _walk(node.operand)
    elif isinstance(node, Binary):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _walk(a)


def collect_variables(expr: Expression | Node) -> set[str]:
    root = expr.root if isinstance(expr, Expression) else expr
    return {n.name for n in _walk(root) if isinstance(n, Var)}


def require_variables(expr: Expression | Node, allowed: set[str]) -> None:
    root = expr.root if isinstance(expr, Expression) else expr
    source = expr.source if isinstance(expr, Expression) else ""
    for n in _walk(root):
        if isinstance(n, Var) and n.name not in allowed:
            raise ExpressionError(
                f"variable {n.name!r} not allowed here (expected one of "
                f"{sorted(allowed)})",
                source,
                n.span[0],
            )


def is_zero_literal(source: str) -> bool:
    """True when the source is a plain zero constant."""
    try:
        root = parse_expression(source).root
    except ExpressionError:
        return False
    return isinstance(root, Num) and root.value == 0.0


_UNARY_FNS = {
    "abs": np.abs,
    "exp": np.exp,
    "tanh": np.tanh,
    "pos": lambda a: np.maximum(a, 0.0),
    "neg": lambda a: np.maximum(-np.asarray(a), 0.0),
}


def evaluate(expr: Expression | Node, env: Mapping[str, object]):
    """Evaluate against variable bindings (scalars or numpy arrays)."""
    root = expr.root if isinstance(expr, Expression) else expr
    source = expr.source if isinstance(expr, Expression) else ""

    def ev(node: Node):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            if node.name not in env:
                raise ExpressionError(
                    f"variable {node.name!r} has no value", source, node.span[0]
                )
            return env[node.name]
        if isinstance(node, Unary):
            return -ev(node.operand)
        if isinstance(node, Binary):
            left = ev(node.left)
            right = ev(node.right)
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            if node.op == "/":
                if np.any(np.asarray(right) == 0.0):
                    raise ExpressionError(
                        "division by zero", source, node.right.span[0]
                    )
                return left / right
            if node.op == "^":
                out = np.power(left, right)
                if np.any(np.isnan(np.asarray(out))):
                    raise ExpressionError(
                        "invalid power (negative base with fractional exponent)",
                        source,
                        node.span[0],
                    )
                return out
            raise AssertionError(f"unknown operator {node.op}")
        if isinstance(node, Call):
            args = [ev(a) for a in node.args]
            if node.name == "min":
                return np.minimum(args[0], args[1])
            if node.name == "max":
                return np.maximum(args[0], args[1])
            return _UNARY_FNS[node.name](args[0])
        raise AssertionError(f"unknown node {node!r}")

    return ev(root)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "unary": 3, "^": 4, "atom": 5}


def _prec_of(node: Node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["unary"]
    return _PREC["atom"]


def to_source(expr: Expression | Node) -> str:
    """Print an expression; reparsing the result gives an identical AST."""
    root = expr.root if isinstance(expr, Expression) else expr

    def wrap(child: Node, need: int) -> str:
        s = pr(child)
        return f"({s})" if _prec_of(child) < need else s

    def pr(node: Node) -> str:
        if isinstance(node, Num):
            return repr(node.value)
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Unary):
            return "-" + wrap(node.operand, _PREC["unary"])
        if isinstance(node, Binary):
            p = _PREC[node.op]
            if node.op == "^":
                # right-assoc: parenthesize a left child at ^ or below the
                # unary level; the exponent slot natively admits unary -
                left = wrap(node.left, p + 1)
                right = wrap(node.right, _PREC["unary"])
                return f"{left}^{right}"
            left = wrap(node.left, p)
            right = wrap(node.right, p + 1)
            return f"{left}{node.op}{right}"
        if isinstance(node, Call):
            return f"{node.name}({','.join(pr(a) for a in node.args)})"
        raise AssertionError(f"unknown node {node!r}")

    return pr(root)
