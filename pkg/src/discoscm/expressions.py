"""The structural-equation expression language.

A deliberately small total language over exact rationals:

    expr    := 'if' expr 'then' expr 'else' expr | cmp
    cmp     := sum (('=='|'!='|'<='|'<'|'>='|'>') sum)?
    sum     := term (('+'|'-') term)*
    term    := unary ('*' unary)*
    unary   := '-' unary | atom
    atom    := NUM | NAME | 'ind' '(' expr ')' | 'ingroup' '(' NAME ')'
             | 'feat' '(' NAME ')' | '(' expr ')'
    NUM     := digits ('/' digits)?      # nonnegative; negate with unary minus

`NAME` refers to a parent variable or a noise. Comparisons and `ingroup`
produce booleans; `ind` maps a boolean to 0/1; `if` requires a boolean
condition and numeric branches. There is no division operator: `1/8` is a
rational literal (no whitespace around the slash).

Expressions are statically typed (numeric vs boolean) so that evaluation
is total over any assignment of numeric values to names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Mapping

from .errors import ExpressionError, ParseError
from .rationals import Value, as_value, format_value

# --- AST ----------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Feature:
    name: str


@dataclass(frozen=True)
class GroupIs:
    group: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*'
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str  # '==', '!=', '<', '<=', '>', '>='
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Indicator:
    condition: "Expr"


@dataclass(frozen=True)
class IfElse:
    condition: "Expr"
    then: "Expr"
    orelse: "Expr"


Expr = Lit | Name | Feature | GroupIs | Neg | BinOp | Compare | Indicator | IfElse

# --- tokenizer ----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:/\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*'*)"
    r"|(?P<op>==|!=|<=|>=|<|>|\+|-|\*|\(|\)))"
)

_KEYWORDS = {"if", "then", "else", "ind", "ingroup", "feat"}


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'name', 'op', 'kw', 'end'
    text: str
    col: int


def _tokenize(text: str, line: int | None) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:].lstrip()
            if not rest:
                break
            col = len(text) - len(rest) + 1
            raise ParseError(f"unknown token {rest[0]!r}", line=line, col=col)
        col = m.start(m.lastgroup) + 1
        if m.lastgroup == "name" and m.group("name") in _KEYWORDS:
            tokens.append(_Token("kw", m.group("name"), col))
        else:
            tokens.append(_Token(m.lastgroup, m.group(m.lastgroup), col))
        pos = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], line: int | None):
        self.tokens = tokens
        self.line = line
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.cur
        self.i += 1
        return tok

    def fail(self, message: str) -> None:
        raise ParseError(message, line=self.line, col=self.cur.col)

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.cur
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            self.fail(f"expected {want!r}, found {tok.text!r}" if tok.text else f"expected {want!r}")
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.cur.kind != "end":
            self.fail(f"unexpected trailing input {self.cur.text!r}")
        return e

    def expr(self) -> Expr:
        if self.cur.kind == "kw" and self.cur.text == "if":
            self.advance()
            cond = self.expr()
            self.expect("kw", "then")
            then = self.expr()
            self.expect("kw", "else")
            orelse = self.expr()
            return IfElse(cond, then, orelse)
        return self.cmp()

    def cmp(self) -> Expr:
        left = self.sum()
        if self.cur.kind == "op" and self.cur.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.advance().text
            right = self.sum()
            return Compare(op, left, right)
        return left

    def sum(self) -> Expr:
        e = self.term()
        while self.cur.kind == "op" and self.cur.text in ("+", "-"):
            op = self.advance().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.cur.kind == "op" and self.cur.text == "*":
            self.advance()
            e = BinOp("*", e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.advance()
            inner = self.unary()
            # fold so that `-1` is the literal -1, matching constructed ASTs
            if isinstance(inner, Lit):
                return Lit(as_value(-inner.value))
            return Neg(inner)
        return self.atom()

    def atom(self) -> Expr:
        tok = self.cur
        if tok.kind == "num":
            self.advance()
            if "/" in tok.text:
                num, den = tok.text.split("/")
                if int(den) == 0:
                    self.fail("zero denominator")
                return Lit(as_value(Fraction(int(num), int(den))))
            return Lit(int(tok.text))
        if tok.kind == "name":
            self.advance()
            return Name(tok.text)
        if tok.kind == "kw" and tok.text in ("ind", "ingroup", "feat"):
            self.advance()
            self.expect("op", "(")
            if tok.text == "ind":
                inner: Expr = Indicator(self.expr())
            else:
                name = self.expect("name").text
                inner = GroupIs(name) if tok.text == "ingroup" else Feature(name)
            self.expect("op", ")")
            return inner
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect("op", ")")
            return e
        self.fail(f"unexpected {tok.text!r}" if tok.text else "unexpected end of expression")
        raise AssertionError  # unreachable


def parse_expr(text: str, *, line: int | None = None) -> Expr:
    """Parse an expression and verify it is numeric-typed."""
    ast = _Parser(_tokenize(text, line), line).parse()
    if infer_type(ast) != "num":
        raise ExpressionError(f"expression is boolean, not numeric: {text.strip()!r}")
    return ast


# --- static typing ------------------------------------------------------


def infer_type(node: Expr) -> str:
    """Return 'num' or 'bool'; raise ExpressionError on a type clash."""
    if isinstance(node, (Lit, Name, Feature, Indicator)):
        if isinstance(node, Indicator) and infer_type(node.condition) != "bool":
            raise ExpressionError("ind(...) needs a boolean condition")
        return "num"
    if isinstance(node, GroupIs):
        return "bool"
    if isinstance(node, Neg):
        if infer_type(node.operand) != "num":
            raise ExpressionError("unary minus needs a numeric operand")
        return "num"
    if isinstance(node, BinOp):
        if infer_type(node.left) != "num" or infer_type(node.right) != "num":
            raise ExpressionError(f"operator {node.op!r} needs numeric operands")
        return "num"
    if isinstance(node, Compare):
        if infer_type(node.left) != "num" or infer_type(node.right) != "num":
            raise ExpressionError(f"comparison {node.op!r} needs numeric operands")
        return "bool"
    if isinstance(node, IfElse):
        if infer_type(node.condition) != "bool":
            raise ExpressionError("if-condition must be boolean")
        if infer_type(node.then) != "num" or infer_type(node.orelse) != "num":
            raise ExpressionError("if-branches must be numeric")
        return "num"
    raise ExpressionError(f"unknown expression node {node!r}")


# --- compilation --------------------------------------------------------

CompiledExpr = Callable[[Mapping[str, Value], str, Mapping[str, Value]], Value]
# arguments: (name environment, group of the unit, feature values of the unit)


def compile_expr(node: Expr) -> CompiledExpr:
    """Compile to nested closures; roughly 3x faster than tree-walking."""
    if isinstance(node, Lit):
        v = node.value
        return lambda env, g, f: v
    if isinstance(node, Name):
        n = node.id
        return lambda env, g, f: env[n]
    if isinstance(node, Feature):
        n = node.name
        return lambda env, g, f: f[n]
    if isinstance(node, GroupIs):
        n = node.group
        return lambda env, g, f: g == n
    if isinstance(node, Neg):
        sub = compile_expr(node.operand)
        return lambda env, g, f: -sub(env, g, f)
    if isinstance(node, BinOp):
        lf, rf = compile_expr(node.left), compile_expr(node.right)
        if node.op == "+":
            return lambda env, g, f: lf(env, g, f) + rf(env, g, f)
        if node.op == "-":
            return lambda env, g, f: lf(env, g, f) - rf(env, g, f)
        return lambda env, g, f: lf(env, g, f) * rf(env, g, f)
    if isinstance(node, Compare):
        lf, rf = compile_expr(node.left), compile_expr(node.right)
        op = node.op
        if op == "==":
            return lambda env, g, f: lf(env, g, f) == rf(env, g, f)
        if op == "!=":
            return lambda env, g, f: lf(env, g, f) != rf(env, g, f)
        if op == "<":
            return lambda env, g, f: lf(env, g, f) < rf(env, g, f)
        if op == "<=":
            return lambda env, g, f: lf(env, g, f) <= rf(env, g, f)
        if op == ">":
            return lambda env, g, f: lf(env, g, f) > rf(env, g, f)
        return lambda env, g, f: lf(env, g, f) >= rf(env, g, f)
    if isinstance(node, Indicator):
        sub = compile_expr(node.condition)
        return lambda env, g, f: 1 if sub(env, g, f) else 0
    if isinstance(node, IfElse):
        cf, tf, of = compile_expr(node.condition), compile_expr(node.then), compile_expr(node.orelse)
        return lambda env, g, f: tf(env, g, f) if cf(env, g, f) else of(env, g, f)
    raise ExpressionError(f"cannot compile {node!r}")


# --- analysis and rewriting ---------------------------------------------


def _walk(node: Expr) -> Iterator[Expr]:
    yield node
    if isinstance(node, Neg):
        yield from _walk(node.operand)
    elif isinstance(node, (BinOp, Compare)):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Indicator):
        yield from _walk(node.condition)
    elif isinstance(node, IfElse):
        yield from _walk(node.condition)
        yield from _walk(node.then)
        yield from _walk(node.orelse)


def referenced_names(node: Expr) -> frozenset[str]:
    return frozenset(n.id for n in _walk(node) if isinstance(n, Name))


def referenced_features(node: Expr) -> frozenset[str]:
    return frozenset(n.name for n in _walk(node) if isinstance(n, Feature))


def referenced_groups(node: Expr) -> frozenset[str]:
    return frozenset(n.group for n in _walk(node) if isinstance(n, GroupIs))


def substitute(node: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace `Name` leaves per `mapping`, leaving everything else intact."""
    if isinstance(node, Name):
        return mapping.get(node.id, node)
    if isinstance(node, (Lit, Feature, GroupIs)):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Compare):
        return Compare(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Indicator):
        return Indicator(substitute(node.condition, mapping))
    if isinstance(node, IfElse):
        return IfElse(
            substitute(node.condition, mapping),
            substitute(node.then, mapping),
            substitute(node.orelse, mapping),
        )
    raise ExpressionError(f"cannot substitute in {node!r}")


# --- printing -----------------------------------------------------------

_PREC = {"if": 0, "cmp": 1, "+": 2, "-": 2, "*": 3, "neg": 4, "atom": 5}


def _prec(node: Expr) -> int:
    if isinstance(node, IfElse):
        return _PREC["if"]
    if isinstance(node, Compare):
        return _PREC["cmp"]
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def format_expr(node: Expr) -> str:
    """Canonical text form; `parse_expr(format_expr(e)) == e`."""

    def wrap(child: Expr, minimum: int) -> str:
        text = format_expr(child)
        return f"({text})" if _prec(child) < minimum else text

    if isinstance(node, Lit):
        v = node.value
        return f"-{format_value(-v)}" if v < 0 else format_value(v)
    if isinstance(node, Name):
        return node.id
    if isinstance(node, Feature):
        return f"feat({node.name})"
    if isinstance(node, GroupIs):
        return f"ingroup({node.group})"
    if isinstance(node, Neg):
        return f"-{wrap(node.operand, _PREC['neg'])}"
    if isinstance(node, BinOp):
        # left-assoc: right child needs strictly higher precedence
        left = wrap(node.left, _PREC[node.op])
        right = wrap(node.right, _PREC[node.op] + 1)
        return f"{left} {node.op} {right}"
    if isinstance(node, Compare):
        return f"{wrap(node.left, _PREC['cmp'] + 1)} {node.op} {wrap(node.right, _PREC['cmp'] + 1)}"
    if isinstance(node, Indicator):
        return f"ind({format_expr(node.condition)})"
    if isinstance(node, IfElse):
        return (
            f"if {format_expr(node.condition)} then {format_expr(node.then)} "
            f"else {format_expr(node.orelse)}"
        )
    raise ExpressionError(f"cannot format {node!r}")
