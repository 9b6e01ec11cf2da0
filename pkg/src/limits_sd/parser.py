"""Parser and serializer for the declarative model text format.

The format is line-oriented: an optional header line followed by one
declaration per line. ``#`` starts a comment. Identifiers are lowercase
snake_case. Serialization is canonical (sorted by sector then name,
shortest round-trip decimals), so ``serialize`` is a fixed point on its
own output and ``parse(serialize(spec))`` equals ``spec`` structurally.

Grammar::

    model "<name>" version "<semver>"
    const <id> = <number> [unit "<text>"] [sector "<text>"]
    table <id> (<expr>) = [(<num>,<num>), ...] [sector "<text>"]
    aux   <id> = <expr> [sector "<text>"]
    stock <id> init <expr> inflow <expr> outflow <expr> [sector "<text>"]
    smooth <id> input <expr> time <expr> [init <expr>]
    delay3 <id> input <expr> time <expr> [init <expr>]

The optional ``init`` on smooth/delay3 is the only extension over the
base grammar: without it, stateful elements initialize to their first
input, which is ill-defined when that input feeds back through the
element itself at t0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .engine import (
    BUILTINS,
    BinOp,
    Call,
    DuplicateName,
    Element,
    Expr,
    Lit,
    ModelError,
    ModelSpec,
    Neg,
    TableFunction,
    Var,
    build_dependency_graph,
)

__all__ = [
    "ModelSyntaxError",
    "ModelDocument",
    "parse_model_text",
    "parse_expression",
    "serialize_model",
    "serialize_expression",
]


class ModelSyntaxError(ModelError):
    def __init__(self, line: int, col: int, expected: str):
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"line {line}, col {col}: expected {expected}")


@dataclass
class ModelDocument:
    """Raw parse: header plus per-line declarations with source locations."""

    name: str = ""
    version: str = "0.0.0"
    comments: tuple = ()
    declarations: list = field(default_factory=list)  # (line_no, Element)


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#.*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[a-z_][a-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[()\[\],=+\-*/^])
    """,
    re.VERBOSE,
)


def _tokenize_line(text: str, line_no: int):
    """Yield (kind, value, col) tokens; raises on any unrecognized byte."""
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ModelSyntaxError(line_no, pos + 1,
                                   f"valid token (found {text[pos]!r})")
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append((kind, m.group(), m.start() + 1))
        pos = m.end()
    return out


class _Tokens:
    def __init__(self, tokens, line_no: int, line_len: int):
        self.tokens = tokens
        self.i = 0
        self.line = line_no
        self.line_len = line_len

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, expected: str):
        tok = self.peek()
        if tok is None:
            raise ModelSyntaxError(self.line, self.line_len + 1, expected)
        self.i += 1
        return tok

    def expect_word(self, word: str):
        kind, value, col = self.next(f"'{word}'")
        if kind != "id" or value != word:
            raise ModelSyntaxError(self.line, col, f"'{word}' (found {value!r})")

    def expect_punct(self, punct: str):
        kind, value, col = self.next(f"'{punct}'")
        if kind != "punct" or value != punct:
            raise ModelSyntaxError(self.line, col, f"'{punct}' (found {value!r})")

    def expect_id(self, what: str = "identifier") -> str:
        kind, value, col = self.next(what)
        if kind != "id":
            raise ModelSyntaxError(self.line, col, f"{what} (found {value!r})")
        return value

    def expect_string(self, what: str = "quoted string") -> str:
        kind, value, col = self.next(what)
        if kind != "string":
            raise ModelSyntaxError(self.line, col, f"{what} (found {value!r})")
        return value[1:-1]

    def expect_number(self) -> float:
        sign = 1.0
        kind, value, col = self.next("number")
        if kind == "punct" and value in "+-":
            sign = -1.0 if value == "-" else 1.0
            kind, value, col = self.next("number")
        if kind != "number":
            raise ModelSyntaxError(self.line, col, f"number (found {value!r})")
        return sign * float(value)

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "id" and tok[1] == word

    def expect_end(self):
        tok = self.peek()
        if tok is not None:
            raise ModelSyntaxError(self.line, tok[2],
                                   f"end of line (found {tok[1]!r})")


# --------------------------------------------------------------------------
# expression parsing (precedence: ^  >  unary-  >  * /  >  + -)

def _parse_expr(ts: _Tokens) -> Expr:
    return _parse_additive(ts)


def _parse_additive(ts: _Tokens) -> Expr:
    node = _parse_multiplicative(ts)
    while True:
        tok = ts.peek()
        if tok is not None and tok[0] == "punct" and tok[1] in "+-":
            ts.i += 1
            node = BinOp(tok[1], node, _parse_multiplicative(ts))
        else:
            return node


def _parse_multiplicative(ts: _Tokens) -> Expr:
    node = _parse_unary(ts)
    while True:
        tok = ts.peek()
        if tok is not None and tok[0] == "punct" and tok[1] in "*/":
            ts.i += 1
            node = BinOp(tok[1], node, _parse_unary(ts))
        else:
            return node


def _parse_unary(ts: _Tokens) -> Expr:
    tok = ts.peek()
    if tok is not None and tok[0] == "punct" and tok[1] == "-":
        ts.i += 1
        inner = _parse_unary(ts)
        if isinstance(inner, Lit):  # fold so literals round-trip exactly
            return Lit(-inner.value)
        return Neg(inner)
    return _parse_power(ts)


def _parse_power(ts: _Tokens) -> Expr:
    node = _parse_primary(ts)
    while True:
        tok = ts.peek()
        if tok is not None and tok[0] == "punct" and tok[1] == "^":
            ts.i += 1
            node = BinOp("^", node, _parse_primary(ts))
        else:
            return node


def _parse_primary(ts: _Tokens) -> Expr:
    kind, value, col = ts.next("expression")
    if kind == "number":
        return Lit(float(value))
    if kind == "punct" and value == "(":
        node = _parse_expr(ts)
        ts.expect_punct(")")
        return node
    if kind == "id":
        tok = ts.peek()
        if tok is not None and tok[0] == "punct" and tok[1] == "(":
            if value not in BUILTINS:
                raise ModelSyntaxError(ts.line, col, f"builtin function (found {value!r})")
            ts.i += 1
            args = [_parse_expr(ts)]
            while True:
                nxt = ts.next("',' or ')'")
                if nxt[0] == "punct" and nxt[1] == ")":
                    break
                if nxt[0] == "punct" and nxt[1] == ",":
                    args.append(_parse_expr(ts))
                else:
                    raise ModelSyntaxError(ts.line, nxt[2], f"',' or ')' (found {nxt[1]!r})")
            if len(args) != BUILTINS[value]:
                raise ModelSyntaxError(
                    ts.line, col,
                    f"{BUILTINS[value]} argument(s) to {value} (found {len(args)})")
            if value == "lookup" and not isinstance(args[0], Var):
                raise ModelSyntaxError(ts.line, col, "table name as first lookup argument")
            return Call(value, tuple(args))
        return Var(value)
    raise ModelSyntaxError(ts.line, col, f"expression (found {value!r})")


def parse_expression(text: str, line_no: int = 1) -> Expr:
    """Parse a stand-alone expression string into an AST."""
    ts = _Tokens(_tokenize_line(text, line_no), line_no, len(text))
    node = _parse_expr(ts)
    ts.expect_end()
    return node


# --------------------------------------------------------------------------
# declarations

def _parse_trailing(ts: _Tokens, allow_unit: bool = True):
    unit = ""
    sector = ""
    if allow_unit and ts.at_word("unit"):
        ts.i += 1
        unit = ts.expect_string()
    if ts.at_word("sector"):
        ts.i += 1
        sector = ts.expect_string()
    ts.expect_end()
    return unit, sector


def _parse_declaration(ts: _Tokens, line_no: int) -> Element:
    keyword = ts.expect_id("declaration keyword")
    if keyword == "const":
        name = ts.expect_id("constant name")
        ts.expect_punct("=")
        value = ts.expect_number()
        unit, sector = _parse_trailing(ts)
        return Element(name=name, kind="constant", value=value,
                       unit=unit, sector=sector, line=line_no)
    if keyword == "table":
        name = ts.expect_id("table name")
        ts.expect_punct("(")
        input_expr = _parse_expr(ts)
        ts.expect_punct(")")
        ts.expect_punct("=")
        ts.expect_punct("[")
        knots = []
        while True:
            ts.expect_punct("(")
            x = ts.expect_number()
            ts.expect_punct(",")
            y = ts.expect_number()
            ts.expect_punct(")")
            knots.append((x, y))
            nxt = ts.next("',' or ']'")
            if nxt[0] == "punct" and nxt[1] == "]":
                break
            if not (nxt[0] == "punct" and nxt[1] == ","):
                raise ModelSyntaxError(ts.line, nxt[2], f"',' or ']' (found {nxt[1]!r})")
        unit, sector = _parse_trailing(ts, allow_unit=False)
        try:
            table = TableFunction(knots)
        except ModelError as exc:
            raise ModelSyntaxError(line_no, 1, f"valid table knots ({exc})")
        return Element(name=name, kind="table", table=table, input=input_expr,
                       sector=sector, line=line_no)
    if keyword == "aux":
        name = ts.expect_id("auxiliary name")
        ts.expect_punct("=")
        expr = _parse_expr(ts)
        unit, sector = _parse_trailing(ts, allow_unit=False)
        return Element(name=name, kind="auxiliary", expr=expr,
                       sector=sector, line=line_no)
    if keyword == "stock":
        name = ts.expect_id("stock name")
        ts.expect_word("init")
        init = _parse_expr(ts)
        ts.expect_word("inflow")
        inflow = _parse_expr(ts)
        ts.expect_word("outflow")
        outflow = _parse_expr(ts)
        unit, sector = _parse_trailing(ts, allow_unit=False)
        return Element(name=name, kind="stock", init=init, inflow=inflow,
                       outflow=outflow, sector=sector, line=line_no)
    if keyword in ("smooth", "delay3"):
        name = ts.expect_id(f"{keyword} name")
        ts.expect_word("input")
        input_expr = _parse_expr(ts)
        ts.expect_word("time")
        time_const = _parse_expr(ts)
        init = None
        if ts.at_word("init"):
            ts.i += 1
            init = _parse_expr(ts)
        ts.expect_end()
        return Element(name=name, kind=keyword, input=input_expr,
                       time_const=time_const, init=init, line=line_no)
    raise ModelSyntaxError(
        ts.line, 1,
        f"one of const/table/aux/stock/smooth/delay3 (found {keyword!r})")


def parse_document(text: str) -> ModelDocument:
    doc = ModelDocument()
    comments = []
    seen_header = False
    for line_no, raw in enumerate(text.split("\n"), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            comments.append(stripped[1:].strip())
            continue
        tokens = _tokenize_line(raw, line_no)
        if not tokens:
            continue
        ts = _Tokens(tokens, line_no, len(raw))
        if not seen_header and ts.at_word("model") and not doc.declarations:
            ts.i += 1
            doc.name = ts.expect_string("model name")
            ts.expect_word("version")
            doc.version = ts.expect_string("version string")
            ts.expect_end()
            seen_header = True
            continue
        if not seen_header:
            raise ModelSyntaxError(line_no, 1, "model header before declarations")
        doc.declarations.append((line_no, _parse_declaration(ts, line_no)))
    doc.comments = tuple(comments)
    return doc


def parse_model_text(text: str) -> ModelSpec:
    """Parse model text and return a validated ModelSpec."""
    doc = parse_document(text)
    elements = {}
    lines = {}
    for line_no, el in doc.declarations:
        if el.name in elements:
            raise DuplicateName(el.name, (lines[el.name], line_no))
        elements[el.name] = el
        lines[el.name] = line_no
    spec = ModelSpec(elements=elements, name=doc.name, version=doc.version,
                     comments=doc.comments)
    return build_dependency_graph(spec)


# --------------------------------------------------------------------------
# serialization

_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "neg": 30, "^": 40, "atom": 50}


def _prec(expr: Expr) -> int:
    if isinstance(expr, BinOp):
        return _PREC[expr.op]
    if isinstance(expr, Neg):
        return _PREC["neg"]
    if isinstance(expr, Lit) and math.copysign(1.0, expr.value) < 0:
        # serializes with a leading minus, so it binds like unary minus
        return _PREC["neg"]
    return _PREC["atom"]


def _fmt_num(value: float) -> str:
    return repr(float(value))


def serialize_expression(expr: Expr) -> str:
    if isinstance(expr, Lit):
        return _fmt_num(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        inner = serialize_expression(expr.operand)
        if _prec(expr.operand) < _PREC["neg"] or isinstance(expr.operand, Lit):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, BinOp):
        op = expr.op
        left = serialize_expression(expr.left)
        right = serialize_expression(expr.right)
        lp = _PREC["neg"] + 10 if op == "^" else _PREC[op]
        if _prec(expr.left) < lp:
            left = f"({left})"
        rmin = _PREC["atom"] if op == "^" else _PREC[op]
        if _prec(expr.right) < rmin or (op != "^" and _prec(expr.right) == _PREC[op]):
            right = f"({right})"
        return f"{left} {op} {right}" if op != "^" else f"{left}{op}{right}"
    if isinstance(expr, Call):
        args = ", ".join(serialize_expression(a) for a in expr.args)
        return f"{expr.func}({args})"
    raise ModelError(f"bad expression node {expr!r}")


def _serialize_element(el: Element) -> str:
    unit = f' unit "{el.unit}"' if el.unit else ""
    sector = f' sector "{el.sector}"' if el.sector else ""
    if el.kind == "constant":
        return f"const {el.name} = {_fmt_num(el.value)}{unit}{sector}"
    if el.kind == "table":
        knots = ", ".join(f"({_fmt_num(x)},{_fmt_num(y)})" for x, y in el.table.knots)
        return (f"table {el.name} ({serialize_expression(el.input)}) = "
                f"[{knots}]{sector}")
    if el.kind == "auxiliary":
        return f"aux {el.name} = {serialize_expression(el.expr)}{sector}"
    if el.kind == "stock":
        return (f"stock {el.name} init {serialize_expression(el.init)}"
                f" inflow {serialize_expression(el.inflow)}"
                f" outflow {serialize_expression(el.outflow)}{sector}")
    if el.kind in ("smooth", "delay3"):
        init = f" init {serialize_expression(el.init)}" if el.init is not None else ""
        return (f"{el.kind} {el.name} input {serialize_expression(el.input)}"
                f" time {serialize_expression(el.time_const)}{init}")
    raise ModelError(f"bad element kind {el.kind!r}")


def serialize_model(spec: ModelSpec) -> str:
    """Canonical text form: header then declarations sorted by sector, name."""
    lines = [f'model "{spec.name}" version "{spec.version}"']
    for el in sorted(spec.elements.values(), key=lambda e: (e.sector, e.name)):
        lines.append(_serialize_element(el))
    return "\n".join(lines) + "\n"
