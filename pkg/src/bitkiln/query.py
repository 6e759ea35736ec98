"""Equality queries over an index.

Syntax: ``col=value`` leaves joined by ``&`` (AND) and ``|`` (OR), with
parentheses; ``&`` binds tighter than ``|``.  Whitespace around tokens is
ignored.  Values run up to the next operator or parenthesis, so they may
contain spaces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .ewah import EWAHBitmap, OpStats, and_many, logical_op, zeros
from .index_store import IndexReader


class QuerySyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class Eq:
    column: str
    value: str


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


Expr = Union[Eq, And, Or]

_TOKEN = re.compile(r"\s*(?:([&|()])|([^&|()=]+?)\s*=\s*([^&|()]*?)\s*(?=[&|()]|$))\s*")


def _tokenize(text: str) -> list[tuple[str, ...]]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise QuerySyntaxError(f"cannot parse query at offset {pos}: {text[pos:pos + 20]!r}")
        if m.group(1):
            tokens.append((m.group(1),))
        else:
            column = m.group(2).strip()
            if not column:
                raise QuerySyntaxError(f"empty column name at offset {pos}")
            tokens.append(("eq", column, m.group(3).strip()))
        pos = m.end()
    return tokens


def parse_query(text: str) -> Expr:
    tokens = _tokenize(text)
    if not tokens:
        raise QuerySyntaxError("empty query")
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def take(kind=None):
        nonlocal pos
        if pos >= len(tokens):
            raise QuerySyntaxError("unexpected end of query")
        tok = tokens[pos]
        if kind is not None and tok[0] != kind:
            raise QuerySyntaxError(f"expected {kind!r}, found {tok[0]!r}")
        pos += 1
        return tok

    def disjunction():
        node = conjunction()
        while peek() == "|":
            take()
            node = Or(node, conjunction())
        return node

    def conjunction():
        node = atom()
        while peek() == "&":
            take()
            node = And(node, atom())
        return node

    def atom():
        if peek() == "(":
            take()
            node = disjunction()
            take(")")
            return node
        tok = take()
        if tok[0] != "eq":
            raise QuerySyntaxError(f"expected a predicate, found {tok[0]!r}")
        return Eq(tok[1], tok[2])

    expr = disjunction()
    if pos != len(tokens):
        raise QuerySyntaxError(f"unexpected {tokens[pos][0]!r} after a complete expression")
    return expr


def format_query(expr: Expr) -> str:
    if isinstance(expr, Eq):
        return f"{expr.column}={expr.value}"
    op = "&" if isinstance(expr, And) else "|"
    return f"({format_query(expr.left)} {op} {format_query(expr.right)})"


def leaves(expr: Expr) -> list[Eq]:
    if isinstance(expr, Eq):
        return [expr]
    return leaves(expr.left) + leaves(expr.right)


@dataclass
class QueryResult:
    row_ids: np.ndarray
    warnings: list[str] = field(default_factory=list)
    bitmaps_requested: int = 0   # sum of k over leaves
    bitmaps_loaded: int = 0      # distinct (column, bitmap) reads
    ops: OpStats = field(default_factory=OpStats)

    @property
    def count(self) -> int:
        return int(self.row_ids.size)


class _Evaluation:
    def __init__(self, reader: IndexReader, result: QueryResult) -> None:
        self.reader = reader
        self.result = result
        self.cache: dict[tuple[str, int], EWAHBitmap] = {}

    def bitmap(self, column: str, bitmap_id: int) -> EWAHBitmap:
        key = (column, bitmap_id)
        self.result.bitmaps_requested += 1
        if key not in self.cache:
            self.cache[key] = self.reader.load_bitmap(column, bitmap_id)
            self.result.bitmaps_loaded += 1
        return self.cache[key]

    def equality(self, column: str, value: str) -> EWAHBitmap:
        spec = self.reader.column(column)
        d = spec.dictionary
        if value not in d:
            self.result.warnings.append(f"value {value!r} does not occur in column {column!r}")
            return zeros(self.reader.rows)
        return and_many([self.bitmap(column, b) for b in d.encode(value)], self.result.ops)

    def run(self, expr: Expr) -> EWAHBitmap:
        if isinstance(expr, Eq):
            return self.equality(expr.column, expr.value)
        left = self.run(expr.left)
        right = self.run(expr.right)
        return logical_op("and" if isinstance(expr, And) else "or", left, right, self.result.ops)


def equality_bitmap(reader: IndexReader, column: str, value: str) -> EWAHBitmap:
    """Rows holding ``value`` in ``column``: the AND of its k bitmaps.

    An unknown value gives an all-zero bitmap; an unknown column raises.
    """
    return _Evaluation(reader, QueryResult(np.zeros(0, dtype=np.int64))).equality(column, value)


def evaluate(reader: IndexReader, expr: Expr | str) -> QueryResult:
    if isinstance(expr, str):
        expr = parse_query(expr)
    for leaf in leaves(expr):
        reader.column(leaf.column)  # unknown columns fail before any I/O
    result = QueryResult(np.zeros(0, dtype=np.int64))
    bm = _Evaluation(reader, result).run(expr)
    result.row_ids = bm.positions()
    return result
