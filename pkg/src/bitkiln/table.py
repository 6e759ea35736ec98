"""Delimited fact tables: one row per line, no quoting."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

Row = tuple[str, ...]


class RaggedRowError(ValueError):
    pass


def split_line(line: str, delimiter: str) -> Row:
    if line.endswith("\n"):
        line = line[:-1]
    if line.endswith("\r"):
        line = line[:-1]
    return tuple(line.split(delimiter))


def default_names(ncols: int) -> list[str]:
    return [f"d{i}" for i in range(ncols)]


@dataclass
class FactTable:
    """In-memory fact table; every row has ``len(columns)`` fields."""

    columns: list[str]
    rows: list[Row] = field(default_factory=list)

    @property
    def ncols(self) -> int:
        return len(self.columns)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, i: int) -> list[str]:
        return [r[i] for r in self.rows]

    def select(self, indices: Sequence[int]) -> "FactTable":
        return FactTable([self.columns[i] for i in indices], [tuple(r[i] for i in indices) for r in self.rows])


def iter_rows(path: str | os.PathLike, delimiter: str = ",", header: bool = False) -> Iterator[Row]:
    """Stream rows, checking they all have the same width."""
    width = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            if lineno == 1 and header:
                continue
            if line in ("\n", "\r\n", ""):
                continue
            row = split_line(line, delimiter)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise RaggedRowError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            yield row


def read_table(path: str | os.PathLike, delimiter: str = ",", header: bool = False,
               columns: Sequence[int] | None = None) -> FactTable:
    """Load a delimited file.  ``columns`` keeps only those field indices."""
    names = None
    if header:
        with open(path, encoding="utf-8", newline="") as fh:
            first = fh.readline()
        names = list(split_line(first, delimiter)) if first else []
    rows = list(iter_rows(path, delimiter, header))
    width = len(rows[0]) if rows else len(names or [])
    if names is not None and rows and len(names) != width:
        raise RaggedRowError(f"{path}: header has {len(names)} fields, rows have {width}")
    table = FactTable(names if names is not None else default_names(width), rows)
    if columns is not None:
        bad = [c for c in columns if not 0 <= c < table.ncols]
        if bad:
            raise ValueError(f"column indices out of range: {bad}")
        table = table.select(columns)
    return table


def write_rows(rows: Iterable[Row], path: str | os.PathLike, delimiter: str = ",",
               header: Sequence[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header is not None:
            fh.write(delimiter.join(header) + "\n")
        for row in rows:
            fh.write(delimiter.join(row) + "\n")


def write_table(table: FactTable, path: str | os.PathLike, delimiter: str = ",", header: bool = False) -> None:
    write_rows(table.rows, path, delimiter, table.columns if header else None)


def histogram_path(table_path: str | os.PathLike) -> Path:
    p = Path(table_path)
    return p.with_name(p.name + ".hist")
