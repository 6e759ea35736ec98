"""End-to-end operations shared by the CLI and the HTTP service."""

from __future__ import annotations

import contextlib
import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .index_store import (
    DEFAULT_PARTITION_BYTES,
    BuildStats,
    Histogram,
    IndexConfig,
    IndexReader,
    build_histogram,
    build_index,
    index_stats,
)
from .kofn import ALPHABETIC, build_dictionary
from .sorting import DEFAULT_MEMORY_BYTES, SortPlan, block_sort, order_columns_by_cardinality, sort_file
from .table import FactTable, histogram_path, read_table

STATS_FIELDS = ("column", "bitmap", "C", "N", "factor", "set_bits")


@contextlib.contextmanager
def atomic_output(path: str | os.PathLike) -> Iterator[str]:
    """Yield a temporary path next to ``path``; move it into place on success."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def resolve_column_order(rule: str | None, cardinalities: Sequence[int]) -> list[int] | None:
    """``asc``, ``desc`` or ``given:2,0,1``; ``None`` keeps file order."""
    if rule is None or rule == "" or rule == "file":
        return None
    if rule in ("asc", "desc"):
        return order_columns_by_cardinality(cardinalities, rule)
    if rule.startswith("given:"):
        try:
            perm = [int(x) for x in rule[len("given:"):].split(",") if x.strip()]
        except ValueError:
            raise ValueError(f"bad column order {rule!r}") from None
        if sorted(perm) != list(range(len(cardinalities))):
            raise ValueError(f"column order {perm} is not a permutation of {len(cardinalities)} columns")
        return perm
    raise ValueError(f"column order must be asc, desc or given:<perm>, not {rule!r}")


def parse_columns(spec: str | None) -> list[int] | None:
    if not spec:
        return None
    try:
        return [int(x) for x in spec.split(",")]
    except ValueError:
        raise ValueError(f"bad column list {spec!r}") from None


@dataclass
class IndexOptions:
    k: int = 1
    allocation: str = ALPHABETIC
    sort: str = "none"
    blocks: int = 1
    column_order: str | None = None
    partition_bytes: int = DEFAULT_PARTITION_BYTES
    delimiter: str = ","
    seed: int = 0
    header: bool = False
    columns: str | None = None


def load_or_build_histogram(table: FactTable, table_path: str | os.PathLike) -> tuple[Histogram, bool]:
    """Reuse the ``.hist`` sidecar when it matches the table, else rebuild it."""
    side = histogram_path(table_path)
    if side.exists():
        try:
            hist = Histogram.load(side)
        except (ValueError, KeyError, IndexError):
            hist = None
        if hist is not None and hist.matches(table):
            return hist, True
    hist = build_histogram(table)
    try:
        with atomic_output(side) as tmp:
            hist.save(tmp)
    except OSError:
        pass  # read-only input directory; the index is still buildable
    return hist, False


def index_table(in_path: str | os.PathLike, out_path: str | os.PathLike, opts: IndexOptions) -> dict:
    """Histogram pass, optional sort, then the index build."""
    cols = parse_columns(opts.columns)
    table = read_table(in_path, opts.delimiter, opts.header, cols)
    hist, reused = load_or_build_histogram(table, in_path)
    order = resolve_column_order(opts.column_order, hist.cardinalities)
    plan = SortPlan(opts.sort, order, opts.blocks, opts.seed)
    dicts = None
    if opts.sort == "gray":
        dicts = [build_dictionary(list(c), opts.k, opts.allocation) for c in hist.counts]
    rows = block_sort(table.rows, plan, dicts, table.ncols)
    stats = BuildStats()
    config = IndexConfig(opts.k, opts.allocation, opts.partition_bytes)
    with atomic_output(out_path) as tmp:
        meta = build_index(FactTable(table.columns, rows), tmp, config, hist, stats, sources=cols)
    return {
        "rows": meta["rows"],
        "columns": [c["name"] for c in meta["columns"]],
        "bitmaps": meta["total_bitmaps"],
        "partitions": stats.partitions,
        "bytes": os.path.getsize(out_path),
        "histogram_reused": reused,
        "touches": stats.touches,
    }


def sort_table_file(in_path: str | os.PathLike, out_path: str | os.PathLike, sort: str = "lex", blocks: int = 1,
                    column_order: str | None = None, delimiter: str = ",", seed: int = 0, header: bool = False,
                    k: int = 1, allocation: str = ALPHABETIC, memory_bytes: int = DEFAULT_MEMORY_BYTES) -> None:
    order = None
    dicts = None
    if column_order not in (None, "", "file") or sort == "gray":
        table = read_table(in_path, delimiter, header)
        hist, _ = load_or_build_histogram(table, in_path)
        order = resolve_column_order(column_order, hist.cardinalities)
        if sort == "gray":
            dicts = [build_dictionary(list(c), k, allocation) for c in hist.counts]
    plan = SortPlan(sort, order, blocks, seed, memory_bytes)
    with atomic_output(out_path) as tmp:
        sort_file(in_path, tmp, plan, delimiter, header, dicts)


def stats_records(reader: IndexReader) -> list[dict]:
    """Per-bitmap rows followed by one ``total`` row per column."""
    st = index_stats(reader)
    out = []
    for spec, total in zip(reader.columns, st.columns):
        for b in st.bitmaps:
            if b.column == spec.name:
                out.append(_record(b.column, b.bitmap, b))
        out.append(_record(total.column, "total", total))
    return out


def _record(column: str, bitmap, s) -> dict:
    return {
        "column": column,
        "bitmap": bitmap,
        "C": s.compressed_words,
        "N": s.uncompressed_words,
        "factor": round(s.factor, 6),
        "set_bits": s.set_bits,
    }


def stats_csv(records: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=STATS_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()
