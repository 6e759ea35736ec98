"""Row reordering before indexing.

Strategies:

* ``lex``: ascending byte order of the projected row, stable.  Files larger
  than the memory budget go through a two-pass external merge sort.
* ``gray``: Gray order of each row's concatenated k-of-N codes.
* ``group``: identical rows made contiguous; groups in seeded hash order.
* ``shuffle``: seeded uniform permutation.
* ``none``: identity.

Block sorting splits the table into contiguous blocks, sorts each one and
concatenates them without merging.
"""

from __future__ import annotations

import hashlib
import heapq
import os
import random
import shutil
import tempfile
from dataclasses import dataclass
from itertools import islice
from typing import Callable, Iterable, Sequence

import numpy as np

from .kofn import ColumnDictionary
from .table import Row, split_line

STRATEGIES = ("lex", "gray", "group", "shuffle", "none")
DEFAULT_MEMORY_BYTES = 256 * 1024 * 1024
_MIN_READ_BUFFER = 4096


@dataclass
class SortPlan:
    strategy: str = "lex"
    column_order: Sequence[int] | None = None
    blocks: int = 1
    seed: int = 0
    memory_bytes: int = DEFAULT_MEMORY_BYTES

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sort strategy {self.strategy!r}")
        if self.blocks < 1:
            raise ValueError("block count must be at least 1")

    def order_for(self, ncols: int) -> list[int]:
        if self.column_order is None:
            return list(range(ncols))
        order = list(self.column_order)
        if sorted(order) != list(range(ncols)):
            raise ValueError(f"column order {order} is not a permutation of {ncols} columns")
        return order


def _projector(order: Sequence[int]) -> Callable[[Row], tuple[str, ...]]:
    order = tuple(order)
    return lambda row: tuple(row[i] for i in order)


def gray_table_order(rows: Sequence[Row], order: Sequence[int], dicts: Sequence[ColumnDictionary]) -> np.ndarray:
    """Stable permutation putting rows in descending Gray order of their codes.

    Alphabetic allocation gives earlier values larger bit rows, so this is
    the direction under which Gray order agrees with ascending value order
    on a single one-hot column.
    """
    if not rows:
        return np.zeros(0, dtype=np.int64)
    offsets, base = {}, 0
    for c in order:
        offsets[c] = base
        base += dicts[c].n_bitmaps
    cols = []
    for c in order:
        d = dicts[c]
        codes = np.asarray(d.codes, dtype=np.int64).reshape(len(d.codes), d.k)
        ids = np.fromiter((d.value_id(r[c]) for r in rows), dtype=np.int64, count=len(rows))
        cols.append(codes[ids] + offsets[c])
    pos = np.concatenate(cols, axis=1)
    # ascending Gray key: -p at even toggle index, +p at odd; negate for
    # descending.  Every row has the same number of toggles, so the
    # terminator is constant and can be dropped.
    sign = np.where(np.arange(pos.shape[1]) % 2 == 0, 1, -1)
    keys = pos * sign
    return np.lexsort(keys.T[::-1])


def _group_key(seed: int) -> Callable[[Row], tuple[bytes, Row]]:
    salt = seed.to_bytes(8, "little", signed=True)

    def key(row: Row) -> tuple[bytes, Row]:
        h = hashlib.blake2b("\x1f".join(row).encode("utf-8", "surrogateescape"), digest_size=16, salt=salt)
        return h.digest(), row

    return key


def sort_rows(rows: Sequence[Row], plan: SortPlan, dicts: Sequence[ColumnDictionary] | None = None,
              ncols: int | None = None) -> list[Row]:
    """In-memory sort of a whole table (one block)."""
    rows = list(rows)
    if not rows:
        return rows
    order = plan.order_for(ncols if ncols is not None else len(rows[0]))
    s = plan.strategy
    if s == "none":
        return rows
    if s == "lex":
        return sorted(rows, key=_projector(order))
    if s == "gray":
        if dicts is None:
            raise ValueError("gray sort needs the column dictionaries")
        return [rows[i] for i in gray_table_order(rows, order, dicts)]
    if s == "group":
        return sorted(rows, key=_group_key(plan.seed))
    # shuffle
    random.Random(plan.seed).shuffle(rows)
    return rows


def block_bounds(nrows: int, blocks: int) -> list[tuple[int, int]]:
    """Contiguous ``[start, end)`` ranges of near-equal size."""
    blocks = max(1, min(blocks, nrows)) if nrows else 1
    q, r = divmod(nrows, blocks)
    bounds, start = [], 0
    for b in range(blocks):
        end = start + q + (1 if b < r else 0)
        bounds.append((start, end))
        start = end
    return bounds


def block_sort(rows: Sequence[Row], plan: SortPlan, dicts: Sequence[ColumnDictionary] | None = None,
               ncols: int | None = None) -> list[Row]:
    out: list[Row] = []
    for start, end in block_bounds(len(rows), plan.blocks):
        out.extend(sort_rows(rows[start:end], plan, dicts, ncols))
    return out


def order_columns_by_cardinality(cardinalities: Sequence[int], direction: str = "asc") -> list[int]:
    """Column permutation by distinct-value count; ties keep original order."""
    if direction not in ("asc", "desc"):
        raise ValueError(f"direction must be 'asc' or 'desc', not {direction!r}")
    sign = 1 if direction == "asc" else -1
    return sorted(range(len(cardinalities)), key=lambda i: (sign * cardinalities[i], i))


# ------------------------------------------------------------ external sort

@dataclass
class ExternalSortStats:
    runs: int = 0
    merge_passes: int = 0
    read_buffer: int = 0
    write_buffer: int = 0


def _spill_runs(lines: Iterable[str], key, memory_bytes: int, tmpdir: str) -> tuple[list[str], list[str] | None]:
    """Pass one: cut the input into sorted runs on disk.

    If everything fits in one run the sorted lines are returned instead.
    """
    paths: list[str] = []
    buf: list[str] = []
    used = 0
    for line in lines:
        if not line.endswith("\n"):
            line += "\n"
        buf.append(line)
        used += len(line) + 64  # rough per-line object overhead
        if used >= memory_bytes:
            paths.append(_write_run(sorted(buf, key=key), tmpdir, len(paths)))
            buf, used = [], 0
    if not paths:
        return [], sorted(buf, key=key)
    if buf:
        paths.append(_write_run(sorted(buf, key=key), tmpdir, len(paths)))
    return paths, None


def _write_run(lines: list[str], tmpdir: str, n: int) -> str:
    path = os.path.join(tmpdir, f"run{n:06d}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.writelines(lines)
    return path


def _merge(paths: Sequence[str], out, key, read_buffer: int) -> None:
    files = [open(p, encoding="utf-8", newline="", buffering=read_buffer) for p in paths]
    try:
        # heapq.merge breaks ties by input position, so the merge is stable
        out.writelines(heapq.merge(*files, key=key))
    finally:
        for f in files:
            f.close()


def external_sort_lines(lines: Iterable[str], out_path: str | os.PathLike, key,
                        memory_bytes: int = DEFAULT_MEMORY_BYTES, tmpdir: str | None = None) -> ExternalSortStats:
    """Two-pass sort: spill sorted runs, then one sequential merge.

    Each run gets a read buffer of ``z = (M - x) / runs`` bytes where ``x``
    is the write buffer.  When ``z`` gets too small, runs are merged in
    groups first, adding passes.
    """
    stats = ExternalSortStats()
    with tempfile.TemporaryDirectory(dir=tmpdir, prefix="bitkiln-sort-") as work:
        paths, in_memory = _spill_runs(lines, key, memory_bytes, work)
        write_buffer = max(_MIN_READ_BUFFER, memory_bytes // 8)
        stats.write_buffer = write_buffer
        if in_memory is not None:
            with open(out_path, "w", encoding="utf-8", newline="", buffering=write_buffer) as out:
                out.writelines(in_memory)
            return stats
        stats.runs = len(paths)
        fan_in = max(2, (memory_bytes - write_buffer) // _MIN_READ_BUFFER)
        level = 0
        while len(paths) > fan_in:
            merged = []
            for g in range(0, len(paths), fan_in):
                group = paths[g:g + fan_in]
                dest = os.path.join(work, f"m{level}_{g:06d}")
                with open(dest, "w", encoding="utf-8", newline="", buffering=write_buffer) as out:
                    _merge(group, out, key, max(_MIN_READ_BUFFER, (memory_bytes - write_buffer) // len(group)))
                for p in group:
                    os.remove(p)
                merged.append(dest)
            paths = merged
            level += 1
            stats.merge_passes += 1
        read_buffer = max(_MIN_READ_BUFFER, (memory_bytes - write_buffer) // len(paths))
        stats.read_buffer = read_buffer
        with open(out_path, "w", encoding="utf-8", newline="", buffering=write_buffer) as out:
            _merge(paths, out, key, read_buffer)
        stats.merge_passes += 1
    return stats


def line_key(order: Sequence[int], delimiter: str):
    project = _projector(order)
    return lambda line: project(split_line(line, delimiter))


def sort_file(in_path: str | os.PathLike, out_path: str | os.PathLike, plan: SortPlan, delimiter: str = ",",
              header: bool = False, dicts: Sequence[ColumnDictionary] | None = None) -> ExternalSortStats | None:
    """Sort a delimited file into ``out_path``.

    A full lexicographic sort streams through the external sorter; other
    strategies and block sorts load the rows into memory.
    """
    with open(in_path, encoding="utf-8", newline="") as fh:
        head = fh.readline() if header else None
        first = fh.readline()
    ncols = len(split_line(first, delimiter)) if first else 0
    order = plan.order_for(ncols) if ncols else []

    if plan.strategy == "lex" and plan.blocks == 1:
        with open(in_path, encoding="utf-8", newline="") as fh:
            body = islice(fh, 1, None) if header else fh
            body = (ln for ln in body if ln.strip("\r\n"))
            tmp_out = f"{out_path}.body" if header else out_path
            stats = external_sort_lines(body, tmp_out, line_key(order, delimiter), plan.memory_bytes,
                                        tmpdir=os.path.dirname(os.path.abspath(out_path)))
        if header:
            with open(out_path, "w", encoding="utf-8", newline="") as out, open(tmp_out, encoding="utf-8") as src:
                out.write(head if head.endswith("\n") else head + "\n")
                shutil.copyfileobj(src, out)
            os.remove(tmp_out)
        return stats

    from .table import iter_rows, write_rows

    rows = list(iter_rows(in_path, delimiter, header))
    ordered = block_sort(rows, plan, dicts, ncols)
    write_rows(ordered, out_path, delimiter, split_line(head, delimiter) if header and head else None)
    return None
