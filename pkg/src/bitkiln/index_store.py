"""Histogram pass, partitioned index construction and bitmap retrieval.

File layout (all integers little-endian)::

    b"BKLN"  version:u8  meta_len:u32  meta:JSON(meta_len bytes)  payload

``meta`` holds the row count, the per-column dictionaries and the partition
directory (offsets relative to the start of the payload).  Each partition
covers a contiguous row range and is self-contained::

    offsets: u32 x L      byte offset of each bitmap from the partition start
    L times: count:u32  words:u32 x count

Every partition except the last covers a multiple of 32 rows, so the
segments of a bitmap concatenate without re-alignment.
"""

from __future__ import annotations

import functools
import json
import os
import shutil
import struct
import sys
import tempfile
import threading
import time
from array import array
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ewah import WORD_BITS, EWAHBitmap, words_for_bits, zeros
from .kofn import ALPHABETIC, ColumnDictionary, build_dictionary
from .table import FactTable

MAGIC = b"BKLN"
FORMAT_VERSION = 1
HIST_VERSION = 1
DEFAULT_PARTITION_BYTES = 256 * 1024 * 1024
_PREAMBLE = struct.Struct("<4sBI")
_U32 = struct.Struct("<I")


class IndexFileError(Exception):
    """Base class for index file problems."""


class CorruptIndexError(IndexFileError):
    pass


class UnsupportedVersionError(IndexFileError):
    pass


class TruncatedIndexError(IndexFileError):
    pass


class UnknownColumnError(KeyError):
    pass


# ---------------------------------------------------------------- histogram

@dataclass
class Histogram:
    columns: list[str]
    counts: list[dict[str, int]]
    rows: int = 0

    @property
    def cardinalities(self) -> list[int]:
        return [len(c) for c in self.counts]

    def save(self, path: str | os.PathLike) -> None:
        # values are JSON strings so tabs, newlines and NULs survive
        enc = functools.partial(json.dumps, ensure_ascii=False)
        lines = [f"# version\t{HIST_VERSION}", f"# rows\t{self.rows}",
                 "\t".join(["# columns", *map(enc, self.columns)])]
        for i, counts in enumerate(self.counts):
            lines.extend(f"{i}\t{enc(v)}\t{counts[v]}" for v in sorted(counts))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Histogram":
        meta: dict[str, list[str]] = {}
        counts: list[dict[str, int]] = []
        with open(path, encoding="utf-8", newline="") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("# "):
                    key, *rest = line[2:].split("\t")
                    meta[key] = rest
                    if key == "columns":
                        counts = [{} for _ in rest]
                    continue
                if meta.get("version") != [str(HIST_VERSION)]:
                    raise ValueError(f"{path}: unsupported histogram version {meta.get('version')}")
                idx, value, n = line.split("\t")
                counts[int(idx)][json.loads(value)] = int(n)
        if meta.get("version") != [str(HIST_VERSION)]:
            raise ValueError(f"{path}: unsupported histogram version {meta.get('version')}")
        columns = [json.loads(c) for c in meta.get("columns", [])]
        return cls(columns, counts, int(meta["rows"][0]))

    def matches(self, table: FactTable) -> bool:
        return self.rows == len(table) and self.columns == table.columns


def build_histogram(table: FactTable) -> Histogram:
    counts = [Counter() for _ in table.columns]
    for row in table.rows:
        if len(row) != table.ncols:
            raise ValueError(f"ragged row {row!r}")
        for c, v in zip(counts, row):
            c[v] += 1
    return Histogram(list(table.columns), [dict(c) for c in counts], len(table))


# -------------------------------------------------------------------- build

@dataclass
class BuildStats:
    touches: int = 0          # bitmap updates caused by rows
    finalizations: int = 0    # per-partition, per-bitmap flushes
    partitions: int = 0
    bytes_written: int = 0
    write_offsets: list[int] = field(default_factory=list)

    def record_write(self, offset: int, size: int) -> None:
        if self.write_offsets and offset < self.write_offsets[-1]:
            raise AssertionError("non-sequential write during index build")
        self.write_offsets.append(offset)
        self.bytes_written += size


@dataclass
class IndexConfig:
    k: int = 1
    allocation: str = ALPHABETIC
    partition_bytes: int = DEFAULT_PARTITION_BYTES


def rows_per_partition(partition_bytes: int, total_bitmaps: int, ones_per_row: int) -> int:
    """Row budget so that the estimated partition size stays under budget.

    Each set bit costs at most one literal word plus one marker, and every
    bitmap carries a 4-byte offset and a 4-byte count; partitions hold a
    multiple of 32 rows and at least 32.
    """
    room = partition_bytes - 8 * total_bitmaps
    rows = room // max(1, 8 * ones_per_row) if room > 0 else 0
    return max(WORD_BITS, rows // WORD_BITS * WORD_BITS)


def _value_ids(table: FactTable, dicts: Sequence[ColumnDictionary]) -> list[np.ndarray]:
    out = []
    for c, d in enumerate(dicts):
        lookup = d._lookup
        try:
            ids = np.fromiter((lookup[r[c]] for r in table.rows), dtype=np.int64, count=len(table))
        except KeyError as exc:
            raise ValueError(f"value {exc.args[0]!r} of column {table.columns[c]!r} is not in the histogram") from None
        out.append(ids)
    return out


def _build_partition(code_ids: list[np.ndarray], nrows: int, total_bitmaps: int,
                     stats: BuildStats, empty: bytes) -> list[bytes]:
    """Serialized bitmaps for one partition.

    ``code_ids`` holds, per column and code slot, the global bitmap id set
    by each row of the partition.  Each row updates exactly those bitmaps'
    current words; words are then flushed bitmap by bitmap as zero gaps
    plus literals.
    """
    gids = np.concatenate(code_ids) if code_ids else np.zeros(0, dtype=np.int64)
    local = np.tile(np.arange(nrows, dtype=np.int64), len(code_ids))
    stats.touches += int(gids.size)
    order = np.lexsort((local, gids))
    gids, local = gids[order], local[order]
    nwords = words_for_bits(nrows)
    key = gids * nwords + (local >> 5)
    bits = np.left_shift(np.uint32(1), (local & 31).astype(np.uint32))
    if key.size:
        starts = np.flatnonzero(np.diff(key, prepend=-1))
        ukey = key[starts]
        uval = np.bitwise_or.reduceat(bits, starts)
    else:
        ukey = np.zeros(0, dtype=np.int64)
        uval = np.zeros(0, dtype=np.uint32)
    ugid = ukey // max(nwords, 1)
    uword = ukey - ugid * nwords
    bounds = np.searchsorted(ugid, np.arange(total_bitmaps + 1))
    out = []
    for g in range(total_bitmaps):
        stats.finalizations += 1
        s, e = bounds[g], bounds[g + 1]
        if s == e:
            out.append(empty)
            continue
        bm = EWAHBitmap.from_sparse_words(uword[s:e], uval[s:e], nrows)
        out.append(_U32.pack(len(bm.words)) + bm.serialize())
    return out


def _column_meta(name: str, source: int, d: ColumnDictionary, first: int) -> dict:
    return {
        "name": name,
        "source": source,
        "cardinality": d.cardinality,
        "first_bitmap": first,
        **d.to_dict(),
    }


def build_index(table: FactTable, out_path: str | os.PathLike, config: IndexConfig | None = None,
                hist: Histogram | None = None, stats: BuildStats | None = None,
                sources: Sequence[int] | None = None) -> dict:
    """Write the index of ``table`` to ``out_path`` and return its metadata.

    Partitions are spooled to a temporary file while the directory is
    collected, so every write to both files is append-only.
    """
    config = config or IndexConfig()
    stats = stats if stats is not None else BuildStats()
    if hist is None:
        hist = build_histogram(table)
    elif not hist.matches(table):
        raise ValueError("histogram does not match the table (rows or columns changed)")
    dicts = [build_dictionary(list(c), config.k, config.allocation) for c in hist.counts]
    firsts, total = [], 0
    for d in dicts:
        firsts.append(total)
        total += d.n_bitmaps
    ids = _value_ids(table, dicts)
    n = len(table)
    ones_per_row = sum(d.k for d in dicts)
    step = rows_per_partition(config.partition_bytes, total, ones_per_row)
    empty_cache: dict[int, bytes] = {}

    directory = []
    out_dir = os.path.dirname(os.path.abspath(out_path))
    with tempfile.TemporaryFile(dir=out_dir, prefix=".bitkiln-spool-") as spool:
        pos = 0
        for start in range(0, n, step) if n else [0]:
            end = min(n, start + step)
            nrows = end - start
            code_ids = []
            for c, d in enumerate(dicts):
                codes = np.asarray(d.codes, dtype=np.int64).reshape(len(d.codes), d.k)
                part_codes = codes[ids[c][start:end]] + firsts[c]
                code_ids.extend(part_codes[:, j] for j in range(d.k))
            if nrows not in empty_cache:
                z = zeros(nrows)
                empty_cache[nrows] = _U32.pack(len(z.words)) + z.serialize()
            blobs = _build_partition(code_ids, nrows, total, stats, empty_cache[nrows])
            offsets = array("I")
            off = 4 * total
            for b in blobs:
                offsets.append(off)
                off += len(b)
            head = offsets.tobytes()
            stats.record_write(pos, len(head))
            spool.write(head)
            cursor = pos + len(head)
            for b in blobs:
                stats.record_write(cursor, len(b))
                spool.write(b)
                cursor += len(b)
            directory.append({"offset": pos, "size": off, "row_start": start, "row_count": nrows})
            pos += off
            stats.partitions += 1

        meta = {
            "version": FORMAT_VERSION,
            "rows": n,
            "word_bits": WORD_BITS,
            "total_bitmaps": total,
            "columns": [_column_meta(name, (sources[i] if sources else i), d, firsts[i])
                        for i, (name, d) in enumerate(zip(table.columns, dicts))],
            "partitions": directory,
        }
        blob = json.dumps(meta, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
        spool.seek(0)
        with open(out_path, "wb") as out:
            pre = _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(blob))
            out.write(pre)
            out.write(blob)
            shutil.copyfileobj(spool, out, 1 << 20)
    return meta


# --------------------------------------------------------------------- read

@dataclass(frozen=True)
class ColumnSpec:
    name: str
    source: int
    dictionary: ColumnDictionary
    first_bitmap: int

    @property
    def n_bitmaps(self) -> int:
        return self.dictionary.n_bitmaps


class IndexReader:
    """Read-only view of an index file.

    Opening parses only the header.  ``load_bitmap`` issues positioned
    reads, so one reader can serve concurrent callers.
    """

    def __init__(self, path: str | os.PathLike) -> None:
        self.path = str(path)
        t0 = time.perf_counter()
        self._fd = os.open(self.path, os.O_RDONLY)
        try:
            self._parse_header()
        except BaseException:
            os.close(self._fd)
            raise
        self.header_load_seconds = time.perf_counter() - t0
        self._lock = threading.Lock()
        self.bytes_read = 0

    def _parse_header(self) -> None:
        size = os.fstat(self._fd).st_size
        pre = os.pread(self._fd, _PREAMBLE.size, 0)
        if len(pre) < _PREAMBLE.size:
            if not MAGIC.startswith(pre[:4]):
                raise CorruptIndexError(f"{self.path}: not an index file")
            raise TruncatedIndexError(f"{self.path}: file ends inside the preamble")
        magic, version, meta_len = _PREAMBLE.unpack(pre)
        if magic != MAGIC:
            raise CorruptIndexError(f"{self.path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{self.path}: format version {version} (supported: {FORMAT_VERSION})")
        if _PREAMBLE.size + meta_len > size:
            raise TruncatedIndexError(f"{self.path}: file ends inside the metadata block")
        raw = os.pread(self._fd, meta_len, _PREAMBLE.size)
        try:
            meta = json.loads(raw.decode("utf-8"))
            self.rows = int(meta["rows"])
            self.total_bitmaps = int(meta["total_bitmaps"])
            self.partitions = list(meta["partitions"])
            self.columns = [
                ColumnSpec(c["name"], int(c["source"]), ColumnDictionary.from_dict(c), int(c["first_bitmap"]))
                for c in meta["columns"]
            ]
            if meta.get("word_bits") != WORD_BITS:
                raise ValueError("unsupported word size")
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            raise CorruptIndexError(f"{self.path}: unreadable metadata ({exc})") from None
        if sum(p["row_count"] for p in self.partitions) != self.rows:
            raise CorruptIndexError(f"{self.path}: partition row ranges do not add up")
        self.meta = meta
        self.header_bytes = _PREAMBLE.size + meta_len
        self._payload = self.header_bytes
        payload = sum(p["size"] for p in self.partitions)
        if self._payload + payload > size:
            raise TruncatedIndexError(f"{self.path}: payload is {size - self._payload} bytes, expected {payload}")
        self._by_name = {c.name: c for c in self.columns}

    # -- plumbing

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self) -> "IndexReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _read(self, n: int, offset: int) -> bytes:
        data = os.pread(self._fd, n, offset)
        if len(data) != n:
            raise TruncatedIndexError(f"{self.path}: short read at offset {offset}")
        with self._lock:
            self.bytes_read += n
        return data

    # -- lookup

    def column(self, name: str) -> ColumnSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownColumnError(name) from None

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def _global_id(self, column: str, bitmap_id: int) -> int:
        spec = self.column(column)
        if not 0 <= bitmap_id < spec.n_bitmaps:
            raise ValueError(f"bitmap {bitmap_id} out of range for column {column!r} ({spec.n_bitmaps} bitmaps)")
        return spec.first_bitmap + bitmap_id

    def _segment_offset(self, part: dict, gid: int) -> int:
        base = self._payload + part["offset"]
        (off,) = _U32.unpack(self._read(4, base + 4 * gid))
        return base + off

    def segment_words(self, column: str, bitmap_id: int) -> list[int]:
        """Compressed word count of the bitmap in each partition."""
        gid = self._global_id(column, bitmap_id)
        return [_U32.unpack(self._read(4, self._segment_offset(p, gid)))[0] for p in self.partitions]

    def load_bitmap(self, column: str, bitmap_id: int) -> EWAHBitmap:
        """The bitmap over all rows, stitched from its partition segments."""
        gid = self._global_id(column, bitmap_id)
        result: EWAHBitmap | None = None
        for part in self.partitions:
            at = self._segment_offset(part, gid)
            (count,) = _U32.unpack(self._read(4, at))
            words = array("I")
            words.frombytes(self._read(4 * count, at + 4))
            if sys.byteorder != "little":  # pragma: no cover
                words.byteswap()
            try:
                seg = EWAHBitmap.from_serialized(words, part["row_count"])
            except ValueError as exc:
                raise CorruptIndexError(f"{self.path}: bitmap {gid}: {exc}") from None
            result = seg if result is None else result.concat(seg)
        return result if result is not None else zeros(self.rows)


def open_index(path: str | os.PathLike) -> IndexReader:
    return IndexReader(path)


# -------------------------------------------------------------------- stats

@dataclass(frozen=True)
class BitmapStat:
    column: str
    bitmap: int
    compressed_words: int
    uncompressed_words: int
    set_bits: int

    @property
    def factor(self) -> float:
        if self.uncompressed_words == 0:
            return 0.0
        return 1.0 - self.compressed_words / self.uncompressed_words


@dataclass
class IndexStats:
    bitmaps: list[BitmapStat]
    columns: list[BitmapStat]  # per-column totals, bitmap = -1
    header_bytes: int
    rows: int

    @property
    def total_words(self) -> int:
        return sum(c.compressed_words for c in self.columns)

    @property
    def total_uncompressed_words(self) -> int:
        return sum(c.uncompressed_words for c in self.columns)


def index_stats(reader: IndexReader) -> IndexStats:
    """Per-bitmap sizes (words summed over partitions) and column totals."""
    n_words = words_for_bits(reader.rows)
    bitmaps, totals = [], []
    for spec in reader.columns:
        col = []
        for b in range(spec.n_bitmaps):
            c = sum(reader.segment_words(spec.name, b))
            card = reader.load_bitmap(spec.name, b).cardinality()
            col.append(BitmapStat(spec.name, b, c, n_words, card))
        bitmaps.extend(col)
        totals.append(BitmapStat(spec.name, -1, sum(s.compressed_words for s in col),
                                 n_words * spec.n_bitmaps, sum(s.set_bits for s in col)))
    return IndexStats(bitmaps, totals, reader.header_bytes, reader.rows)
