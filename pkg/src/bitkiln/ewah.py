"""EWAH: 32-bit word-aligned hybrid compressed bitmaps.

A compressed bitmap is a flat sequence of 32-bit words.  Marker words
describe a run of clean words (all zeros or all ones) followed by a number
of dirty literal words, which are stored verbatim right after the marker::

    bit 0       clean type (0 -> 0x00000000 words, 1 -> 0xFFFFFFFF words)
    bits 1-16   number of clean words in the run
    bits 17-31  number of literal words that follow the marker

Row ``r`` lives in uncompressed word ``r // 32`` at bit ``r % 32`` (least
significant bit first).  Bits past ``len(bitmap)`` in the last word are
always zero.  A bitmap always starts with a marker, even an empty one.
"""

from __future__ import annotations

import sys
from array import array
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

WORD_BITS = 32
ALL_ONES = 0xFFFFFFFF
MAX_RUN = (1 << 16) - 1
MAX_DIRTY = (1 << 15) - 1

_DIRTY = 2  # word class for literals; 0 and 1 are the clean types

if array("I").itemsize != 4:  # pragma: no cover - exotic platforms
    raise ImportError("bitkiln needs a 4-byte array('I') type")


def make_marker(clean_bit: int, run: int, dirty: int) -> int:
    return clean_bit | (run << 1) | (dirty << 17)


def marker_fields(word: int) -> tuple[int, int, int]:
    """Split a marker word into ``(clean_bit, run, dirty)``."""
    return word & 1, (word >> 1) & 0xFFFF, word >> 17


def words_for_bits(nbits: int) -> int:
    return (nbits + WORD_BITS - 1) // WORD_BITS


@dataclass(frozen=True)
class SizeStats:
    compressed_words: int
    uncompressed_words: int
    set_bits: int
    dirty_words: int

    @property
    def factor(self) -> float:
        """Compression factor ``1 - C/N``; 0 for an empty bitmap."""
        if self.uncompressed_words == 0:
            return 0.0
        return 1.0 - self.compressed_words / self.uncompressed_words


@dataclass
class OpStats:
    """Instrumentation for logical operations.

    ``word_visits`` counts merged runs plus literal words read; clean runs
    are combined without touching their words.
    """

    word_visits: int = 0
    operations: int = 0


class _Markers(NamedTuple):
    pos: np.ndarray     # index of each marker in the word stream
    bit: np.ndarray
    run: np.ndarray
    dirty: np.ndarray
    ustart: np.ndarray  # uncompressed word index where the clean run starts


def _ranges(lengths: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(l)`` for each ``l`` in ``lengths``."""
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    return np.arange(total, dtype=np.int64) - np.repeat(ends - lengths, lengths)


def _classify(words: np.ndarray) -> np.ndarray:
    cls = np.full(words.shape, _DIRTY, dtype=np.int8)
    cls[words == 0] = 0
    cls[words == ALL_ONES] = 1
    return cls


class EWAHBitmap:
    """Compressed bitmap with append-only construction.

    Build by appending whole words (``add_clean``, ``add_literal``,
    ``add_words``) and close it at an arbitrary bit length with ``seal``.
    A bitmap sealed on a partial word accepts no further appends.
    """

    __slots__ = ("_words", "_marker", "_nwords", "_size", "_card", "_table")

    def __init__(self) -> None:
        self._words = array("I", [0])
        self._marker = 0
        self._nwords = 0
        self._size = 0
        self._card: int | None = 0
        self._table: _Markers | None = None

    # ------------------------------------------------------------------ build

    def _check_aligned(self) -> None:
        if self._size != self._nwords * WORD_BITS:
            raise ValueError("bitmap is sealed on a partial word")

    def add_clean(self, bit: int, count: int) -> None:
        """Append ``count`` clean words of type ``bit``."""
        if count < 0:
            raise ValueError("clean run length must be non-negative")
        if count == 0:
            return
        self._check_aligned()
        bit = 1 if bit else 0
        words = self._words
        self._table = None
        self._nwords += count
        self._size += count * WORD_BITS
        if self._card is not None and bit:
            self._card += count * WORD_BITS
        m = words[self._marker]
        run = (m >> 1) & 0xFFFF
        if m >> 17 == 0 and (run == 0 or m & 1 == bit) and run < MAX_RUN:
            take = min(count, MAX_RUN - run)
            words[self._marker] = make_marker(bit, run + take, 0)
            count -= take
        while count:
            take = min(count, MAX_RUN)
            words.append(make_marker(bit, take, 0))
            self._marker = len(words) - 1
            count -= take

    def add_literal(self, word: int) -> None:
        """Append one uncompressed word; clean words are folded into runs."""
        if word == 0:
            self.add_clean(0, 1)
        elif word == ALL_ONES:
            self.add_clean(1, 1)
        else:
            self._check_aligned()
            self._push_dirty(word)

    def _push_dirty(self, word: int) -> None:
        words = self._words
        self._table = None
        if words[self._marker] >> 17 == MAX_DIRTY:
            words.append(0)
            self._marker = len(words) - 1
        words[self._marker] += 1 << 17
        words.append(word)
        self._nwords += 1
        self._size += WORD_BITS
        if self._card is not None:
            self._card += bin(word).count("1")

    def _extend_dirty(self, chunk: array) -> None:
        """Append literal words that are known to be dirty."""
        n = len(chunk)
        words = self._words
        self._table = None
        self._card = None
        self._nwords += n
        self._size += n * WORD_BITS
        start = 0
        while start < n:
            room = MAX_DIRTY - (words[self._marker] >> 17)
            if room == 0:
                words.append(0)
                self._marker = len(words) - 1
                room = MAX_DIRTY
            take = min(room, n - start)
            words[self._marker] += take << 17
            words.extend(chunk[start:start + take])
            start += take

    def add_words(self, chunk: Sequence[int] | np.ndarray) -> None:
        """Append a block of uncompressed words, compressing as it goes."""
        w = np.asarray(chunk, dtype=np.uint32)
        if w.size == 0:
            return
        self._check_aligned()
        cls = _classify(w)
        cuts = (np.flatnonzero(np.diff(cls)) + 1).tolist()
        for s, e in zip([0, *cuts], [*cuts, w.size]):
            kind = int(cls[s])
            if kind == _DIRTY:
                self._extend_dirty(array("I", w[s:e].tobytes()))
            else:
                self.add_clean(kind, e - s)

    def seal(self, nbits: int) -> "EWAHBitmap":
        """Fix the logical length to ``nbits``, appending zero words if needed.

        Bits of the last word beyond ``nbits`` must already be zero.
        """
        needed = words_for_bits(nbits)
        if needed < self._nwords:
            raise ValueError("cannot seal below the appended word count")
        self.add_clean(0, needed - self._nwords)
        tail = nbits % WORD_BITS
        if tail and self._last_word() >> tail:
            raise ValueError("padding bits beyond the logical length are set")
        self._size = nbits
        return self

    def _last_word(self) -> int:
        m = self._words[self._marker]
        dirty = m >> 17
        if dirty:
            return self._words[self._marker + dirty]
        return ALL_ONES if m & 1 and (m >> 1) & 0xFFFF else 0

    def concat(self, other: "EWAHBitmap") -> "EWAHBitmap":
        """Append ``other``'s bits in place; ``self`` must be word-aligned."""
        self._check_aligned()
        ow = other._words
        for bit, run, start, dirty in other._runs():
            self.add_clean(bit, run)
            if dirty:
                self._extend_dirty(ow[start:start + dirty])
        self._size += other._size - other._nwords * WORD_BITS
        return self

    # --------------------------------------------------------------- factories

    @classmethod
    def from_words(cls, words: Sequence[int] | np.ndarray, nbits: int | None = None) -> "EWAHBitmap":
        """Compress uncompressed words; ``nbits`` defaults to all of them."""
        w = np.asarray(words, dtype=np.uint32)
        nbits = w.size * WORD_BITS if nbits is None else nbits
        if words_for_bits(nbits) != w.size:
            raise ValueError("nbits does not match the number of words")
        if nbits % WORD_BITS and int(w[-1]) >> (nbits % WORD_BITS):
            raise ValueError("padding bits beyond the logical length are set")
        c = _classify(w)
        return _encode(c, np.ones(w.size, dtype=np.int64), w[c == _DIRTY], nbits)

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> "EWAHBitmap":
        """Compress a sequence of 0/1 values (or booleans)."""
        b = np.asarray(bits if isinstance(bits, np.ndarray) else list(bits), dtype=bool)
        nbits = int(b.size)
        pad = (-nbits) % WORD_BITS
        if pad:
            b = np.concatenate([b, np.zeros(pad, dtype=bool)])
        packed = np.packbits(b, bitorder="little").view("<u4")
        return cls.from_words(packed, nbits)

    @classmethod
    def from_positions(cls, positions: Iterable[int], nbits: int) -> "EWAHBitmap":
        """Bitmap of length ``nbits`` with the given ascending positions set."""
        p = np.fromiter(positions, dtype=np.int64)
        if p.size:
            if p[0] < 0 or p[-1] >= nbits:
                raise ValueError(f"positions must lie in [0, {nbits})")
            if p.size > 1 and np.any(np.diff(p) <= 0):
                raise ValueError("positions must be strictly ascending")
        words = np.zeros(words_for_bits(nbits), dtype=np.uint32)
        np.bitwise_or.at(words, p >> 5, np.left_shift(np.uint32(1), (p & 31).astype(np.uint32)))
        return cls.from_words(words, nbits)

    @classmethod
    def from_sparse_words(cls, index: np.ndarray, values: np.ndarray, nbits: int) -> "EWAHBitmap":
        """Bitmap whose only non-zero words are ``values`` at strictly ascending ``index``.

        Zero gaps become clean runs directly, so the cost depends on the
        number of non-zero words, not on ``nbits``.
        """
        index = np.asarray(index, dtype=np.int64)
        values = np.asarray(values, dtype=np.uint32)
        if index.size and (index[-1] >= words_for_bits(nbits) or index[0] < 0):
            raise ValueError("word index out of range")
        if index.size > 1 and np.any(np.diff(index) <= 0):
            raise ValueError("word indices must be strictly ascending")
        gaps = np.diff(index, prepend=-1) - 1
        tok_cls = np.empty(2 * index.size, dtype=np.int8)
        tok_len = np.ones(2 * index.size, dtype=np.int64)
        tok_cls[0::2] = 0
        tok_len[0::2] = gaps
        v_cls = _classify(values)
        tok_cls[1::2] = v_cls
        bm = _encode(tok_cls, tok_len, values[v_cls == _DIRTY], words_for_bits(nbits) * WORD_BITS)
        tail = nbits % WORD_BITS
        if tail and bm._last_word() >> tail:
            raise ValueError("padding bits beyond the logical length are set")
        bm._size = nbits
        return bm

    @classmethod
    def from_serialized(cls, words: array, nbits: int) -> "EWAHBitmap":
        """Adopt an encoded word stream, checking that its markers chain up.

        The markers must reach exactly the end of the stream and cover
        ``ceil(nbits / 32)`` words.
        """
        if len(words) == 0:
            raise ValueError("empty word stream")
        bm = cls()
        bm._words = words
        bm._size = nbits
        bm._card = None
        table = bm._markers()
        end = int(table.pos[-1] + 1 + table.dirty[-1])
        covered = int(table.ustart[-1] + table.run[-1] + table.dirty[-1])
        if end != len(words) or covered != words_for_bits(nbits):
            raise ValueError("word stream does not match the declared bit length")
        bm._marker = int(table.pos[-1])
        bm._nwords = covered
        tail = nbits % WORD_BITS
        if tail and bm._last_word() >> tail:
            raise ValueError("padding bits beyond the logical length are set")
        return bm

    # ---------------------------------------------------------------- access

    def __len__(self) -> int:
        return self._size

    @property
    def words(self) -> array:
        """The compressed word stream (do not mutate)."""
        return self._words

    def _runs(self) -> Iterator[tuple[int, int, int, int]]:
        """Yield ``(clean_bit, run, literal_start, literal_count)`` per marker."""
        words = self._words
        pos, n = 0, len(words)
        while pos < n:
            m = words[pos]
            dirty = m >> 17
            yield m & 1, (m >> 1) & 0xFFFF, pos + 1, dirty
            pos += 1 + dirty

    def _markers(self) -> _Markers:
        if self._table is None:
            words = self._words
            pos = []
            i, n = 0, len(words)
            while i < n:
                pos.append(i)
                i += 1 + (words[i] >> 17)
            p = np.array(pos, dtype=np.int64)
            m = np.frombuffer(words, dtype=np.uint32)[p].astype(np.int64)
            run = (m >> 1) & 0xFFFF
            dirty = m >> 17
            span = run + dirty
            self._table = _Markers(p, (m & 1).astype(np.int8), run, dirty, np.cumsum(span) - span)
        return self._table

    def _segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Non-empty runs as ``(start, length, kind, source)`` arrays.

        ``kind`` is 0/1 for clean runs and 2 for literals.  ``source`` indexes
        the word stream extended by two constant words (0, ALL_ONES): the
        first literal of a dirty run, or the constant slot of a clean run.
        """
        t = self._markers()
        m = t.pos.size
        start = np.empty(2 * m, dtype=np.int64)
        length = np.empty(2 * m, dtype=np.int64)
        kind = np.empty(2 * m, dtype=np.int8)
        src = np.empty(2 * m, dtype=np.int64)
        start[0::2] = t.ustart
        start[1::2] = t.ustart + t.run
        length[0::2] = t.run
        length[1::2] = t.dirty
        kind[0::2] = t.bit
        kind[1::2] = _DIRTY
        src[0::2] = len(self._words) + t.bit.astype(np.int64)
        src[1::2] = t.pos + 1
        keep = length > 0
        return start[keep], length[keep], kind[keep], src[keep]

    def _extended(self) -> np.ndarray:
        ext = np.empty(len(self._words) + 2, dtype=np.uint32)
        ext[:-2] = np.frombuffer(self._words, dtype=np.uint32)
        ext[-2:] = (0, ALL_ONES)
        return ext

    def _literals(self) -> np.ndarray:
        mask = np.ones(len(self._words), dtype=bool)
        mask[self._markers().pos] = False
        return np.frombuffer(self._words, dtype=np.uint32)[mask]

    def to_words(self) -> np.ndarray:
        """Uncompressed words as a ``uint32`` array."""
        start, length, kind, src = self._segments()
        step = np.repeat((kind == _DIRTY).astype(np.int64), length)
        idx = np.repeat(src, length) + _ranges(length) * step
        return self._extended()[idx]

    def to_bits(self) -> np.ndarray:
        """Uncompressed bits as a boolean array of length ``len(self)``."""
        w = self.to_words().astype("<u4")
        bits = np.unpackbits(w.view(np.uint8), bitorder="little")
        return bits[: self._size].astype(bool)

    def __iter__(self) -> Iterator[int]:
        """Ascending positions of set bits."""
        return iter(self.positions().tolist())

    def positions(self) -> np.ndarray:
        """Ascending positions of set bits as an ``int64`` array."""
        start, length, kind, src = self._segments()
        parts = []
        lit = kind == _DIRTY
        if lit.any():
            words = np.frombuffer(self._words, dtype=np.uint32)
            r = _ranges(length[lit])
            idx = np.repeat(src[lit], length[lit]) + r
            uword = np.repeat(start[lit], length[lit]) + r
            bits = np.unpackbits(words[idx].astype("<u4").view(np.uint8), bitorder="little")
            hit = np.flatnonzero(bits)
            parts.append(uword[hit >> 5] * WORD_BITS + (hit & 31))
        ones = kind == 1
        if ones.any():
            nb = length[ones] * WORD_BITS
            parts.append(np.repeat(start[ones] * WORD_BITS, nb) + _ranges(nb))
        if not parts:
            return np.zeros(0, dtype=np.int64)
        out = np.concatenate(parts)
        if len(parts) > 1:
            out.sort()
        return out

    def cardinality(self) -> int:
        """Number of set bits."""
        if self._card is None:
            t = self._markers()
            ones = int(t.run[t.bit == 1].sum()) * WORD_BITS
            self._card = ones + int(np.bitwise_count(self._literals()).sum())
        return self._card

    def dirty_words(self) -> int:
        return int(self._markers().dirty.sum())

    def nonzero_words(self) -> int:
        """Uncompressed words that are not all-zero (dirty plus clean ones)."""
        t = self._markers()
        return int(t.dirty.sum() + t.run[t.bit == 1].sum())

    def size_stats(self) -> SizeStats:
        return SizeStats(
            compressed_words=len(self._words),
            uncompressed_words=words_for_bits(self._size),
            set_bits=self.cardinality(),
            dirty_words=self.dirty_words(),
        )

    def serialize(self) -> bytes:
        """Little-endian word stream."""
        if sys.byteorder == "little":
            return self._words.tobytes()
        tmp = array("I", self._words)  # pragma: no cover
        tmp.byteswap()  # pragma: no cover
        return tmp.tobytes()  # pragma: no cover

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EWAHBitmap):
            return NotImplemented
        return self._size == other._size and self._words == other._words

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"EWAHBitmap(bits={self._size}, words={len(self._words)})"

    def __and__(self, other: "EWAHBitmap") -> "EWAHBitmap":
        return logical_op("and", self, other)

    def __or__(self, other: "EWAHBitmap") -> "EWAHBitmap":
        return logical_op("or", self, other)

    def __xor__(self, other: "EWAHBitmap") -> "EWAHBitmap":
        return logical_op("xor", self, other)

    def __sub__(self, other: "EWAHBitmap") -> "EWAHBitmap":
        return logical_op("andnot", self, other)


def zeros(nbits: int) -> EWAHBitmap:
    return EWAHBitmap().seal(nbits)


def _encode(tok_cls: np.ndarray, tok_len: np.ndarray, literals: np.ndarray, nbits: int) -> EWAHBitmap:
    """Assemble the canonical word stream for a token sequence.

    Tokens are ``(class, length)`` pairs in row order; class 0/1 are clean
    runs and class 2 tokens are literal words whose values, in order, are
    ``literals``.  The output is word-for-word what the append-only builder
    produces for the same input.
    """
    bm = EWAHBitmap()
    keep = tok_len > 0
    tok_cls, tok_len = tok_cls[keep], tok_len[keep]
    if tok_cls.size == 0:
        return bm.seal(nbits)
    starts = np.concatenate([[0], np.flatnonzero(tok_cls[1:] != tok_cls[:-1]) + 1])
    g_cls = tok_cls[starts].astype(np.int64)
    g_len = np.add.reduceat(tok_len.astype(np.int64), starts)

    # split groups at counter capacity
    cap = np.where(g_cls == _DIRTY, MAX_DIRTY, MAX_RUN)
    nsplit = (g_len + cap - 1) // cap
    item_group = np.repeat(np.arange(g_cls.size), nsplit)
    item_rank = _ranges(nsplit)
    item_cls = g_cls[item_group]
    item_cap = cap[item_group]
    item_len = np.minimum(item_cap, g_len[item_group] - item_rank * item_cap)
    # clean runs always open a marker; a literal chunk rides on the preceding
    # marker unless that one is already full
    opens = (item_cls != _DIRTY) | (item_rank > 0)
    if not opens[0]:
        opens[0] = True
    mid = np.cumsum(opens) - 1
    nm = int(mid[-1]) + 1
    m_bit = np.zeros(nm, dtype=np.int64)
    m_run = np.zeros(nm, dtype=np.int64)
    m_dirty = np.zeros(nm, dtype=np.int64)
    clean = item_cls != _DIRTY
    m_bit[mid[clean]] = item_cls[clean]
    m_run[mid[clean]] = item_len[clean]
    m_dirty[mid[~clean]] = item_len[~clean]

    m_pos = np.arange(nm, dtype=np.int64) + np.cumsum(m_dirty) - m_dirty
    out = np.empty(nm + int(m_dirty.sum()), dtype=np.uint32)
    is_lit = np.ones(out.size, dtype=bool)
    is_lit[m_pos] = False
    out[m_pos] = (m_bit | (m_run << 1) | (m_dirty << 17)).astype(np.uint32)
    out[is_lit] = literals
    span = m_run + m_dirty

    bm._words = array("I", out.tobytes())
    bm._marker = int(m_pos[-1])
    bm._nwords = int(span.sum())
    bm._size = bm._nwords * WORD_BITS
    bm._card = None
    table = _Markers(m_pos, m_bit.astype(np.int8), m_run, m_dirty, np.cumsum(span) - span)
    extended = words_for_bits(nbits) > bm._nwords
    bm.seal(nbits)
    if not extended:
        bm._table = table
    return bm


# ------------------------------------------------------------------ logical ops

_INT_OPS = {
    "and": lambda a, b: a & b,
    "or": lambda a, b: a | b,
    "xor": lambda a, b: a ^ b,
    "andnot": lambda a, b: a & ~b & ALL_ONES,
}

_NP_OPS = {
    "and": np.bitwise_and,
    "or": np.bitwise_or,
    "xor": np.bitwise_xor,
    "andnot": lambda a, b: np.bitwise_and(a, np.invert(b)),
}

OPERATIONS = tuple(_INT_OPS)

# A clean run facing literals either decides the result by itself (the
# absorbing value) or lets the other side through (-1).
_ABSORB = {
    # op: (left 0, left 1, right 0, right 1)
    "and": (0, -1, 0, -1),
    "or": (-1, 1, -1, 1),
    "xor": (-1, -1, -1, -1),
    "andnot": (0, -1, -1, 0),
}

_CLEAN_TABLES = {
    op: np.array([[_INT_OPS[op](x * ALL_ONES, y * ALL_ONES) & 1 for y in (0, 1)] for x in (0, 1)],
                 dtype=np.int8)
    for op in _INT_OPS
}


def logical_op(op: str, a: EWAHBitmap, b: EWAHBitmap, stats: OpStats | None = None) -> EWAHBitmap:
    """Compute ``a <op> b`` for op in ``and``, ``or``, ``xor``, ``andnot``.

    The two run lists are merged.  Clean-against-clean runs and absorbing
    clean runs (zeros for AND, ones for OR, ...) give clean output without
    reading any words, so the work is bounded by the number of runs plus the
    literal words that meet a non-absorbing run.
    """
    if op not in _INT_OPS:
        raise ValueError(f"unknown operation {op!r}")
    nbits = len(a)
    if nbits != len(b):
        raise ValueError(f"length mismatch: {nbits} vs {len(b)} bits")
    if stats is not None:
        stats.operations += 1
    total = words_for_bits(nbits)
    if total == 0:
        return zeros(0)
    sa, _, ka, srca = a._segments()
    sb, _, kb, srcb = b._segments()
    cuts = np.union1d(sa, sb)
    tail = nbits % WORD_BITS
    if tail and cuts[-1] != total - 1:
        cuts = np.append(cuts, total - 1)
    lens = np.diff(np.append(cuts, total))
    ia = np.searchsorted(sa, cuts, side="right") - 1
    ib = np.searchsorted(sb, cuts, side="right") - 1
    ka, kb = ka[ia], kb[ib]
    a_dirty, b_dirty = ka == _DIRTY, kb == _DIRTY
    a_src = srca[ia] + np.where(a_dirty, cuts - sa[ia], 0)
    b_src = srcb[ib] + np.where(b_dirty, cuts - sb[ib], 0)

    # result class per merged run: 0/1 clean, 2 needs evaluation
    out_cls = np.full(cuts.size, _DIRTY, dtype=np.int8)
    both_clean = ~a_dirty & ~b_dirty
    out_cls[both_clean] = _CLEAN_TABLES[op][ka[both_clean], kb[both_clean]]
    l0, l1, r0, r1 = _ABSORB[op]
    absorbed = np.full(cuts.size, -1, dtype=np.int8)
    left_clean = ~a_dirty & b_dirty
    right_clean = a_dirty & ~b_dirty
    absorbed[left_clean & (ka == 0)] = l0
    absorbed[left_clean & (ka == 1)] = l1
    absorbed[right_clean & (kb == 0)] = r0
    absorbed[right_clean & (kb == 1)] = r1
    hit = absorbed >= 0
    out_cls[hit] = absorbed[hit]
    if tail:
        out_cls[-1] = _DIRTY  # evaluated explicitly so it can be masked

    lit = out_cls == _DIRTY
    lit_len = lens[lit]
    r = _ranges(lit_len)
    a_step = np.repeat(a_dirty[lit], lit_len)
    b_step = np.repeat(b_dirty[lit], lit_len)
    values = _NP_OPS[op](
        a._extended()[np.repeat(a_src[lit], lit_len) + r * a_step],
        b._extended()[np.repeat(b_src[lit], lit_len) + r * b_step],
    ).astype(np.uint32)
    if tail:
        values[-1] &= np.uint32((1 << tail) - 1)

    if stats is not None:
        stats.word_visits += int(cuts.size + a_step.sum() + b_step.sum())

    # one token per clean run, one per evaluated word
    ntok = np.where(lit, lens, 1)
    tok_off = np.cumsum(ntok) - ntok
    tok_cls = np.empty(int(ntok.sum()), dtype=np.int8)
    tok_len = np.ones(tok_cls.size, dtype=np.int64)
    tok_cls[tok_off[~lit]] = out_cls[~lit]
    tok_len[tok_off[~lit]] = lens[~lit]
    v_cls = _classify(values)
    tok_cls[np.repeat(tok_off[lit], lit_len) + r] = v_cls
    return _encode(tok_cls, tok_len, values[v_cls == _DIRTY], nbits)


def and_many(bitmaps: Sequence[EWAHBitmap], stats: OpStats | None = None) -> EWAHBitmap:
    """AND of one or more bitmaps, smallest first."""
    if not bitmaps:
        raise ValueError("need at least one bitmap")
    ordered = sorted(bitmaps, key=lambda bm: len(bm.words))
    acc = ordered[0]
    for bm in ordered[1:]:
        acc = logical_op("and", acc, bm, stats)
    return acc


def or_many(bitmaps: Sequence[EWAHBitmap], stats: OpStats | None = None) -> EWAHBitmap:
    """OR of one or more bitmaps."""
    if not bitmaps:
        raise ValueError("need at least one bitmap")
    acc = bitmaps[0]
    for bm in bitmaps[1:]:
        acc = logical_op("or", acc, bm, stats)
    return acc
