"""k-of-N attribute encoding.

Each distinct value of a column gets a code: a set of ``k`` bitmap
positions out of ``N``.  An equality predicate then ANDs those ``k``
bitmaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterator, Sequence

from .gray import gray_key

ALPHABETIC = "alpha"
GRAY = "gray"
STRATEGIES = (ALPHABETIC, GRAY)

GRAY_CODE_LIMIT = 1 << 24

# (largest cardinality, largest k allowed for it)
_K_CAPS = ((5, 1), (21, 2), (85, 3))


class UnknownValueError(KeyError):
    pass


def bitmaps_needed(cardinality: int, k: int) -> int:
    """Smallest ``N >= k`` with ``C(N, k) >= cardinality``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if cardinality <= 1:
        return k
    if k == 1:
        return cardinality
    # C(N, k) >= C(N, 2) once N > k, so the 2-of-N root bounds the search
    lo, hi = k, max(k + 1, 2)
    while comb(hi, k) < cardinality:
        lo, hi = hi, hi * 2
    while lo < hi:
        mid = (lo + hi) // 2
        if comb(mid, k) >= cardinality:
            hi = mid
        else:
            lo = mid + 1
    return lo


def max_allowed_k(cardinality: int) -> int | None:
    """Cap on k for small columns; ``None`` means no cap."""
    for limit, cap in _K_CAPS:
        if cardinality <= limit:
            return cap
    return None


def effective_k(cardinality: int, requested: int) -> int:
    cap = max_allowed_k(cardinality)
    return requested if cap is None else min(requested, cap)


def alphabetic_codes(n_bitmaps: int, k: int) -> Iterator[tuple[int, ...]]:
    """k-subsets of ``range(n_bitmaps)`` in lexicographic order of positions.

    Each step finds the rightmost position that can still move, bumps it
    and packs the following positions right after it.
    """
    if k < 1 or n_bitmaps < k:
        return
    a = list(range(k))
    while True:
        yield tuple(a)
        i = k - 1
        while i >= 0 and a[i] == n_bitmaps - k + i:
            i -= 1
        if i < 0:
            return
        a[i] += 1
        for j in range(i + 1, k):
            a[j] = a[j - 1] + 1


def gray_codes(n_bitmaps: int, k: int, limit: int = GRAY_CODE_LIMIT) -> list[tuple[int, ...]]:
    """All k-of-N codes sorted by Gray order of their N-bit rows."""
    total = comb(n_bitmaps, k)
    if total > limit:
        raise ValueError(f"gray allocation needs {total} codes, above the limit of {limit}")
    return sorted(combinations(range(n_bitmaps), k), key=lambda c: gray_key(c, n_bitmaps))


def code_to_row(code: Sequence[int], n_bitmaps: int) -> str:
    """Render a code as a bit string, position 0 leftmost."""
    row = ["0"] * n_bitmaps
    for p in code:
        row[p] = "1"
    return "".join(row)


@dataclass
class ColumnDictionary:
    """Values of one column in byte order, each mapped to a distinct code."""

    values: list[str]
    codes: list[tuple[int, ...]]
    k: int
    n_bitmaps: int
    strategy: str = ALPHABETIC
    _lookup: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.values) != len(self.codes):
            raise ValueError("values and codes differ in length")
        self._lookup = {v: i for i, v in enumerate(self.values)}

    @property
    def cardinality(self) -> int:
        return len(self.values)

    def value_id(self, value: str) -> int:
        try:
            return self._lookup[value]
        except KeyError:
            raise UnknownValueError(value) from None

    def encode(self, value: str) -> tuple[int, ...]:
        return self.codes[self.value_id(value)]

    def __contains__(self, value: object) -> bool:
        return value in self._lookup

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "codes": [list(c) for c in self.codes],
            "k": self.k,
            "n_bitmaps": self.n_bitmaps,
            "strategy": self.strategy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnDictionary":
        return cls(
            values=list(d["values"]),
            codes=[tuple(c) for c in d["codes"]],
            k=int(d["k"]),
            n_bitmaps=int(d["n_bitmaps"]),
            strategy=d.get("strategy", ALPHABETIC),
        )


def _byte_key(value: str) -> bytes:
    return value.encode("utf-8", "surrogateescape")


def allocate_codes(values: Sequence[str], k: int, n_bitmaps: int, strategy: str = ALPHABETIC) -> ColumnDictionary:
    """Assign codes to ``values`` (strictly ascending in byte order)."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown allocation strategy {strategy!r}")
    values = list(values)
    for prev, cur in zip(values, values[1:]):
        if _byte_key(prev) >= _byte_key(cur):
            raise ValueError("values must be strictly ascending in byte order")
    available = comb(n_bitmaps, k)
    if len(values) > available:
        raise ValueError(f"{len(values)} values do not fit in {k}-of-{n_bitmaps} ({available} codes)")
    if strategy == GRAY:
        codes = gray_codes(n_bitmaps, k)[: len(values)]
    else:
        gen = alphabetic_codes(n_bitmaps, k)
        codes = [next(gen) for _ in values]
    return ColumnDictionary(values, codes, k, n_bitmaps, strategy)


def build_dictionary(values: Sequence[str], requested_k: int = 1, strategy: str = ALPHABETIC) -> ColumnDictionary:
    """Pick k and N for the column, then allocate codes to its sorted values."""
    ordered = sorted(set(values), key=_byte_key)
    card = len(ordered)
    k = effective_k(max(card, 1), requested_k)
    n = bitmaps_needed(card, k) if card else 0
    if card == 0:
        return ColumnDictionary([], [], k, 0, strategy)
    return allocate_codes(ordered, k, n, strategy)
