"""Gray-code order on bit rows.

Row ``a`` precedes row ``b`` when, at the first index ``j`` where they
differ, ``a[j]`` equals the parity of the ones in the shared prefix.  That
is the same as comparing the running XOR (inverse Gray transform) of the
two rows lexicographically, which is what the key functions use.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def compare_rows_gray(a: Sequence[int], b: Sequence[int]) -> int:
    """Three-way comparison (-1, 0, 1) of two equal-length bit rows."""
    if len(a) != len(b):
        raise ValueError(f"row length mismatch: {len(a)} vs {len(b)}")
    parity = 0
    for x, y in zip(a, b):
        x, y = int(bool(x)), int(bool(y))
        if x != y:
            return -1 if x == parity else 1
        parity ^= x
    return 0


def gray_key(positions: Sequence[int], length: int) -> tuple[int, ...]:
    """Sort key for a row given as its ascending set positions.

    Each set bit toggles the running parity.  The toggle points alternate
    between pushing the row up (even index) and down (odd index), and the
    terminator stands for a virtual toggle at ``length``.
    """
    key = [-p if i % 2 == 0 else p for i, p in enumerate(positions)]
    key.append(-length if len(positions) % 2 == 0 else length)
    return tuple(key)


def gray_sort_indices(rows: np.ndarray, descending: bool = False) -> np.ndarray:
    """Stable argsort of a 2-D 0/1 array by Gray order."""
    rows = np.asarray(rows, dtype=np.uint8)
    if rows.ndim != 2:
        raise ValueError("expected a 2-D array of bit rows")
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    prefix = np.bitwise_xor.accumulate(rows, axis=1)
    if descending:
        prefix = 1 - prefix
    # lexsort treats the last key as primary
    return np.lexsort(prefix.T[::-1])


def sort_bit_rows(rows: Sequence[Sequence[int]], strategy: str = "gray") -> list[tuple[int, ...]]:
    """Sort bit rows ascending by ``lex`` or ``gray`` order (stable)."""
    as_tuples = [tuple(int(bool(x)) for x in r) for r in rows]
    if strategy == "lex":
        return sorted(as_tuples)
    if strategy == "gray":
        if not as_tuples:
            return []
        order = gray_sort_indices(np.array(as_tuples, dtype=np.uint8))
        return [as_tuples[i] for i in order]
    raise ValueError(f"unknown strategy {strategy!r}")
