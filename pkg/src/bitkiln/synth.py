"""Synthetic fact tables."""

from __future__ import annotations

import numpy as np

from .table import FactTable, default_names

DEPENDENT_P = 0.2
DEPENDENT_FALLBACK = 100


def _to_table(cols: list[np.ndarray], nrows: int) -> FactTable:
    names = default_names(len(cols))
    if nrows == 0:
        return FactTable(names, [])
    text = [c.astype(str).tolist() for c in cols]
    return FactTable(names, list(zip(*text)))


def gen_uniform(rows: int, independent: int, r: int = 1, dependent: int = 0, seed: int = 0) -> FactTable:
    """Uniform columns plus columns derived from them.

    Independent column ``i`` (0-based) is uniform over ``1..100*r**i``.  For
    each dependent column, a row keeps each of its independent values with
    probability 0.2 and sums the kept ones; rows that keep none fall back to
    a uniform value in ``1..100``.  The columns are then permuted at random.
    """
    if rows < 0:
        raise ValueError("rows must be non-negative")
    if independent < 1:
        raise ValueError("need at least one independent column")
    if r not in (1, 2):
        raise ValueError("r must be 1 or 2")
    rng = np.random.default_rng(seed)
    base = [rng.integers(1, 100 * r ** i + 1, size=rows) for i in range(independent)]
    derived = []
    stacked = np.stack(base, axis=1) if rows else np.zeros((0, independent), dtype=np.int64)
    for _ in range(dependent):
        keep = rng.random((rows, independent)) < DEPENDENT_P
        value = (stacked * keep).sum(axis=1)
        fallback = rng.integers(1, DEPENDENT_FALLBACK + 1, size=rows)
        derived.append(np.where(keep.any(axis=1), value, fallback))
    cols = base + derived
    order = rng.permutation(len(cols))
    return _to_table([cols[i] for i in order], rows)


def zipf_pmf(value_range: int, s: float) -> np.ndarray:
    """Probabilities of values ``1..value_range`` proportional to ``v**-s``."""
    w = np.arange(1, value_range + 1, dtype=np.float64) ** -s
    return w / w.sum()


def gen_zipf(rows: int, dims: int, s: float = 1.0, value_range: int = 1000, seed: int = 0) -> FactTable:
    """Independent columns, each bounded-Zipf over ``1..value_range``."""
    if rows < 0:
        raise ValueError("rows must be non-negative")
    if dims < 1:
        raise ValueError("need at least one column")
    if s <= 0:
        raise ValueError("Zipf exponent must be positive")
    if value_range < 1:
        raise ValueError("value range must be at least 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(zipf_pmf(value_range, s))
    cdf[-1] = 1.0
    cols = [np.searchsorted(cdf, rng.random(rows), side="right") + 1 for _ in range(dims)]
    return _to_table(cols, rows)
