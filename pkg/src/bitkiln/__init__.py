"""Compressed bitmap indexes for delimited fact tables."""

__version__ = "0.1.0"

from .ewah import EWAHBitmap, logical_op
from .index_store import IndexConfig, build_index, open_index
from .query import evaluate, parse_query

__all__ = [
    "EWAHBitmap",
    "IndexConfig",
    "__version__",
    "build_index",
    "evaluate",
    "logical_op",
    "open_index",
    "parse_query",
]
