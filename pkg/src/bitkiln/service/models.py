"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class Health(BaseModel):
    status: str = "ok"
    version: str
    data_root: str


class ColumnInfo(BaseModel):
    name: str
    source: int
    cardinality: int
    k: int
    n_bitmaps: int
    allocation: str


class HeaderInfo(BaseModel):
    path: str
    rows: int
    total_bitmaps: int
    partitions: int
    header_bytes: int
    columns: list[ColumnInfo]


class QueryRequest(BaseModel):
    index: str = Field(description="index path relative to the data root")
    query: str = Field(description="e.g. 'd0=3 & (d1=7 | d1=8)'")
    include_rows: bool = False
    limit: Optional[int] = Field(default=None, ge=0)


class QueryResponse(BaseModel):
    count: int
    row_ids: Optional[list[int]] = None
    warnings: list[str] = []
    bitmaps_requested: int
    bitmaps_loaded: int


class StatsRecord(BaseModel):
    column: str
    bitmap: Union[int, Literal["total"]]
    C: int
    N: int
    factor: float
    set_bits: int


class StatsResponse(BaseModel):
    path: str
    header_bytes: int
    records: list[StatsRecord]


class IndexRequest(BaseModel):
    table: str = Field(description="input table path relative to the data root")
    output: str = Field(description="index path relative to the data root")
    k: int = Field(default=1, ge=1)
    allocation: Literal["alpha", "gray"] = "alpha"
    sort: Literal["lex", "gray", "group", "shuffle", "none"] = "none"
    blocks: int = Field(default=1, ge=1)
    column_order: Optional[str] = None
    partition_bytes: int = Field(default=256 * 1024 * 1024, ge=64)
    delimiter: str = Field(default=",", min_length=1, max_length=1)
    seed: int = 0
    header: bool = False
    columns: Optional[str] = None


class IndexResponse(BaseModel):
    path: str
    rows: int
    columns: list[str]
    bitmaps: int
    partitions: int
    bytes: int
    histogram_reused: bool
