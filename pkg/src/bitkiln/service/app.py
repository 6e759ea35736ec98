"""HTTP front end over the index engine.

All paths in requests are relative to the data root (``BITKILN_DATA_ROOT``,
default: the working directory) and may not escape it.
"""

from __future__ import annotations

import contextlib
import os
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..index_store import IndexFileError, IndexReader, UnknownColumnError
from ..pipeline import IndexOptions, index_table, stats_records
from ..query import QuerySyntaxError, evaluate
from ..table import RaggedRowError
from .models import (
    ColumnInfo,
    HeaderInfo,
    Health,
    IndexRequest,
    IndexResponse,
    QueryRequest,
    QueryResponse,
    StatsRecord,
    StatsResponse,
)


class _ReaderCache:
    """Open readers keyed by path, reopened when the file changes."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._readers: dict[str, tuple[tuple[int, int], IndexReader]] = {}

    def get(self, path: Path) -> IndexReader:
        st = path.stat()
        stamp = (st.st_mtime_ns, st.st_size)
        key = str(path)
        with self._lock:
            hit = self._readers.get(key)
            if hit and hit[0] == stamp:
                return hit[1]
            reader = IndexReader(path)
            if hit:
                hit[1].close()
            self._readers[key] = (stamp, reader)
            return reader

    def clear(self) -> None:
        with self._lock:
            for _, r in self._readers.values():
                r.close()
            self._readers.clear()


def create_app(data_root: str | os.PathLike | None = None) -> FastAPI:
    root = Path(data_root or os.environ.get("BITKILN_DATA_ROOT") or os.getcwd()).resolve()
    readers = _ReaderCache()

    @contextlib.asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        readers.clear()

    app = FastAPI(title="bitkiln", version=__version__, lifespan=lifespan)
    app.state.data_root = root
    app.state.readers = readers

    def resolve(rel: str, must_exist: bool = True) -> Path:
        p = (root / rel).resolve()
        if p != root and root not in p.parents:
            raise HTTPException(status_code=400, detail=f"path {rel!r} escapes the data root")
        if must_exist and not p.is_file():
            raise HTTPException(status_code=404, detail=f"no such file: {rel}")
        return p

    def reader_for(rel: str) -> IndexReader:
        path = resolve(rel)
        try:
            return readers.get(path)
        except IndexFileError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None

    @app.get("/health", response_model=Health)
    def health() -> Health:
        return Health(version=__version__, data_root=str(root))

    @app.get("/header", response_model=HeaderInfo)
    def header(index: str) -> HeaderInfo:
        r = reader_for(index)
        return HeaderInfo(
            path=index,
            rows=r.rows,
            total_bitmaps=r.total_bitmaps,
            partitions=len(r.partitions),
            header_bytes=r.header_bytes,
            columns=[
                ColumnInfo(name=c.name, source=c.source, cardinality=c.dictionary.cardinality,
                           k=c.dictionary.k, n_bitmaps=c.n_bitmaps, allocation=c.dictionary.strategy)
                for c in r.columns
            ],
        )

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest) -> QueryResponse:
        r = reader_for(req.index)
        try:
            res = evaluate(r, req.query)
        except QuerySyntaxError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except UnknownColumnError as exc:
            raise HTTPException(status_code=404, detail=f"unknown column {exc.args[0]!r}") from None
        rows = None
        if req.include_rows:
            ids = res.row_ids if req.limit is None else res.row_ids[: req.limit]
            rows = ids.tolist()
        return QueryResponse(count=res.count, row_ids=rows, warnings=res.warnings,
                             bitmaps_requested=res.bitmaps_requested, bitmaps_loaded=res.bitmaps_loaded)

    @app.get("/stats", response_model=StatsResponse)
    def stats(index: str) -> StatsResponse:
        r = reader_for(index)
        return StatsResponse(path=index, header_bytes=r.header_bytes,
                             records=[StatsRecord(**rec) for rec in stats_records(r)])

    @app.post("/index", response_model=IndexResponse)
    def build(req: IndexRequest) -> IndexResponse:
        src = resolve(req.table)
        dest = resolve(req.output, must_exist=False)
        opts = IndexOptions(**req.model_dump(exclude={"table", "output"}))
        try:
            summary = index_table(src, dest, opts)
        except (ValueError, RaggedRowError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return IndexResponse(path=req.output, **{k: v for k, v in summary.items() if k != "touches"})

    return app
