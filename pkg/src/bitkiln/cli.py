"""Command-line interface.

Every option can also be set through an environment variable named
``BITKILN_<OPTION>`` (for example ``BITKILN_K=2``); flags win.
"""

from __future__ import annotations

import json
import sys

import click

from . import __version__
from .index_store import DEFAULT_PARTITION_BYTES, IndexFileError, UnknownColumnError, open_index
from .kofn import UnknownValueError
from .pipeline import IndexOptions, atomic_output, index_table, sort_table_file, stats_csv, stats_records
from .query import QuerySyntaxError, evaluate
from .sorting import DEFAULT_MEMORY_BYTES
from .synth import gen_uniform, gen_zipf
from .table import RaggedRowError, write_table

SORTS = click.Choice(["lex", "gray", "group", "shuffle", "none"])
ALLOCATIONS = click.Choice(["alpha", "gray"])
_USER_ERRORS = (ValueError, RaggedRowError, IndexFileError, UnknownColumnError, UnknownValueError, OSError)


def _opt(*decls, env: str, **kw):
    return click.option(*decls, envvar=f"BITKILN_{env}", show_default=True, show_envvar=True, **kw)


k_opt = _opt("--k", "k", env="K", type=click.IntRange(min=1), default=1, help="bits set per value (k-of-N)")
alloc_opt = _opt("--allocation", env="ALLOCATION", type=ALLOCATIONS, default="alpha", help="code allocation order")
blocks_opt = _opt("--blocks", env="BLOCKS", type=click.IntRange(min=1), default=1,
                  help="sort this many contiguous blocks independently")
order_opt = _opt("--column-order", env="COLUMN_ORDER", default=None,
                 help="sort key priority: asc, desc (by cardinality) or given:2,0,1")
delim_opt = _opt("--delimiter", env="DELIMITER", default=",", help="field separator")
seed_opt = _opt("--seed", env="SEED", type=int, default=0, help="seed for shuffle, grouping and generators")
header_opt = _opt("--header/--no-header", env="HEADER", default=False, help="first line holds column names")
server_opt = _opt("--server", env="SERVER", default=None,
                  help="send the request to a running service instead of reading the file directly")


def _fail(exc: Exception) -> None:
    if isinstance(exc, UnknownColumnError):
        raise click.ClickException(f"unknown column {exc.args[0]!r}")
    if isinstance(exc, KeyError):
        raise click.ClickException(f"unknown value {exc.args[0]!r}")
    raise click.ClickException(str(exc))


def _check_delimiter(delimiter: str) -> str:
    if len(delimiter) != 1:
        raise click.BadParameter("must be a single character", param_hint="--delimiter")
    return delimiter


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Build and query compressed bitmap indexes over delimited fact tables."""


@main.command()
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
@_opt("--sort", "sort", env="SORT", type=SORTS, default="lex", help="row order")
@blocks_opt
@order_opt
@delim_opt
@seed_opt
@header_opt
@k_opt
@alloc_opt
@_opt("--memory-bytes", env="MEMORY_BYTES", type=click.IntRange(min=1024), default=DEFAULT_MEMORY_BYTES,
      help="in-memory budget of the external lexicographic sort")
def sort(input, output, sort, blocks, column_order, delimiter, seed, header, k, allocation, memory_bytes):
    """Reorder the rows of INPUT into OUTPUT."""
    try:
        sort_table_file(input, output, sort, blocks, column_order, _check_delimiter(delimiter), seed, header,
                        k, allocation, memory_bytes)
    except _USER_ERRORS as exc:
        _fail(exc)


@main.command()
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
@k_opt
@alloc_opt
@_opt("--sort", "sort", env="SORT", type=SORTS, default="none", help="row order applied before indexing")
@blocks_opt
@order_opt
@_opt("--partition-bytes", env="PARTITION_BYTES", type=click.IntRange(min=64), default=DEFAULT_PARTITION_BYTES,
      help="target size of one horizontal partition")
@delim_opt
@seed_opt
@header_opt
@_opt("--columns", env="COLUMNS", default=None, help="index only these field positions, e.g. 0,1,2")
def index(input, output, **kw):
    """Index INPUT into OUTPUT (writes INPUT.hist beside the table)."""
    _check_delimiter(kw["delimiter"])
    try:
        summary = index_table(input, output, IndexOptions(**kw))
    except _USER_ERRORS as exc:
        _fail(exc)
    click.echo(f"{summary['rows']} rows, {summary['bitmaps']} bitmaps, {summary['partitions']} partition(s), "
               f"{summary['bytes']} bytes -> {output}", err=True)


def _post(server: str, path: str, **kw):
    import httpx

    try:
        resp = httpx.request(kw.pop("method", "GET"), server.rstrip("/") + path, timeout=300, **kw)
    except httpx.HTTPError as exc:
        raise click.ClickException(f"cannot reach {server}: {exc}") from None
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        raise click.ClickException(f"server error {resp.status_code}: {detail}")
    return resp.json()


@main.command()
@click.argument("index_path", metavar="INDEX")
@click.argument("expression")
@click.option("--rows", "show_rows", is_flag=True, help="print matching row ids, one per line")
@click.option("--json", "as_json", is_flag=True, help="print the full result as JSON")
@server_opt
def query(index_path, expression, show_rows, as_json, server):
    """Count the rows matching EXPRESSION, for example "d0=3 & d2=7"."""
    if server:
        res = _post(server, "/query", method="POST",
                    json={"index": index_path, "query": expression, "include_rows": show_rows or as_json})
        count, rows, warnings = res["count"], res.get("row_ids") or [], res["warnings"]
        payload = res
    else:
        try:
            with open_index(index_path) as reader:
                res = evaluate(reader, expression)
        except QuerySyntaxError as exc:
            raise click.UsageError(str(exc)) from None
        except _USER_ERRORS as exc:
            _fail(exc)
        count, rows, warnings = res.count, res.row_ids.tolist(), res.warnings
        payload = {"count": count, "row_ids": rows, "warnings": warnings,
                   "bitmaps_requested": res.bitmaps_requested, "bitmaps_loaded": res.bitmaps_loaded}
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    if as_json:
        click.echo(json.dumps(payload))
    elif show_rows:
        click.echo("\n".join(map(str, rows)))
    else:
        click.echo(count)


@main.command()
@click.argument("index_path", metavar="INDEX")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="write CSV here instead of stdout")
@server_opt
def stats(index_path, output, server):
    """Per-bitmap sizes (C, N, 1-C/N) and per-column totals as CSV."""
    if server:
        records = _post(server, "/stats", params={"index": index_path})["records"]
    else:
        try:
            with open_index(index_path) as reader:
                records = stats_records(reader)
        except _USER_ERRORS as exc:
            _fail(exc)
    text = stats_csv(records)
    if output:
        with atomic_output(output) as tmp, open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _write_generated(table, output, delimiter, header):
    with atomic_output(output) as tmp:
        write_table(table, tmp, _check_delimiter(delimiter), header)


@main.command("gen-uniform")
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--rows", type=click.IntRange(min=0), default=5000, show_default=True)
@click.option("--independent", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--r", "r", type=click.Choice(["1", "2"]), default="1", show_default=True,
              help="cardinality growth between independent columns")
@click.option("--dependent", type=click.IntRange(min=0), default=0, show_default=True)
@seed_opt
@delim_opt
@header_opt
def gen_uniform_cmd(output, rows, independent, r, dependent, seed, delimiter, header):
    """Write a uniform synthetic table with optional dependent columns."""
    _write_generated(gen_uniform(rows, independent, int(r), dependent, seed), output, delimiter, header)


@main.command("gen-zipf")
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--rows", type=click.IntRange(min=0), default=5000, show_default=True)
@click.option("--dims", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--s", "s", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True,
              help="Zipf exponent")
@click.option("--value-range", type=click.IntRange(min=1), default=1000, show_default=True)
@seed_opt
@delim_opt
@header_opt
def gen_zipf_cmd(output, rows, dims, s, value_range, seed, delimiter, header):
    """Write a table of independent Zipf-distributed columns."""
    _write_generated(gen_zipf(rows, dims, s, value_range, seed), output, delimiter, header)


@main.command()
@_opt("--host", env="HOST", default="127.0.0.1")
@_opt("--port", env="PORT", type=int, default=8000)
@_opt("--data-root", env="DATA_ROOT", type=click.Path(file_okay=False, exists=True), default=".",
      help="directory that request paths are resolved against")
def serve(host, port, data_root):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_root), host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
