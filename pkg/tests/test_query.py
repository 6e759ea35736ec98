import random

import numpy as np
import pytest

from bitkiln.index_store import IndexConfig, UnknownColumnError, build_index, open_index
from bitkiln.kofn import effective_k
from bitkiln.query import And, Eq, Or, QuerySyntaxError, equality_bitmap, evaluate, format_query, parse_query
from bitkiln.synth import gen_zipf
from oracles import random_expr, scan


@pytest.fixture
def toy_index(tmp_path, toy_table):
    def make(k):
        path = tmp_path / f"toy{k}.idx"
        build_index(toy_table, path, IndexConfig(k=k))
        return open_index(path)
    return make


def test_bus_in_montreal(toy_index):
    with toy_index(1) as r:
        assert list(equality_bitmap(r, "city", "1")) == [0, 5]
        assert list(equality_bitmap(r, "vehicle", "2")) == [1, 5, 6]
        res = evaluate(r, "vehicle=2 & city=1")
        assert res.row_ids.tolist() == [5] and res.count == 1
        assert res.bitmaps_requested == 2 == res.bitmaps_loaded


def test_two_of_n_equality(toy_index):
    with toy_index(2) as r:
        res = evaluate(r, "city=1")
        assert res.row_ids.tolist() == [0, 5]
        assert res.bitmaps_requested == 2


def test_unknown_value_is_empty_with_warning(toy_index):
    with toy_index(1) as r:
        res = evaluate(r, "city=99")
        assert res.count == 0 and res.warnings
        assert len(equality_bitmap(r, "city", "99")) == 7
        assert evaluate(r, "city=99 | city=2").row_ids.tolist() == [1]


def test_unknown_column_is_error(toy_index):
    with toy_index(1) as r:
        with pytest.raises(UnknownColumnError):
            evaluate(r, "town=1")
        assert r.bytes_read == 0


def test_idempotence_and_cache(toy_index):
    with toy_index(2) as r:
        x = evaluate(r, "city=3")
        xx = evaluate(r, "city=3 | city=3")
        assert xx.row_ids.tolist() == x.row_ids.tolist()
        assert xx.bitmaps_requested == 4 and xx.bitmaps_loaded == 2


def test_parser():
    assert parse_query("a=1") == Eq("a", "1")
    assert parse_query(" a = 1 & b=2 | c=3 ") == Or(And(Eq("a", "1"), Eq("b", "2")), Eq("c", "3"))
    assert parse_query("a=1 & (b=2 | c=3)") == And(Eq("a", "1"), Or(Eq("b", "2"), Eq("c", "3")))
    assert parse_query("name=New York") == Eq("name", "New York")
    # a value runs up to the next operator, so it may hold '='
    assert parse_query("a=1 b=2") == Eq("a", "1 b=2")
    q = "((a=1 | b=2) & c=3)"
    assert format_query(parse_query(q)) == q
    for bad in ["", "a", "a=1 &", "(a=1", "a=1)", "& a=1", "=3", "a=1 && b=2"]:
        with pytest.raises(QuerySyntaxError):
            parse_query(bad)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_equality_exact_for_every_value(tmp_path, k):
    table = gen_zipf(4000, 3, 0.8, 150, seed=k)
    path = tmp_path / "z.idx"
    build_index(table, path, IndexConfig(k=k, partition_bytes=16 * 1024))
    with open_index(path) as r:
        for c, name in enumerate(table.columns):
            spec = r.column(name)
            truth: dict[str, list[int]] = {}
            for i, row in enumerate(table.rows):
                truth.setdefault(row[c], []).append(i)
            for value, ids in truth.items():
                assert equality_bitmap(r, name, value).positions().tolist() == ids
            assert spec.dictionary.k == effective_k(spec.dictionary.cardinality, k)


def test_random_expressions_match_scan(tmp_path):
    table = gen_zipf(10_000, 3, 1.0, 80, seed=11)
    path = tmp_path / "q.idx"
    build_index(table, path, IndexConfig(k=2, partition_bytes=64 * 1024))
    rng = random.Random(5)
    values = [sorted(set(table.column(c))) for c in range(table.ncols)]
    with open_index(path) as r:
        for _ in range(60):
            expr = random_expr(rng, table.columns, values, rng.randint(1, 6))
            res = evaluate(r, format_query(expr))
            assert res.row_ids.tolist() == sorted(scan(expr, table.rows, table.columns))


def test_concurrent_queries(tmp_path):
    from concurrent.futures import ThreadPoolExecutor

    table = gen_zipf(5000, 2, 1.0, 40, seed=12)
    path = tmp_path / "c.idx"
    build_index(table, path, IndexConfig(k=2))
    queries = [f"d0={a} | d1={b}" for a in range(1, 9) for b in range(1, 5)]
    with open_index(path) as r:
        serial = [evaluate(r, q).row_ids for q in queries]
        with ThreadPoolExecutor(4) as pool:
            parallel = list(pool.map(lambda q: evaluate(r, q).row_ids, queries))
    assert all(np.array_equal(a, b) for a, b in zip(serial, parallel))
