import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitkiln.ewah import EWAHBitmap
from bitkiln.index_store import (
    BuildStats,
    CorruptIndexError,
    Histogram,
    IndexConfig,
    TruncatedIndexError,
    UnknownColumnError,
    UnsupportedVersionError,
    build_histogram,
    build_index,
    index_stats,
    open_index,
    rows_per_partition,
)
from bitkiln.sorting import SortPlan, sort_rows
from bitkiln.synth import gen_uniform, gen_zipf
from bitkiln.table import FactTable


def bit_string(bm: EWAHBitmap) -> str:
    return "".join("1" if b else "0" for b in bm.to_bits())


def build(tmp_path, table, name="t.idx", **cfg):
    path = tmp_path / name
    stats = BuildStats()
    build_index(table, path, IndexConfig(**cfg), stats=stats)
    return path, stats


def test_histogram_toy(toy_table):
    h = build_histogram(toy_table)
    assert h.rows == 7
    assert h.counts[0] == {"1": 2, "2": 1, "3": 1, "4": 1, "5": 1, "6": 1}
    assert h.cardinalities == [6, 2, 3]
    assert all(sum(c.values()) == 7 for c in h.counts)


def test_histogram_empty(tmp_path):
    h = build_histogram(FactTable(["a", "b"], []))
    assert h.rows == 0 and h.counts == [{}, {}]
    h.save(tmp_path / "e.hist")
    assert Histogram.load(tmp_path / "e.hist") == h


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.text(max_size=5), st.text(max_size=5)), max_size=30))
def test_histogram_round_trip(tmp_path_factory, rows):
    rows = [tuple(v.replace("\n", "").replace("\r", "") for v in r) for r in rows]
    h = build_histogram(FactTable(["x", "y"], rows))
    path = tmp_path_factory.mktemp("h") / "t.hist"
    h.save(path)
    assert Histogram.load(path) == h


def test_toy_one_of_n_bitmaps(tmp_path, toy_table):
    path, stats = build(tmp_path, toy_table, k=1)
    with open_index(path) as r:
        assert r.rows == 7
        city = [bit_string(r.load_bitmap("city", b)) for b in range(6)]
        assert city == ["1000010", "0100000", "0010000", "0001000", "0000100", "0000001"]
        assert [bit_string(r.load_bitmap("vehicle", b)) for b in range(2)] == ["1011100", "0100011"]
        assert [bit_string(r.load_bitmap("colour", b)) for b in range(3)] == ["1101011", "0010000", "0000100"]
    assert stats.touches == 7 * 3


def test_toy_two_of_n_rows(tmp_path, toy_table):
    path, _ = build(tmp_path, toy_table, k=2)
    with open_index(path) as r:
        spec = r.column("city")
        assert (spec.dictionary.k, spec.n_bitmaps) == (2, 4)
        cols = [r.load_bitmap("city", b).to_bits() for b in range(4)]
        rows = ["".join("1" if cols[b][i] else "0" for b in range(4)) for i in range(7)]
        assert rows == ["1100", "1010", "1001", "0110", "0101", "1100", "0011"]
        # the small columns are capped at one bit per value
        assert r.column("vehicle").dictionary.k == 1


def test_multi_partition_matches_single(tmp_path):
    table = gen_zipf(100_000, 3, 1.0, 300, seed=3)
    single, s1 = build(tmp_path, table, "one.idx", k=2)
    multi, s3 = build(tmp_path, table, "many.idx", k=2, partition_bytes=512 * 1024)
    assert s1.partitions == 1 and s3.partitions >= 3
    with open_index(single) as a, open_index(multi) as b:
        assert len(b.partitions) == s3.partitions
        assert all(p["row_count"] % 32 == 0 for p in b.partitions[:-1])
        for spec in a.columns:
            for bid in range(0, spec.n_bitmaps, 7):
                x, y = a.load_bitmap(spec.name, bid), b.load_bitmap(spec.name, bid)
                assert np.array_equal(x.to_bits(), y.to_bits())
    assert s3.touches == s1.touches == 100_000 * 6


def test_partition_row_budget():
    assert rows_per_partition(256 * 1024 * 1024, 100, 3) % 32 == 0
    assert rows_per_partition(10, 100, 3) == 32
    assert rows_per_partition(8 * 100 + 8 * 3 * 64, 100, 3) == 64


def test_sequential_writes_and_touch_bound(tmp_path):
    table = gen_uniform(5000, 2, 2, 1, seed=1)
    _, stats = build(tmp_path, table, k=2, partition_bytes=16 * 1024)
    assert stats.write_offsets == sorted(stats.write_offsets)
    n, d = len(table), table.ncols
    total_bitmaps = stats.finalizations // stats.partitions
    assert stats.touches <= n * 2 * d + 2 * total_bitmaps * stats.partitions


def test_deterministic_bytes(tmp_path):
    table = gen_zipf(3000, 3, 1.5, 100, seed=4)
    a, _ = build(tmp_path, table, "a.idx", k=2, partition_bytes=8192)
    b, _ = build(tmp_path, table, "b.idx", k=2, partition_bytes=8192)
    assert a.read_bytes() == b.read_bytes()


def test_empty_table(tmp_path):
    path, _ = build(tmp_path, FactTable(["a"], []))
    with open_index(path) as r:
        assert r.rows == 0
        assert r.column("a").n_bitmaps == 0


def test_open_errors(tmp_path, toy_table):
    path, _ = build(tmp_path, toy_table)
    data = path.read_bytes()
    cases = {
        "short.idx": (data[:6], TruncatedIndexError),
        "meta.idx": (data[:40], TruncatedIndexError),
        "payload.idx": (data[:-10], TruncatedIndexError),
        "magic.idx": (b"XXXX" + data[4:], CorruptIndexError),
        "version.idx": (data[:4] + bytes([9]) + data[5:], UnsupportedVersionError),
        "json.idx": (data[:9] + b"{" * (len(data) - 9), CorruptIndexError),
        "empty.idx": (b"", TruncatedIndexError),
    }
    for name, (blob, err) in cases.items():
        p = tmp_path / name
        p.write_bytes(blob)
        with pytest.raises(err):
            open_index(p)


def test_corrupt_segment_detected(tmp_path, toy_table):
    path, _ = build(tmp_path, toy_table)
    with open_index(path) as r:
        base = r.header_bytes
        (off,) = struct.unpack_from("<I", path.read_bytes(), base)
    data = bytearray(path.read_bytes())
    struct.pack_into("<I", data, base + off + 4, 0xFFFFFFFF)  # wreck the first marker
    path.write_bytes(bytes(data))
    with open_index(path) as r, pytest.raises(CorruptIndexError):
        r.load_bitmap("city", 0)


def test_load_bitmap_errors_and_io(tmp_path, toy_table):
    path, _ = build(tmp_path, toy_table)
    with open_index(path) as r:
        assert r.bytes_read == 0  # header only
        with pytest.raises(ValueError):
            r.load_bitmap("city", 6)
        with pytest.raises(UnknownColumnError):
            r.load_bitmap("town", 0)
        bm = r.load_bitmap("city", 0)
        assert list(bm) == [0, 5]
        assert r.bytes_read == 4 + 4 + 4 * len(bm.words)


def test_value_missing_from_partition_and_index(tmp_path):
    rows = [("a",)] * 64 + [("b",)] * 64
    table = FactTable(["c"], rows)
    hist = build_histogram(table)
    hist.counts[0]["zzz"] = 0  # known to the dictionary, never stored
    path = tmp_path / "t.idx"
    build_index(table, path, IndexConfig(partition_bytes=100), hist)
    with open_index(path) as r:
        assert len(r.partitions) == 4
        assert list(r.load_bitmap("c", 1)) == list(range(64, 128))
        never = r.load_bitmap("c", 2)
        assert len(never) == 128 and never.cardinality() == 0


def test_histogram_mismatch_rejected(tmp_path, toy_table):
    hist = build_histogram(FactTable(toy_table.columns, toy_table.rows[:3]))
    with pytest.raises(ValueError):
        build_index(toy_table, tmp_path / "x.idx", hist=hist)
    bad = build_histogram(toy_table)
    bad.counts[0].pop("6")
    with pytest.raises(ValueError):
        build_index(toy_table, tmp_path / "x.idx", hist=bad)


def test_stats_sorted_single_value(tmp_path):
    table = FactTable(["c"], [("v",)] * 3200)
    path, _ = build(tmp_path, table)
    with open_index(path) as r:
        st_ = index_stats(r)
    (only,) = st_.bitmaps
    assert only.compressed_words <= 3 and only.factor >= 0.97 and only.set_bits == 3200
    assert st_.header_bytes > 0


def test_stats_sorted_beats_shuffled(tmp_path):
    table = gen_uniform(20_000, 2, 1, 1, seed=2)
    shuffled = FactTable(table.columns, sort_rows(table.rows, SortPlan("shuffle", seed=1)))
    ordered = FactTable(table.columns, sort_rows(table.rows, SortPlan("lex")))
    a, _ = build(tmp_path, shuffled, "s.idx", k=2)
    b, _ = build(tmp_path, ordered, "o.idx", k=2)
    with open_index(a) as ra, open_index(b) as rb:
        assert index_stats(rb).total_words < index_stats(ra).total_words


def test_concurrent_loads(tmp_path):
    table = gen_zipf(20_000, 2, 1.0, 50, seed=8)
    path, _ = build(tmp_path, table, k=2, partition_bytes=32 * 1024)
    with open_index(path) as r:
        expected = {b: r.load_bitmap("d0", b) for b in range(r.column("d0").n_bitmaps)}
        errors = []

        def worker(seed):
            rng = np.random.default_rng(seed)
            for _ in range(40):
                b = int(rng.integers(0, len(expected)))
                if r.load_bitmap("d0", b) != expected[b]:
                    errors.append(b)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
