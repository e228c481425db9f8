import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oblifork import (BinMatrix, ElementArray, TaskContext, prefix_sum,
                      propagate, record_trace, segmented_suffix,
                      transpose_bins)
from oblifork.core import BOTTOM


def test_prefix_sum_examples():
    assert prefix_sum(np.array([1, 2, 3, 4], dtype=np.uint64)).tolist() == \
        [1, 3, 6, 10]
    assert prefix_sum(np.array([7], dtype=np.uint64)).tolist() == [7]
    assert prefix_sum(np.array([5, 1, 7], dtype=np.uint64), "max").tolist() == \
        [5, 5, 7]


@given(st.lists(st.integers(0, 1 << 32), min_size=1, max_size=130),
       st.sampled_from(["add", "max", "min"]))
@settings(max_examples=60, deadline=None)
def test_prefix_sum_matches_left_fold(values, op):
    vals = np.array(values, dtype=np.uint64)
    got = prefix_sum(vals, op)
    pyop = {"add": lambda a, b: a + b, "max": max, "min": min}[op]
    acc, exp = None, []
    for v in vals:
        acc = int(v) if acc is None else pyop(acc, int(v))
        exp.append(acc)
    assert got.tolist() == exp


def test_prefix_sum_accepts_ufuncs():
    vals = np.array([5, 1, 7], dtype=np.uint64)
    assert prefix_sum(vals, np.maximum).tolist() == [5, 5, 7]
    with pytest.raises(ValueError):
        prefix_sum(vals, np.subtract)


def test_segmented_suffix_examples():
    keys = np.array([7, 7, 9], dtype=np.uint64)
    vals = np.array([1, 2, 5], dtype=np.uint64)
    assert segmented_suffix(keys, vals, "add").tolist() == [3, 2, 5]
    distinct = np.array([1, 2, 3], dtype=np.uint64)
    assert segmented_suffix(distinct, vals, "add").tolist() == vals.tolist()
    fillers = np.full(2, BOTTOM, dtype=np.uint64)
    assert segmented_suffix(fillers, fillers, "add").tolist() == \
        [BOTTOM, BOTTOM]


def _grouped_case(rng, n):
    keys = np.sort(rng.integers(0, max(n // 3, 1), n).astype(np.uint64))
    vals = rng.integers(0, 1 << 20, n).astype(np.uint64)
    return keys, vals


def test_segmented_suffix_against_direct_oracle(rng):
    for _ in range(300):
        n = int(rng.integers(1, 100))
        keys, vals = _grouped_case(rng, n)
        got = segmented_suffix(keys, vals, "add")
        exp = [sum(int(vals[j]) for j in range(i, n) if keys[j] == keys[i])
               for i in range(n)]
        assert got.tolist() == exp


def test_count_of_reals_at_group_head(rng):
    # aggregation with f = count yields the group size at the group head
    for _ in range(1000):
        n = int(rng.integers(1, 1 << 12))
        keys, _ = _grouped_case(rng, n)
        got = segmented_suffix(keys, np.ones(n, dtype=np.uint64), "add")
        heads = np.ones(n, dtype=bool)
        heads[1:] = keys[1:] != keys[:-1]
        sizes = np.diff(np.append(np.flatnonzero(heads), n))
        assert np.array_equal(got[heads], sizes.astype(np.uint64))


def test_propagate_against_direct_oracle(rng):
    for _ in range(300):
        n = int(rng.integers(1, 100))
        keys, vals = _grouped_case(rng, n)
        got = propagate(keys, vals)
        exp = []
        for i in range(n):
            j = i
            while j > 0 and keys[j - 1] == keys[i]:
                j -= 1
            exp.append(int(vals[j]))
        assert got.tolist() == exp


def test_scan_traces_depend_only_on_length(rng):
    digests = set()
    for _ in range(6):
        keys, vals = _grouped_case(rng, 90)
        rec = record_trace(lambda ctx: segmented_suffix(keys, vals, "add",
                                                        ctx=ctx), capture=False)
        digests.add(rec.trace.hex)
    assert len(digests) == 1
    digests = {record_trace(
        lambda ctx: prefix_sum(rng.integers(0, 9, 70).astype(np.uint64),
                               "add", ctx=ctx), capture=False).trace.hex
        for _ in range(5)}
    assert len(digests) == 1


def _matrix(rng, r, c, Z):
    return BinMatrix(r, c, Z, ElementArray.from_keys(
        rng.integers(0, 1 << 30, r * c * Z, dtype=np.uint64)))


def test_transpose_2x2():
    m = BinMatrix(2, 2, 1, ElementArray.from_keys(
        np.array([1, 2, 3, 4], dtype=np.uint64)))
    assert transpose_bins(m).elems.key.tolist() == [1, 3, 2, 4]


def test_transpose_row_becomes_column(rng):
    m = _matrix(rng, 1, 5, 3)
    t = transpose_bins(m)
    assert (t.rows, t.cols) == (5, 1)
    assert np.array_equal(t.elems.key, m.elems.key)


def test_transpose_involution(rng):
    for r, c, Z in ((4, 4, 8), (2, 8, 4), (8, 2, 4), (3, 5, 2)):
        m = _matrix(rng, r, c, Z)
        back = transpose_bins(transpose_bins(m))
        assert np.array_equal(back.elems.key, m.elems.key)
        assert (back.rows, back.cols) == (r, c)


def test_transpose_semantics(rng):
    m = _matrix(rng, 3, 4, 2)
    t = transpose_bins(m)
    for i in range(3):
        for j in range(4):
            assert np.array_equal(t.bin(j, i).slots.key, m.bin(i, j).slots.key)


def test_transpose_trace_and_costs(rng):
    m = _matrix(rng, 8, 4, 16)
    rec = record_trace(lambda ctx: transpose_bins(m, ctx=ctx))
    n = 8 * 4 * 16
    assert rec.report.work == 2 * n
    moves = (rec.trace.events["op"] <= 1).sum()
    assert moves == 2 * n
