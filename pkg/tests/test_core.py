import numpy as np
import pytest
from hypothesis import given, strategies as st

from oblifork import (Element, ElementArray, Kind, PipelineParams,
                      compare_exchange, default_params, pad_to_shape,
                      strip_fillers)
from oblifork.core import BOTTOM, make_filler
from oblifork.fork_join import TaskContext
from oblifork.instrument import COMPARE, READ, WRITE, Tracer


def test_compare_exchange_orders_two_keys():
    a, b = Element(key=5), Element(key=3, origin=1)
    lo, hi = compare_exchange(a, b, ascending=True)
    assert (lo.key, hi.key) == (3, 5)
    hi2, lo2 = compare_exchange(a, b, ascending=False)
    assert (hi2.key, lo2.key) == (5, 3)


def test_compare_exchange_tie_broken_by_origin():
    a = Element(key=3, origin=1)
    b = Element(key=3, origin=0)
    lo, hi = compare_exchange(a, b, ascending=True)
    assert lo.origin == 0 and hi.origin == 1


def test_filler_compares_as_infinity():
    real = Element(key=9)
    filler = make_filler(origin=5)
    lo, hi = compare_exchange(real, filler, ascending=True)
    assert lo.kind == Kind.REAL and hi.kind == Kind.FILLER
    # even a saturated real key goes first: origins break the tie
    real_max = Element(key=BOTTOM, origin=0)
    lo, hi = compare_exchange(real_max, filler, ascending=True)
    assert lo.kind == Kind.REAL


def test_compare_exchange_event_pattern():
    tracer = Tracer(digest=True, capture=True)
    aid = tracer.register("pair", 2, words=4)
    ctx = TaskContext(tracer=tracer)
    compare_exchange(Element(key=5), Element(key=3, origin=1), ctx=ctx,
                     array_id=aid, index_a=0, index_b=1)
    trace = tracer.finish()
    ops = [int(r["op"]) for r in trace.events]
    assert ops == [READ, READ, COMPARE, WRITE, WRITE]
    assert ctx.acc.comparisons == 1 and ctx.acc.work == 5 and ctx.acc.span == 1


@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 100)),
                min_size=2, max_size=20))
def test_key_origin_is_strict_total_order(pairs):
    elems = [Element(key=k, origin=i) for i, (k, _) in enumerate(pairs)]
    ranks = sorted(e.sort_rank() for e in elems)
    assert len(set(ranks)) == len(ranks)  # distinct origins => no ties
    for x, y in zip(ranks, ranks[1:]):
        assert x < y


def test_pad_to_shape_examples():
    p = PipelineParams(n=6, Z=4, gamma=2, beta=4, sba_bin_size=64)
    arr = ElementArray.from_keys(np.arange(6, dtype=np.uint64))
    out = pad_to_shape(arr, p)
    assert len(out) == 8 and out.real_count() == 6

    p8 = PipelineParams(n=8, Z=4, gamma=2, beta=4, sba_bin_size=64)
    arr8 = ElementArray.from_keys(np.arange(8, dtype=np.uint64))
    assert len(pad_to_shape(arr8, p8)) == 8

    p1 = PipelineParams(n=1, Z=4, gamma=2, beta=2, sba_bin_size=64)
    arr1 = ElementArray.from_keys(np.array([9], dtype=np.uint64))
    out1 = pad_to_shape(arr1, p1)
    assert len(out1) == 4 and out1.real_count() == 1


def test_pad_to_shape_rejects_oversize():
    p = PipelineParams(n=4, Z=4, gamma=2, beta=2, sba_bin_size=64,
                       max_padded=3)
    with pytest.raises(ValueError):
        pad_to_shape(ElementArray.from_keys(np.arange(4, dtype=np.uint64)), p)


@given(st.lists(st.integers(0, 1 << 62), min_size=1, max_size=200))
def test_pad_then_strip_is_identity(keys):
    arr = ElementArray.from_keys(np.array(keys, dtype=np.uint64))
    out = strip_fillers(pad_to_shape(arr, default_params(len(keys))))
    assert np.array_equal(out.key, arr.key)
    assert np.array_equal(out.origin, arr.origin)


def test_default_params_shapes():
    p = default_params(1 << 16)
    assert p.Z == 256 and p.gamma == 16 and p.beta == 512
    assert p.padded_n >= 1 << 16
    small = default_params(100)
    assert small.Z == 64 and small.beta >= 2 and small.gamma <= small.beta


def test_params_validation():
    with pytest.raises(ValueError):
        PipelineParams(n=8, Z=3, gamma=2, beta=4, sba_bin_size=64)
    with pytest.raises(ValueError):
        PipelineParams(n=8, Z=4, gamma=8, beta=4, sba_bin_size=64)
