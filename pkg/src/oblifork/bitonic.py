"""Fork-join bitonic merge and sort with recursive transposes.

A merge of m inputs is the m-input reverse butterfly: layer j pairs
positions that are m/2^j apart.  Rather than walking the layers across the
whole array, the merge writes its inputs as a matrix of 2^ceil(k/2) rows by
2^floor(k/2) columns, transposes, recursively merges the rows (the far
layers, now contiguous), transposes back and recursively merges the rows
again (the near layers).  The sort forks an ascending and a descending half
and merges with the caller's flag; direction never depends on data.

Both recursions bottom out with inline network evaluations; the cutoffs
sit far below any plausible cache size, so the miss profile of the
recursion is unaffected, and the inline networks are exactly the recursion
unrolled (the comparator multisets and directions agree; the test suite
pins this against a reference recursion).

Runs without a tracer compute the identical permutation natively and
charge counters from closed forms that mirror the recursion 1:1.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np

from . import _kernels
from .core import ElementArray, Region, ilog2, next_pow2
from .fork_join import TaskContext, _ceil_log2, fork_join, parallel_for
from .primitives import _transpose_rec, transpose_span

# The merge recursion bottoms out with an inline in-place network: 1024
# slots is 4096 words, an order of magnitude under the acceptance cache,
# and small merges skip the physical transposes entirely, which is what
# keeps the measured miss constant inside the cache-bound gate.  The sort
# recursion stays fine-grained; it moves no data of its own.
MERGE_CUTOFF = 1024
SORT_CUTOFF = 64

KeyFn = Callable[[ElementArray], Tuple[np.ndarray, np.ndarray]]


def plain_key(elems: ElementArray) -> Tuple[np.ndarray, np.ndarray]:
    """The library-wide (key, origin) order; fillers carry a saturated key
    and beyond-range origins, so they sort after every real element."""
    return elems.key.copy(), elems.origin.copy()


def merge_comparators(m: int) -> int:
    return (m // 2) * ilog2(m) if m >= 2 else 0


def sort_comparators(n: int) -> int:
    """Exactly n*k*(k+1)/4 comparators for n = 2^k."""
    k = ilog2(n)
    return n * k * (k + 1) // 4


def _split(m: int) -> Tuple[int, int]:
    """Rows x cols factorization 2^ceil(k/2) x 2^floor(k/2)."""
    k = ilog2(m)
    return 1 << ((k + 1) // 2), 1 << (k // 2)


# -- sortable view: (hi, lo, idx) triple over a registered window -----------


class SortView:
    __slots__ = ("hi", "lo", "idx", "aid", "off")

    def __init__(self, hi, lo, idx, aid=0, off=0):
        self.hi = hi
        self.lo = lo
        self.idx = idx
        self.aid = aid
        self.off = off

    def __len__(self):
        return self.hi.shape[0]

    def sub(self, lo: int, hi: int) -> "SortView":
        return SortView(self.hi[lo:hi], self.lo[lo:hi], self.idx[lo:hi],
                        self.aid, self.off + lo)

    def gidx(self, local_idx: np.ndarray) -> np.ndarray:
        return np.asarray(local_idx, dtype=np.int64) + self.off

    def assign_from(self, dst_idx, src: "SortView", src_idx) -> None:
        self.hi[dst_idx] = src.hi[src_idx]
        self.lo[dst_idx] = src.lo[src_idx]
        self.idx[dst_idx] = src.idx[src_idx]


@lru_cache(maxsize=None)
def _layer_pairs(m: int, d: int) -> Tuple[np.ndarray, np.ndarray]:
    t = np.arange(m // 2, dtype=np.int64)
    a = (t // d) * (2 * d) + (t % d)
    b = a + d
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def _inline_costs(ctx: TaskContext, m: int, layers: int) -> None:
    half = m // 2
    ctx.acc.work += 5 * half * layers
    ctx.acc.comparisons += half * layers
    ctx.acc.span += layers * (_ceil_log2(half) + 1)


def _merge_inline(ctx: TaskContext, v: SortView, ascending: bool) -> None:
    m = len(v)
    tr = ctx.tracer
    if tr is not None and tr.cache_only:
        # one fused pass: identical comparator stream, one kernel dispatch
        _inline_costs(ctx, m, ilog2(m))
        _kernels.bitonic_merge_network(v.hi, v.lo, v.idx, ascending)
        tr.emit_merge_net(v.aid, v.off, m)
        return
    d = m >> 1
    while d >= 1:
        a, b = _layer_pairs(m, d)
        ctx.cx_block(v.aid, a, b, off=v.off)
        _kernels.cx_apply_flag(v.hi, v.lo, v.idx, a, b, ascending)
        d >>= 1


def _sort_inline(ctx: TaskContext, v: SortView, ascending: bool) -> None:
    m = len(v)
    k = ilog2(m)
    tr = ctx.tracer
    if tr is not None and tr.cache_only:
        _inline_costs(ctx, m, k * (k + 1) // 2)
        _kernels.bitonic_sort_network(v.hi, v.lo, v.idx, ascending)
        tr.emit_sort_net(v.aid, v.off, m)
        return
    for s in range(1, k + 1):
        d = 1 << (s - 1)
        while d >= 1:
            a, b = _layer_pairs(m, d)
            ctx.cx_block(v.aid, a, b, off=v.off)
            _kernels.cx_apply_stage(v.hi, v.lo, v.idx, a, b, s, ascending)
            d >>= 1


def _merge_rec(ctx: TaskContext, data: SortView, scratch: SortView,
               ascending: bool) -> None:
    m = len(data)
    if m <= MERGE_CUTOFF:
        _merge_inline(ctx, data, ascending)
        return
    rows, cols = _split(m)
    # far layers: columns become contiguous rows of the scratch window
    _transpose_rec(ctx, data, scratch, 0, rows, 0, cols, rows, cols, 1)

    def far(c: TaskContext, i: int):
        _merge_rec(c, scratch.sub(i * rows, (i + 1) * rows),
                   data.sub(i * rows, (i + 1) * rows), ascending)

    parallel_for(ctx, cols, far)
    _transpose_rec(ctx, scratch, data, 0, cols, 0, rows, cols, rows, 1)

    def near(c: TaskContext, i: int):
        _merge_rec(c, data.sub(i * cols, (i + 1) * cols),
                   scratch.sub(i * cols, (i + 1) * cols), ascending)

    parallel_for(ctx, rows, near)


def _sort_rec(ctx: TaskContext, data: SortView, scratch: SortView,
              ascending: bool) -> None:
    n = len(data)
    if n <= 1:
        return
    if n <= SORT_CUTOFF:
        _sort_inline(ctx, data, ascending)
        return
    half = n // 2
    fork_join(ctx,
              lambda c: _sort_rec(c, data.sub(0, half), scratch.sub(0, half),
                                  ascending),
              lambda c: _sort_rec(c, data.sub(half, n), scratch.sub(half, n),
                                  not ascending))
    _merge_rec(ctx, data, scratch, ascending)


# -- closed-form costs mirroring the recursion ------------------------------


@lru_cache(maxsize=None)
def merge_span(m: int) -> int:
    if m < 2:
        return 0
    if m <= MERGE_CUTOFF:
        return ilog2(m) * (_ceil_log2(m // 2) + 1)
    rows, cols = _split(m)
    return (transpose_span(rows, cols, 1) + _ceil_log2(cols) + merge_span(rows)
            + transpose_span(cols, rows, 1) + _ceil_log2(rows) + merge_span(cols))


@lru_cache(maxsize=None)
def merge_work(m: int) -> int:
    if m < 2:
        return 0
    if m <= MERGE_CUTOFF:
        return 5 * merge_comparators(m)
    rows, cols = _split(m)
    return 4 * m + cols * merge_work(rows) + rows * merge_work(cols)


@lru_cache(maxsize=None)
def sort_span(n: int) -> int:
    if n <= 1:
        return 0
    if n <= SORT_CUTOFF:
        k = ilog2(n)
        return (k * (k + 1) // 2) * (_ceil_log2(n // 2) + 1)
    return 1 + sort_span(n // 2) + merge_span(n)


@lru_cache(maxsize=None)
def sort_work(n: int) -> int:
    if n <= 1:
        return 0
    if n <= SORT_CUTOFF:
        return 5 * sort_comparators(n)
    return 2 * sort_work(n // 2) + merge_work(n)


# -- region-level drivers ----------------------------------------------------


def sort_region(ctx: TaskContext, region: Region, scratch: Optional[Region],
                key_fn: KeyFn = plain_key, ascending: bool = True) -> np.ndarray:
    """Sort a registered window in place; returns the permutation applied.

    The traced path evaluates the comparator network with its recursive
    transposes (``scratch`` must be a disjoint window of equal size).  The
    untraced path computes the identical permutation natively -- (hi, lo)
    is a total order, so every correct sort agrees slot for slot -- and
    charges the network's closed-form work, span and comparator count.
    """
    n = len(region)
    ilog2(n)
    hi, lo = key_fn(region.elems)
    if ctx.tracer is None:
        idx = np.lexsort((lo, hi)).astype(np.uint64)
        if not ascending:
            idx = idx[::-1].copy()
        ctx.add_work(sort_work(n))
        ctx.add_span(sort_span(n))
        ctx.acc.comparisons += sort_comparators(n)
    else:
        if scratch is None or len(scratch) != n:
            raise ValueError("traced sort needs a scratch window of equal size")
        idx = np.arange(n, dtype=np.uint64)
        data_v = SortView(hi, lo, idx, region.aid, region.off)
        scr_v = SortView(np.empty_like(hi), np.empty_like(lo),
                         np.empty_like(idx), scratch.aid, scratch.off)
        _sort_rec(ctx, data_v, scr_v, ascending)
    region.elems.set_from(region.elems.take(idx))
    return idx


def merge_region(ctx: TaskContext, region: Region, scratch: Optional[Region],
                 key_fn: KeyFn = plain_key, ascending: bool = True) -> np.ndarray:
    m = len(region)
    ilog2(m)
    hi, lo = key_fn(region.elems)
    if ctx.tracer is None:
        idx = np.lexsort((lo, hi)).astype(np.uint64)
        if not ascending:
            idx = idx[::-1].copy()
        ctx.add_work(merge_work(m))
        ctx.add_span(merge_span(m))
        ctx.acc.comparisons += merge_comparators(m)
    else:
        if scratch is None or len(scratch) != m:
            raise ValueError("traced merge needs a scratch window of equal size")
        idx = np.arange(m, dtype=np.uint64)
        data_v = SortView(hi, lo, idx, region.aid, region.off)
        scr_v = SortView(np.empty_like(hi), np.empty_like(lo),
                         np.empty_like(idx), scratch.aid, scratch.off)
        _merge_rec(ctx, data_v, scr_v, ascending)
    region.elems.set_from(region.elems.take(idx))
    return idx


def sort_rows_region(ctx: TaskContext, region: Region, scratch: Optional[Region],
                     n_rows: int, row_len: int, key_fn: KeyFn = plain_key,
                     ascending: bool = True) -> None:
    """Sort n_rows independent contiguous rows of row_len slots each."""
    if len(region) != n_rows * row_len:
        raise ValueError("region size must equal n_rows * row_len")
    if n_rows == 0:
        return
    if ctx.tracer is None:
        hi, lo = key_fn(region.elems)
        rows = np.repeat(np.arange(n_rows, dtype=np.uint64), row_len)
        perm = np.lexsort((lo, hi, rows)).astype(np.uint64)
        if not ascending:
            perm = perm.reshape(n_rows, row_len)[:, ::-1].ravel().copy()
        ctx.add_work(n_rows * sort_work(row_len))
        ctx.add_span(_ceil_log2(n_rows) + sort_span(row_len))
        ctx.acc.comparisons += n_rows * sort_comparators(row_len)
        region.elems.set_from(region.elems.take(perm))
        return

    def body(c: TaskContext, r: int):
        sort_region(c, region.sub(r * row_len, (r + 1) * row_len),
                    scratch.sub(r * row_len, (r + 1) * row_len),
                    key_fn, ascending)

    parallel_for(ctx, n_rows, body)


# -- public array-level operations -------------------------------------------


def _run_on_copy(arr: ElementArray, ctx: Optional[TaskContext],
                 fn, name: str) -> ElementArray:
    if ctx is None:
        ctx = TaskContext()
    out = arr.copy()
    aid = 0
    scratch = None
    if ctx.tracer is not None:
        aid = ctx.tracer.register(name, len(arr), words=4)
        sid = ctx.tracer.register(name + "_scratch", len(arr), words=4)
        scratch = Region(ElementArray.empty(len(arr)), sid, 0)
    fn(ctx, Region(out, aid, 0), scratch)
    return out


def bitonic_sort(arr: ElementArray, ascending: bool = True,
                 ctx: Optional[TaskContext] = None,
                 key_fn: KeyFn = plain_key) -> ElementArray:
    """Sort by (key, origin); n must be a power of two (pad with fillers
    otherwise).  The trace is a function of n alone."""
    if len(arr) == 1:
        return arr.copy()
    ilog2(len(arr))
    return _run_on_copy(arr, ctx,
                        lambda c, r, s: sort_region(c, r, s, key_fn, ascending),
                        "bitonic")


def bitonic_merge(arr: ElementArray, ascending: bool = True,
                  ctx: Optional[TaskContext] = None,
                  key_fn: KeyFn = plain_key) -> ElementArray:
    """Merge a bitonic input sequence into sorted order; m must be a power
    of two."""
    if len(arr) == 1:
        return arr.copy()
    ilog2(len(arr))
    return _run_on_copy(arr, ctx,
                        lambda c, r, s: merge_region(c, r, s, key_fn, ascending),
                        "bmerge")


def sort_padded(ctx: TaskContext, elems: ElementArray,
                name: str = "padsort") -> ElementArray:
    """Bitonic-sort an arbitrary-length array by filler padding; the pad
    (origins above 2^50) sorts to the tail and is stripped."""
    n = len(elems)
    if n <= 1:
        return elems.copy()
    m = next_pow2(n)
    work = ElementArray.concat([elems, ElementArray.fillers(m - n, 1 << 50)]) \
        if m > n else elems.copy()
    aid = 0
    scratch = None
    if ctx.tracer is not None:
        aid = ctx.tracer.register(name, m, words=4)
        sid = ctx.tracer.register(name + "_scratch", m, words=4)
        scratch = Region(ElementArray.empty(m), sid, 0)
    region = Region(work, aid, 0)
    ctx.write_block(region.aid, region.gidx(np.arange(m, dtype=np.int64)))
    ctx.add_span(1)
    sort_region(ctx, region, scratch, key_fn=plain_key)
    return work[:n]
