"""Fixed-pattern data-movement workhorses.

Three families live here:

* unsegmented prefix sums (balanced upsweep/downsweep tree),
* segmented prefix/suffix combines over key-grouped arrays, which realize
  the aggregation and propagation building blocks, and
* cache-agnostic recursive matrix transposition of bins.

Every routine touches positions that depend only on the array length, never
on the stored values; data-dependent decisions are computed branchlessly
with masked writes.  Span accounting for the scans charges the recursive
fork-join realization, 4*ceil(log2 n) + 4, while events are emitted in the
level-synchronous order of the upsweep/downsweep tree.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .core import BOTTOM, BinMatrix, ElementArray, Region, next_pow2
from .fork_join import TaskContext, fork_join

#: largest tile (in slots) copied directly by the recursive transpose;
#: far below any plausible cache, so the miss profile is unaffected
TRANSPOSE_TILE = 2048

_U64 = np.uint64
_IDENTITY = {"add": 0, "max": 0, "min": BOTTOM, "first": BOTTOM}


def _combine(op: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if op == "add":
        return a + b
    if op == "max":
        return np.maximum(a, b)
    if op == "min":
        return np.minimum(a, b)
    if op == "first":
        return np.where(a == _U64(BOTTOM), b, a)
    raise ValueError(f"unknown combine {op!r}")


def _resolve_op(combine: Union[str, Callable]) -> str:
    if isinstance(combine, str):
        if combine not in _IDENTITY:
            raise ValueError(f"unknown combine {combine!r}")
        return combine
    for name, fn in (("add", np.add), ("max", np.maximum), ("min", np.minimum)):
        if combine is fn:
            return name
    raise ValueError("combine must be 'add'/'max'/'min'/'first' or the "
                     "matching numpy ufunc")


def _scan_span(npad: int) -> int:
    return 4 * max(int(npad - 1).bit_length(), 1) + 4


def prefix_sum(values: np.ndarray, combine: Union[str, Callable] = "add",
               ctx: Optional[TaskContext] = None) -> np.ndarray:
    """Inclusive scan: out[i] = combine(values[0..i]).

    Balanced-tree upsweep/downsweep; O(n) work and O(log n) fork depth.
    """
    op = _resolve_op(combine)
    values = np.ascontiguousarray(values, dtype=_U64)
    n = values.shape[0]
    if n < 1:
        raise ValueError("need at least one value")
    if ctx is None:
        ctx = TaskContext()
    npad = next_pow2(n)
    aid = None
    if ctx.tracer is not None:
        aid = ctx.tracer.register("scan", npad, words=1)

    tree = np.full(npad, _IDENTITY[op], dtype=_U64)
    tree[:n] = values
    if aid is not None:
        ctx.tracer.emit_rw(1, aid, np.arange(npad, dtype=np.int64))
    ctx.add_work(npad)

    levels = max(npad.bit_length() - 1, 0)
    for lvl in range(levels):
        step = 2 << lvl
        hi = np.arange(step - 1, npad, step, dtype=np.int64)
        lo = hi - (1 << lvl)
        tree[hi] = _combine(op, tree[lo], tree[hi])
        ctx.add_work(3 * hi.shape[0])
        if aid is not None:
            ctx.tracer.emit_rw(0, aid, lo)
            ctx.tracer.emit_rw(0, aid, hi)
            ctx.tracer.emit_rw(1, aid, hi)

    tree[npad - 1] = _IDENTITY[op]
    ctx.add_work(1)
    if aid is not None:
        ctx.tracer.emit_rw(1, aid, np.array([npad - 1], dtype=np.int64))

    for lvl in range(levels - 1, -1, -1):
        step = 2 << lvl
        hi = np.arange(step - 1, npad, step, dtype=np.int64)
        lo = hi - (1 << lvl)
        t = tree[lo].copy()
        tree[lo] = tree[hi]
        tree[hi] = _combine(op, tree[hi], t)  # incoming prefix combines first
        ctx.add_work(4 * hi.shape[0])
        if aid is not None:
            ctx.tracer.emit_rw(0, aid, lo)
            ctx.tracer.emit_rw(0, aid, hi)
            ctx.tracer.emit_rw(1, aid, lo)
            ctx.tracer.emit_rw(1, aid, hi)

    out = _combine(op, tree[:n], values)
    ctx.add_work(3 * n)
    if aid is not None:
        idx = np.arange(n, dtype=np.int64)
        ctx.tracer.emit_rw(0, aid, idx)
        ctx.tracer.emit_rw(0, aid, idx)
        ctx.tracer.emit_rw(1, aid, idx)
    ctx.add_span(_scan_span(npad))
    return out


def _seg_scan_exclusive(ctx: TaskContext, values: np.ndarray, heads: np.ndarray,
                        op: str, aid: Optional[int]) -> np.ndarray:
    """Exclusive segmented scan (head flags mark segment starts)."""
    n = values.shape[0]
    npad = next_pow2(n)
    d = np.full(npad, _IDENTITY[op], dtype=_U64)
    d[:n] = values
    ft = np.zeros(npad, dtype=bool)
    ft[:n] = heads
    if n < npad:
        ft[n] = True  # padding forms its own segment
    fo = ft.copy()
    if aid is not None:
        ctx.tracer.emit_rw(1, aid, np.arange(npad, dtype=np.int64))
    ctx.add_work(npad)

    levels = max(npad.bit_length() - 1, 0)
    for lvl in range(levels):
        step = 2 << lvl
        hi = np.arange(step - 1, npad, step, dtype=np.int64)
        lo = hi - (1 << lvl)
        blocked = ft[hi]
        d[hi] = np.where(blocked, d[hi], _combine(op, d[lo], d[hi]))
        ft[hi] = ft[lo] | ft[hi]
        ctx.add_work(3 * hi.shape[0])
        if aid is not None:
            ctx.tracer.emit_rw(0, aid, lo)
            ctx.tracer.emit_rw(0, aid, hi)
            ctx.tracer.emit_rw(1, aid, hi)

    d[npad - 1] = _IDENTITY[op]
    ctx.add_work(1)
    if aid is not None:
        ctx.tracer.emit_rw(1, aid, np.array([npad - 1], dtype=np.int64))

    for lvl in range(levels - 1, -1, -1):
        step = 2 << lvl
        hi = np.arange(step - 1, npad, step, dtype=np.int64)
        lo = hi - (1 << lvl)
        t = d[lo].copy()
        d[lo] = d[hi]
        right_head = fo[lo + 1]
        d[hi] = np.where(right_head, _IDENTITY[op],
                         np.where(ft[lo], t, _combine(op, d[hi], t)))
        ft[lo] = False
        ctx.add_work(4 * hi.shape[0])
        if aid is not None:
            ctx.tracer.emit_rw(0, aid, lo)
            ctx.tracer.emit_rw(0, aid, hi)
            ctx.tracer.emit_rw(1, aid, lo)
            ctx.tracer.emit_rw(1, aid, hi)
    return d[:n]


def _group_heads(ctx: TaskContext, keys: np.ndarray, filler: np.ndarray,
                 aid: Optional[int], reverse: bool) -> np.ndarray:
    """Head flags of key-groups, scanning forward or backward."""
    n = keys.shape[0]
    heads = np.ones(n, dtype=bool)
    if n > 1:
        if reverse:
            same = (keys[:-1] == keys[1:]) & ~filler[:-1] & ~filler[1:]
            heads[:-1] = ~same
        else:
            same = (keys[1:] == keys[:-1]) & ~filler[1:] & ~filler[:-1]
            heads[1:] = ~same
    ctx.add_work(3 * n)
    if aid is not None:
        idx = np.arange(n, dtype=np.int64)
        ctx.tracer.emit_rw(0, aid, idx)
        ctx.tracer.emit_rw(1, aid, idx)
    return heads


def segmented_suffix(keys: np.ndarray, values: np.ndarray,
                     combine: Union[str, Callable] = "add",
                     filler: Optional[np.ndarray] = None,
                     ctx: Optional[TaskContext] = None) -> np.ndarray:
    """Aggregation over a key-grouped array: out[i] combines the values of
    i's group at positions >= i; filler positions yield the bottom word.

    Equal keys must occupy consecutive positions.
    """
    op = _resolve_op(combine)
    keys = np.ascontiguousarray(keys, dtype=_U64)
    values = np.ascontiguousarray(values, dtype=_U64)
    n = keys.shape[0]
    if n < 1:
        raise ValueError("need at least one pair")
    if ctx is None:
        ctx = TaskContext()
    if filler is None:
        filler = keys == _U64(BOTTOM)
    aid = None
    if ctx.tracer is not None:
        aid = ctx.tracer.register("segsuffix", next_pow2(n), words=2)

    heads = _group_heads(ctx, keys, filler, aid, reverse=True)
    rev_vals = values[::-1].copy()
    rev_heads = heads[::-1].copy()
    excl = _seg_scan_exclusive(ctx, rev_vals, rev_heads, op, aid)
    incl = np.where(rev_heads, rev_vals, _combine(op, excl, rev_vals))
    ctx.add_work(3 * n)
    if aid is not None:
        idx = np.arange(n, dtype=np.int64)
        ctx.tracer.emit_rw(0, aid, idx)
        ctx.tracer.emit_rw(1, aid, idx)
    out = incl[::-1].copy()
    out[filler] = _U64(BOTTOM)
    ctx.add_span(_scan_span(next_pow2(n)))
    return out


def propagate(keys: np.ndarray, values: np.ndarray,
              filler: Optional[np.ndarray] = None,
              ctx: Optional[TaskContext] = None) -> np.ndarray:
    """Copy each group representative's (leftmost) value to the whole
    group; filler positions yield the bottom word."""
    keys = np.ascontiguousarray(keys, dtype=_U64)
    values = np.ascontiguousarray(values, dtype=_U64)
    n = keys.shape[0]
    if n < 1:
        raise ValueError("need at least one pair")
    if ctx is None:
        ctx = TaskContext()
    if filler is None:
        filler = keys == _U64(BOTTOM)
    aid = None
    if ctx.tracer is not None:
        aid = ctx.tracer.register("propagate", next_pow2(n), words=2)

    heads = _group_heads(ctx, keys, filler, aid, reverse=False)
    excl = _seg_scan_exclusive(ctx, values, heads, "first", aid)
    out = np.where(heads, values, excl)
    ctx.add_work(2 * n)
    if aid is not None:
        idx = np.arange(n, dtype=np.int64)
        ctx.tracer.emit_rw(0, aid, idx)
        ctx.tracer.emit_rw(1, aid, idx)
    out = out.copy()
    out[filler] = _U64(BOTTOM)
    ctx.add_span(_scan_span(next_pow2(n)))
    return out


# -- matrix transposition of bins ------------------------------------------


@lru_cache(maxsize=None)
def transpose_span(rows: int, cols: int, z: int) -> int:
    """Span of the recursive transpose under the unit-cost model."""
    total = rows * cols * z
    if total <= TRANSPOSE_TILE or rows * cols == 1:
        return max(int(total - 1).bit_length(), 0) + 1
    if rows >= cols:
        top = rows // 2
        return 1 + max(transpose_span(top, cols, z),
                       transpose_span(rows - top, cols, z))
    left = cols // 2
    return 1 + max(transpose_span(rows, left, z),
                   transpose_span(rows, cols - left, z))


def _transpose_rec(ctx: TaskContext, src: Region, dst: Region,
                   r0: int, r1: int, c0: int, c1: int,
                   rows: int, cols: int, z: int) -> None:
    nr, nc = r1 - r0, c1 - c0
    if nr * nc * z <= TRANSPOSE_TILE or nr * nc == 1:
        i = np.repeat(np.arange(r0, r1), nc)
        j = np.tile(np.arange(c0, c1), nr)
        src_start = (i * cols + j) * z
        dst_start = (j * rows + i) * z
        lane = np.arange(z)
        sidx = (src_start[:, None] + lane[None, :]).ravel()
        didx = (dst_start[:, None] + lane[None, :]).ravel()
        ctx.move_block(dst.aid, dst.gidx(didx), src.aid, src.gidx(sidx))
        dst.assign_from(didx, src, sidx)
        return
    if nr >= nc:
        mid = r0 + nr // 2
        fork_join(ctx,
                  lambda c: _transpose_rec(c, src, dst, r0, mid, c0, c1, rows, cols, z),
                  lambda c: _transpose_rec(c, src, dst, mid, r1, c0, c1, rows, cols, z))
    else:
        mid = c0 + nc // 2
        fork_join(ctx,
                  lambda c: _transpose_rec(c, src, dst, r0, r1, c0, mid, rows, cols, z),
                  lambda c: _transpose_rec(c, src, dst, r0, r1, mid, c1, rows, cols, z))


def transpose_region(ctx: TaskContext, src: Region, dst: Region,
                     rows: int, cols: int, z: int) -> None:
    """dst[(j*rows+i)*z ..] = src[(i*cols+j)*z ..], divide-and-conquer on
    the larger dimension.

    Untraced runs apply the permutation in one pass and charge the
    recursion's closed-form span; the result is identical either way.
    """
    if len(src) != rows * cols * z or len(dst) != rows * cols * z:
        raise ValueError("region sizes must match rows*cols*z")
    if ctx.tracer is None:
        i = np.repeat(np.arange(rows), cols)
        j = np.tile(np.arange(cols), rows)
        lane = np.arange(z)
        sidx = (((i * cols + j) * z)[:, None] + lane[None, :]).ravel()
        didx = (((j * rows + i) * z)[:, None] + lane[None, :]).ravel()
        dst.assign_from(didx, src, sidx)
        ctx.add_work(2 * rows * cols * z)
        ctx.add_span(transpose_span(rows, cols, z))
        return
    _transpose_rec(ctx, src, dst, 0, rows, 0, cols, rows, cols, z)


def transpose_bins(m: BinMatrix, ctx: Optional[TaskContext] = None) -> BinMatrix:
    """Transposed copy of a bin matrix: result[j][i] = m[i][j]."""
    if ctx is None:
        ctx = TaskContext()
    out = ElementArray.empty(len(m.elems))
    src_aid = dst_aid = 0
    if ctx.tracer is not None:
        src_aid = ctx.tracer.register("tsrc", len(m.elems), words=4)
        dst_aid = ctx.tracer.register("tdst", len(m.elems), words=4)
    transpose_region(ctx, Region(m.elems, src_aid, 0), Region(out, dst_aid, 0),
                     m.rows, m.cols, m.Z)
    return BinMatrix(m.cols, m.rows, m.Z, out)
