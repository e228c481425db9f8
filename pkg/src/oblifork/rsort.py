"""Sorting a randomly permuted array: pivot selection, the recursive
sort-bin-assignment butterfly, and the composed full sorts.

The partial sorter routes elements to the bin whose pivot range contains
them, over the same recursive-transpose skeleton as the bin assignment, but
with no filler elements: its input is a fresh uniform permutation of the
caller's data, so revealed bin loads carry no information about the
original arrangement.  Pivots are (key, origin) pairs taken from the data,
which keeps region boundaries exact even under heavy key duplication.

BB-Sort = permute, pick pivots, route, bitonic-sort each bin.
Butterfly-Sort = permute, then an ordinary (insecure) fork-join mergesort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import _kernels
from .bitonic import plain_key, sort_padded, sort_region
from .core import (ElementArray, FILLER, PipelineParams, Region, U64_MAX,
                   default_params, next_pow2)
from .fork_join import TaskContext, _ceil_log2, parallel_for
from .orba import RetryBudgetExceeded
from .permute import b_rpermute, derive_attempt_seed

SMALL_SORT_CUTOFF = 1 << 10


class SbaOverflow(RuntimeError):
    """A routing bin exceeded its cap; retry with a fresh permutation."""

    def __init__(self, bin_id: int, size: int, cap: int):
        super().__init__(f"sba bin {bin_id} holds {size} > cap {cap}")
        self.bin_id = bin_id


@dataclass(frozen=True)
class PivotSet:
    """Strictly increasing (key, origin) splitters, padded with infinity
    sentinels so the region count is a power of two."""

    keys: np.ndarray
    origins: np.ndarray

    def __post_init__(self):
        if self.keys.shape != self.origins.shape:
            raise ValueError("pivot keys and origins must align")
        if self.keys.shape[0]:
            ge = (self.keys[1:] > self.keys[:-1]) | \
                 ((self.keys[1:] == self.keys[:-1]) &
                  (self.origins[1:] > self.origins[:-1]))
            if not bool(ge.all()):
                raise ValueError("pivots must be strictly increasing")
        if (self.keys.shape[0] + 1) & self.keys.shape[0]:
            raise ValueError("region count (pivot count + 1) must be a "
                             "power of 2")

    def __len__(self) -> int:
        return self.keys.shape[0]

    @property
    def regions(self) -> int:
        return self.keys.shape[0] + 1

    def slice(self, lo: int, hi: int) -> "PivotSet":
        return PivotSet(self.keys[lo:hi], self.origins[lo:hi])

    def stride(self, step: int) -> "PivotSet":
        return PivotSet(self.keys[step - 1::step], self.origins[step - 1::step])


def pick_pivots(arr: ElementArray, ctx: Optional[TaskContext] = None,
                force_probability: Optional[float] = None) -> PivotSet:
    """Bernoulli(1/log2 n) sample, bitonic-sorted; every element at an
    index that is a positive multiple of log2(n)^2 becomes a pivot, and the
    set is padded with infinity sentinels to a power-of-two region count."""
    if ctx is None:
        ctx = TaskContext()
    n = len(arr)
    lg = max(np.log2(max(n, 2)), 1.0)
    p = force_probability if force_probability is not None else 1.0 / lg
    draws = ctx.rng.random(n)
    mask = draws < p
    picked = np.flatnonzero(mask)
    sample = arr.take(picked)
    ssorted = sort_padded(ctx, sample, "pivot_sample")

    step = max(1, int(np.ceil(lg)) ** 2)
    take = np.arange(step, len(ssorted), step, dtype=np.int64)
    keys = ssorted.key[take]
    origins = ssorted.origin[take]
    r = next_pow2(keys.shape[0] + 1)
    pad = r - 1 - keys.shape[0]
    if pad:
        keys = np.concatenate([keys, np.full(pad, U64_MAX, dtype=np.uint64)])
        origins = np.concatenate(
            [origins, (np.uint64(1) << np.uint64(51)) +
             np.arange(pad, dtype=np.uint64)])
    if ctx.tracer is not None and keys.shape[0]:
        paid = ctx.tracer.register("pivots", keys.shape[0], words=2)
        ctx.tracer.emit_rw(1, paid, np.arange(keys.shape[0], dtype=np.int64))
    ctx.add_work(2 * n + 2 * keys.shape[0])
    ctx.add_span(_ceil_log2(max(n, 2)) + 1)
    return PivotSet(keys, origins)


@dataclass
class RaggedBins:
    """A flat element array split into consecutive variable-size bins."""

    elems: ElementArray
    offsets: np.ndarray  # int64, length n_bins + 1

    @property
    def n_bins(self) -> int:
        return self.offsets.shape[0] - 1

    def bin(self, b: int) -> ElementArray:
        return self.elems[int(self.offsets[b]):int(self.offsets[b + 1])]

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @classmethod
    def single(cls, elems: ElementArray) -> "RaggedBins":
        return cls(elems, np.array([0, len(elems)], dtype=np.int64))

    @classmethod
    def from_even_split(cls, elems: ElementArray, n_bins: int) -> "RaggedBins":
        n = len(elems)
        offsets = (np.arange(n_bins + 1, dtype=np.int64) * n) // n_bins
        return cls(elems, offsets)


def _lex_rank(sh: np.ndarray, sl: np.ndarray, qh: int, ql: int) -> int:
    """Number of (hi, lo) pairs in the sorted arrays <= the query pair."""
    left = int(np.searchsorted(sh, qh, side="left"))
    right = int(np.searchsorted(sh, qh, side="right"))
    return left + int(np.searchsorted(sl[left:right], ql, side="right"))


def _sba_base(ctx: TaskContext, bins: RaggedBins, pivots: PivotSet,
              cap: int, bin_id_base: int) -> RaggedBins:
    """Sort the group together and split it by the pivot ranges."""
    flat = bins.elems
    ssorted = sort_padded(ctx, flat, "sba_base")
    bounds = [0]
    for i in range(len(pivots)):
        bounds.append(_lex_rank(ssorted.key, ssorted.origin,
                                int(pivots.keys[i]), int(pivots.origins[i])))
    bounds.append(len(ssorted))
    offsets = np.array(bounds, dtype=np.int64)
    sizes = np.diff(offsets)
    too_big = np.flatnonzero(sizes > cap)
    if too_big.shape[0]:
        b = int(too_big[0])
        raise SbaOverflow(bin_id_base + b, int(sizes[b]), cap)
    ctx.add_work(2 * len(pivots))
    return RaggedBins(ssorted, offsets)


def _sba_concat(ctx: TaskContext, parts: List[RaggedBins]) -> RaggedBins:
    elems = ElementArray.concat([p.elems for p in parts])
    offs = [np.array([0], dtype=np.int64)]
    base = 0
    for p in parts:
        offs.append(p.offsets[1:] + base)
        base += len(p.elems)
    return RaggedBins(elems, np.concatenate(offs))


def _sba_transpose(ctx: TaskContext, parts: List[RaggedBins]) -> List[RaggedBins]:
    """Rows = one bin from each partition, in partition order."""
    b1 = len(parts)
    b2 = parts[0].n_bins
    rows = []
    moved = 0
    for t in range(b2):
        chunks = [p.bin(t) for p in parts]
        elems = ElementArray.concat(chunks)
        offsets = np.zeros(b1 + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(c) for c in chunks])
        rows.append(RaggedBins(elems, offsets))
        moved += len(elems)
    ctx.add_work(2 * moved)
    ctx.add_span(_ceil_log2(max(moved, 2)) + 1)
    if ctx.tracer is not None and moved:
        aid = ctx.tracer.register("sba_transpose", moved, words=4)
        idx = np.arange(moved, dtype=np.int64)
        ctx.tracer.emit_rw(0, aid, idx)
        ctx.tracer.emit_rw(1, aid, idx)
    return rows


def rec_sba(bins: RaggedBins, pivots: PivotSet, params: PipelineParams,
            ctx: Optional[TaskContext] = None, cap: Optional[int] = None,
            _bin_base: int = 0) -> RaggedBins:
    """Route every element to the bin of the region its value falls into;
    output bin i holds exactly the inputs in region i."""
    if ctx is None:
        ctx = TaskContext()
    beta = pivots.regions
    if bins.n_bins != beta:
        raise ValueError("bin count must equal the region count")
    if cap is None:
        cap = params.sba_cap_factor * params.sba_bin_size
    if beta <= params.gamma:
        return _sba_base(ctx, bins, pivots, cap, _bin_base)

    bits = beta.bit_length() - 1
    b1 = 1 << ((bits + 1) // 2)
    b2 = beta // b1
    coarse = pivots.stride(b1)

    parts_in = []
    for j in range(b1):
        lo = int(bins.offsets[j * b2])
        hi = int(bins.offsets[(j + 1) * b2])
        parts_in.append(RaggedBins(bins.elems[lo:hi],
                                   bins.offsets[j * b2:(j + 1) * b2 + 1] - lo))

    phase1 = parallel_for(
        ctx, b1,
        lambda c, j: rec_sba(parts_in[j], coarse, params, ctx=c, cap=cap,
                             _bin_base=_bin_base))
    rows = _sba_transpose(ctx, phase1)

    def second(c: TaskContext, i: int):
        fine = pivots.slice(i * b1, (i + 1) * b1 - 1)
        return rec_sba(rows[i], fine, params, ctx=c, cap=cap,
                       _bin_base=_bin_base + i * b1)

    phase2 = parallel_for(ctx, b2, second)
    return _sba_concat(ctx, phase2)


def _final_bin_sorts(ctx: TaskContext, routed: RaggedBins) -> ElementArray:
    outs = parallel_for(ctx, routed.n_bins,
                        lambda c, b: sort_padded(c, routed.bin(b),
                                                  "bb_final"))
    return ElementArray.concat(outs)


def bb_sort(arr: ElementArray, seed: Optional[int] = None,
            ctx: Optional[TaskContext] = None,
            params: Optional[PipelineParams] = None) -> ElementArray:
    """Permute, route by sampled pivots, bitonic-sort each bin.

    Falls back to a plain bitonic sort below 2^10 elements, where the
    polylog bin sizing is meaningless.
    """
    if ctx is None:
        ctx = TaskContext(seed=0 if seed is None else seed)
    if seed is None:
        seed = ctx.seed
    n = len(arr)
    if n <= 1:
        return arr.copy()
    if params is None:
        params = default_params(n)
    if n < SMALL_SORT_CUTOFF:
        return sort_padded(ctx, arr, "bb_small")

    last: Optional[Exception] = None
    for attempt in range(params.max_retries + 1):
        aseed = derive_attempt_seed(seed ^ 0x5BA5BA, attempt)
        actx = ctx.with_seed(aseed)
        try:
            perm = b_rpermute(arr, seed=aseed, ctx=actx, params=params)
            pivots = pick_pivots(perm, ctx=actx)
            start = RaggedBins.from_even_split(perm, pivots.regions)
            routed = rec_sba(start, pivots, params, ctx=actx)
            return _final_bin_sorts(actx, routed)
        except SbaOverflow as exc:
            ctx.add_retry()
            last = exc
    raise RetryBudgetExceeded(
        f"no cap-respecting attempt in {params.max_retries + 1} tries") from last


def _merge_sort(ctx: TaskContext, elems: ElementArray) -> ElementArray:
    """Bottom-up fork-join mergesort on (key, origin); counts the true
    number of comparisons.  Each pass streams its runs sequentially."""
    n = len(elems)
    if n <= 1:
        return elems.copy()
    hi, lo = plain_key(elems)
    idx = np.arange(n, dtype=np.uint64)
    oh, ol, oi = np.empty_like(hi), np.empty_like(lo), np.empty_like(idx)
    aid = 0
    if ctx.tracer is not None:
        aid = ctx.tracer.register("mergesort", 2 * n, words=4)
    width = 1
    while width < n:
        pairs = (n + 2 * width - 1) // (2 * width)
        comps = np.zeros(pairs, dtype=np.int64)
        _kernels.merge_pass(hi, lo, idx, oh, ol, oi, width, comps)
        c = int(comps.sum())
        ctx.add_comparisons(c, charge_work=False)
        ctx.add_work(2 * n + c)
        ctx.add_span(2 * _ceil_log2(max(n, 2)))
        if ctx.tracer is not None:
            seq = np.arange(n, dtype=np.int64)
            ctx.tracer.emit_rw(0, aid, seq)
            ctx.tracer.emit_rw(1, aid, n + seq)
        hi, oh = oh, hi
        lo, ol = ol, lo
        idx, oi = oi, idx
        width *= 2
    return elems.take(idx)


def butterfly_sort(arr: ElementArray, seed: Optional[int] = None,
                   ctx: Optional[TaskContext] = None,
                   params: Optional[PipelineParams] = None) -> ElementArray:
    """Oblivious permutation followed by an ordinary comparison mergesort;
    the post-permutation phase sees only a uniformly shuffled array."""
    if ctx is None:
        ctx = TaskContext(seed=0 if seed is None else seed)
    if seed is None:
        seed = ctx.seed
    n = len(arr)
    if n <= 1:
        return arr.copy()
    perm = b_rpermute(arr, seed=seed, ctx=ctx, params=params)
    return _merge_sort(ctx, perm)
