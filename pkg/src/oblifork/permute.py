"""Oblivious uniform random permutation through the butterfly.

Pipeline: pad to the bin shape, draw routing labels, run the recursive bin
assignment, sort each bin by fresh 64-bit permutation labels (fillers sort
as infinity), then reveal the bin loads and compact.  The pre-compaction
trace is a function of (n, seed) alone; the revealed loads are determined
by the routing coins, never by the input values.

Permutation labels are drawn from [0, 2^63): the top bit is reserved so a
filler's infinity never collides with a real label.  A label collision
inside a bin (probability under Z^2 / 2^63 per bin) redraws that bin's
labels and re-sorts it; both the overflow retry and the collision redraw
depend only on coins, so retries preserve obliviousness.
"""

from __future__ import annotations

import hashlib
from typing import Optional, Tuple

import numpy as np

from .bitonic import sort_region, sort_rows_region
from .blocks import compact_reveal
from .core import (BinMatrix, ElementArray, FILLER, PipelineParams, REAL,
                   Region, U64_MAX, default_params, pad_to_shape)
from .fork_join import TaskContext
from .orba import (Overflow, RetryBudgetExceeded, assign_labels, orba_assign)

_PERM_LABEL_BITS = 63


def derive_attempt_seed(seed: int, attempt: int) -> int:
    """Fresh deterministic seed for retry attempt k of a pipeline run."""
    if attempt == 0:
        return int(seed) & 0xFFFFFFFFFFFFFFFF
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(int(attempt).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def _label_key(elems: ElementArray) -> Tuple[np.ndarray, np.ndarray]:
    hi = np.where(elems.kind == FILLER, U64_MAX, elems.label)
    return hi, elems.origin.copy()


def _bin_label_sort(ctx: TaskContext, bins: BinMatrix,
                    label_bits: int) -> None:
    """Fresh labels for every slot, then sort each bin by (label, origin);
    colliding bins redraw and re-sort until collision-free."""
    beta, Z = bins.n_bins, bins.Z
    e = bins.elems
    aid = scr = 0
    scratch = None
    if ctx.tracer is not None:
        aid = ctx.tracer.register("perm_bins", beta * Z, words=4)
        scr = ctx.tracer.register("perm_scratch", beta * Z, words=4)
        scratch = Region(ElementArray.empty(beta * Z), scr, 0)
    region = Region(e, aid, 0)

    labels = ctx.rng.integers(0, 1 << label_bits, size=beta * Z, dtype=np.uint64)
    e.label[:] = labels
    ctx.write_block(region.aid, region.gidx(np.arange(beta * Z, dtype=np.int64)))
    ctx.add_span(1)

    sort_rows_region(ctx, region, scratch, beta, Z, key_fn=_label_key)

    # collision scan: adjacent equal labels among reals within one bin
    for _ in range(64):
        lab2 = e.label.reshape(beta, Z)
        real2 = (e.kind == REAL).reshape(beta, Z)
        dup = (lab2[:, 1:] == lab2[:, :-1]) & real2[:, 1:] & real2[:, :-1]
        bad = np.flatnonzero(dup.any(axis=1))
        ctx.read_block(region.aid, region.gidx(np.arange(beta * Z,
                                                         dtype=np.int64)))
        ctx.add_span(1)
        if bad.shape[0] == 0:
            return
        for b in bad:
            b = int(b)
            fresh = ctx.rng.integers(0, 1 << label_bits, size=Z, dtype=np.uint64)
            e.label[b * Z:(b + 1) * Z] = fresh
            ctx.write_block(region.aid,
                            region.gidx(np.arange(b * Z, (b + 1) * Z,
                                                  dtype=np.int64)))
            sub_scr = scratch.sub(b * Z, (b + 1) * Z) if scratch else None
            sort_region(ctx, region.sub(b * Z, (b + 1) * Z), sub_scr,
                        key_fn=_label_key)
    raise RetryBudgetExceeded("persistent label collisions inside a bin")


def b_rpermute(arr: ElementArray, seed: Optional[int] = None,
               ctx: Optional[TaskContext] = None,
               params: Optional[PipelineParams] = None,
               stop_before_compaction: bool = False,
               label_bits: int = _PERM_LABEL_BITS,
               return_run_info: bool = False):
    """Uniform random permutation of the real elements of ``arr``.

    Returns a permuted :class:`ElementArray` (or the padded bin matrix when
    stopping before compaction).  Overflow retries draw a fresh seed from
    (seed, attempt); the retry budget comes from the parameters.  With
    ``return_run_info`` the result is paired with the :class:`OrbaRun`
    metadata of the successful attempt.
    """
    from .core import ilog2
    from .orba import OrbaRun

    if ctx is None:
        ctx = TaskContext(seed=0 if seed is None else seed)
    if seed is None:
        seed = ctx.seed
    n = len(arr)
    if n == 0:
        return (arr.copy(), None) if return_run_info else arr.copy()
    if params is None:
        params = default_params(n)

    last_exc: Optional[Exception] = None
    for attempt in range(params.max_retries + 1):
        aseed = derive_attempt_seed(seed, attempt)
        actx = ctx.with_seed(aseed)
        try:
            padded = pad_to_shape(arr, params)
            labeled = assign_labels(padded, params.beta, ctx=actx)
            bins = orba_assign(labeled, params, ctx=actx)
            _bin_label_sort(actx, bins, label_bits)
            if stop_before_compaction:
                out = bins
            else:
                out = compact_reveal(bins, ctx=actx)[:n]  # reals only remain
            if return_run_info:
                run = OrbaRun(params=params, seed=aseed,
                              label_bits=ilog2(params.beta), retries=attempt)
                return out, run
            return out
        except Overflow as exc:
            ctx.add_retry()
            last_exc = exc
    raise RetryBudgetExceeded(
        f"no overflow-free attempt in {params.max_retries + 1} tries") from last_exc


def permute_keys(keys: np.ndarray, seed: int,
                 ctx: Optional[TaskContext] = None) -> np.ndarray:
    """Convenience wrapper: permute a plain u64 key array."""
    arr = ElementArray.from_keys(np.asarray(keys, dtype=np.uint64))
    out = b_rpermute(arr, seed=seed, ctx=ctx)
    return out.key.copy()
