"""Oblivious random bin assignment over a gamma-way butterfly.

Each real element draws a uniform label in [0, beta); after the butterfly,
output bin b holds exactly the reals labeled b, padded to capacity Z.
Label bits are consumed most-significant-first.

Two drivers share the bin-placement subroutine:

* ``meta_orba`` walks the butterfly layer by layer: layer i groups bins at
  stride P within blocks of P*R (P = product of the radices already done,
  R = this layer's radix) and distributes each group of R bins into R
  consecutive output bins keyed on the next log2(R) label bits.  When the
  remaining bits are fewer than log2(gamma), the final layer uses the
  smaller leftover radix.
* ``rec_orba`` computes the identical assignment cache-agnostically: split
  beta bins into 2^ceil(b/2) partitions of 2^floor(b/2) consecutive bins,
  recurse on the partitions (most significant half of the remaining bits),
  transpose the partition-by-output bin matrix, recurse on its rows (least
  significant half), and return the rows in order.

A bin asked to hold more than Z reals aborts the attempt with Overflow;
the caller retries with a fresh seed rather than dropping elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .blocks import GroupOverflow, bin_place_region, label_bits_codec
from .core import (BinMatrix, ElementArray, FILLER, PipelineParams, REAL,
                   Region, U64_MAX, ilog2)
from .fork_join import TaskContext, parallel_for
from .primitives import transpose_region


class Overflow(RuntimeError):
    """An intermediate butterfly bin overflowed; retry with a fresh seed."""

    def __init__(self, layer: Optional[int], bin_id: Optional[int]):
        super().__init__(f"butterfly bin overflow (layer={layer}, bin={bin_id})")
        self.layer = layer
        self.bin_id = bin_id


class RetryBudgetExceeded(RuntimeError):
    """All retry attempts of a randomized pipeline overflowed."""


@dataclass(frozen=True)
class OrbaRun:
    """Metadata of one bin-assignment run."""

    params: PipelineParams
    seed: int
    label_bits: int
    retries: int = 0


def assign_labels(arr: ElementArray, beta: int,
                  ctx: Optional[TaskContext] = None) -> ElementArray:
    """Uniform independent labels in [0, beta) for the real elements.

    One draw is made per slot in input order, so the label vector is a
    function of (seed, origin) alone; fillers stay unlabeled.
    """
    ilog2(beta)
    if ctx is None:
        ctx = TaskContext()
    out = arr.copy()
    labels = ctx.rng.integers(0, beta, size=len(arr), dtype=np.uint64)
    out.label[:] = np.where(out.kind == REAL, labels, np.uint64(0))
    return out


def _arrange_into_bins(ctx: TaskContext, inp: Region, main: Region,
                       params: PipelineParams) -> None:
    """Spread beta*Z/2 slots into beta bins of Z, each half fillers."""
    Z, beta = params.Z, params.beta
    half = Z // 2
    n_in = beta * half
    src = np.arange(n_in, dtype=np.int64)
    dst = (src // half) * Z + (src % half)
    ctx.move_block(main.aid, main.gidx(dst), inp.aid, inp.gidx(src))
    main.assign_from(dst, inp, src)

    lane = np.arange(half, Z, dtype=np.int64)
    fidx = (np.arange(beta, dtype=np.int64)[:, None] * Z + lane[None, :]).ravel()
    e = main.elems
    e.kind[fidx] = FILLER
    e.key[fidx] = U64_MAX
    e.value[fidx] = U64_MAX
    e.label[fidx] = 0
    e.group[fidx] = 0
    e.origin[fidx] = np.arange(n_in, n_in + fidx.shape[0], dtype=np.uint64)
    ctx.write_block(main.aid, main.gidx(fidx))
    ctx.add_span(1)


def _layer_radices(beta: int, gamma: int) -> list:
    bits = ilog2(beta)
    g = ilog2(gamma)
    out = []
    while bits > 0:
        r = min(g, bits)
        out.append(1 << r)
        bits -= r
    return out


def _register_run(ctx: TaskContext, params: PipelineParams):
    # the work and sort-scratch slabs hold one placement instance and are
    # reused group after group: scratch is only touched under tracing,
    # which is pinned to the sequential backend, and the reuse is what a
    # cache-respecting sequential execution would do anyway
    beta, Z = params.beta, params.Z
    slab = 4 * params.gamma * Z
    aids = {"input": 0, "main": 0, "aux": 0, "work": 0, "sscr": 0}
    if ctx.tracer is not None:
        aids["input"] = ctx.tracer.register("orba_input", beta * Z // 2, words=4)
        aids["main"] = ctx.tracer.register("orba_bins", beta * Z, words=4)
        aids["aux"] = ctx.tracer.register("orba_aux", beta * Z, words=4)
        aids["work"] = ctx.tracer.register("orba_work", slab, words=4)
        aids["sscr"] = ctx.tracer.register("orba_sort_scratch", slab, words=4)
    return aids


def meta_orba(inp: ElementArray, params: PipelineParams,
              ctx: Optional[TaskContext] = None) -> BinMatrix:
    """Iterative butterfly bin assignment (the reference meta-algorithm)."""
    if ctx is None:
        ctx = TaskContext()
    beta, Z = params.beta, params.Z
    if len(inp) != beta * Z // 2:
        raise ValueError("input must hold beta*Z/2 slots")
    bits = ilog2(beta)
    aids = _register_run(ctx, params)
    slab = 4 * params.gamma * Z
    cur = Region(ElementArray.empty(beta * Z), aids["main"], 0)
    nxt = Region(ElementArray.empty(beta * Z), aids["aux"], 0)
    work = Region(ElementArray.empty(slab), aids["work"], 0)
    sscr = Region(ElementArray.empty(slab), aids["sscr"], 0)
    _arrange_into_bins(ctx, Region(inp.copy(), aids["input"], 0), cur, params)

    consumed = 0
    for layer, radix in enumerate(_layer_radices(beta, params.gamma)):
        r_log = ilog2(radix)
        stride = 1 << consumed
        shift = bits - consumed - r_log
        codec = label_bits_codec(shift, radix - 1)

        def body(c: TaskContext, j: int):
            q, r = divmod(j, stride)
            in_bins = q * stride * radix + r + np.arange(radix) * stride
            parts = [cur.sub(int(b) * Z, (int(b) + 1) * Z) for b in in_bins]
            try:
                bin_place_region(
                    c, parts,
                    nxt.sub(j * radix * Z, (j + 1) * radix * Z),
                    work.sub(0, 2 * radix * Z),
                    sscr.sub(0, 2 * radix * Z),
                    radix, Z, codec, layer=layer)
            except GroupOverflow as exc:
                raise Overflow(layer, j * radix + (exc.bin_id or 0)) from exc

        parallel_for(ctx, beta // radix, body)
        cur, nxt = nxt, cur
        consumed += r_log
    return BinMatrix(1, beta, Z, cur.elems)


def _rec(ctx: TaskContext, data: Region, aux: Region, work: Region,
         sscr: Region, s: int, params: PipelineParams, total_bits: int) -> None:
    Z = params.Z
    b = len(data) // Z
    if b <= params.gamma:
        r_log = ilog2(b)
        shift = total_bits - s - r_log
        codec = label_bits_codec(shift, b - 1)
        try:
            bin_place_region(ctx, [data], data,
                             work.sub(0, 2 * b * Z),
                             sscr.sub(0, 2 * b * Z),
                             b, Z, codec)
        except GroupOverflow as exc:
            raise Overflow(None, exc.bin_id) from exc
        return
    bits = ilog2(b)
    b1 = 1 << ((bits + 1) // 2)  # partitions, sqrt rounded up to a power of 2
    b2 = b // b1

    def phase1(c: TaskContext, j: int):
        _rec(c, data.sub(j * b2 * Z, (j + 1) * b2 * Z),
             aux.sub(j * b2 * Z, (j + 1) * b2 * Z), work, sscr,
             s, params, total_bits)

    parallel_for(ctx, b1, phase1)
    transpose_region(ctx, data, aux, rows=b1, cols=b2, z=Z)

    def phase2(c: TaskContext, i: int):
        _rec(c, aux.sub(i * b1 * Z, (i + 1) * b1 * Z),
             data.sub(i * b1 * Z, (i + 1) * b1 * Z), work, sscr,
             s + ilog2(b2), params, total_bits)

    parallel_for(ctx, b2, phase2)
    idx = np.arange(len(data), dtype=np.int64)
    ctx.move_block(data.aid, data.gidx(idx), aux.aid, aux.gidx(idx))
    data.assign_from(idx, aux, idx)


def rec_orba(bins: BinMatrix, s: int, params: PipelineParams,
             ctx: Optional[TaskContext] = None) -> BinMatrix:
    """Recursive cache-agnostic bin assignment; equivalent bin-for-bin to
    the meta-algorithm on the same labeled input.

    ``s`` is the 0-indexed offset (from the most significant end) of the
    first unconsumed label bit; the whole assignment starts at s = 0.
    """
    if ctx is None:
        ctx = TaskContext()
    beta, Z = params.beta, params.Z
    if bins.n_bins != beta or bins.Z != Z:
        raise ValueError("bin matrix does not match the parameters")
    aids = _register_run(ctx, params)
    slab = 4 * params.gamma * Z
    data = Region(bins.elems.copy(), aids["main"], 0)
    aux = Region(ElementArray.empty(beta * Z), aids["aux"], 0)
    work = Region(ElementArray.empty(slab), aids["work"], 0)
    sscr = Region(ElementArray.empty(slab), aids["sscr"], 0)
    _rec(ctx, data, aux, work, sscr, s, params, ilog2(beta))
    return BinMatrix(1, beta, Z, data.elems)


def orba_assign(inp: ElementArray, params: PipelineParams,
                ctx: Optional[TaskContext] = None,
                check_promise: bool = False) -> BinMatrix:
    """Arrange a labeled beta*Z/2 input into bins and run the recursive
    assignment (the pipeline entry used by the permutation)."""
    if ctx is None:
        ctx = TaskContext()
    beta, Z = params.beta, params.Z
    if len(inp) != beta * Z // 2:
        raise ValueError("input must hold beta*Z/2 slots")
    aids = _register_run(ctx, params)
    slab = 4 * params.gamma * Z
    data = Region(ElementArray.empty(beta * Z), aids["main"], 0)
    aux = Region(ElementArray.empty(beta * Z), aids["aux"], 0)
    work = Region(ElementArray.empty(slab), aids["work"], 0)
    sscr = Region(ElementArray.empty(slab), aids["sscr"], 0)
    _arrange_into_bins(ctx, Region(inp.copy(), aids["input"], 0), data, params)
    if check_promise:
        loads = (data.elems.kind == REAL).reshape(beta, Z).sum(axis=1)
        if int(loads.max(initial=0)) > Z // 2:
            raise ValueError("entry promise violated: a bin holds more than "
                             "Z/2 real elements")
    _rec(ctx, data, aux, work, sscr, 0, params, ilog2(beta))
    return BinMatrix(1, beta, Z, data.elems)
