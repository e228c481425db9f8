"""Named operations for the obliviousness checker and the CLI.

Each entry knows how to generate a random input of a given size and how to
run the operation under a task context at a fixed seed.  The deliberately
non-oblivious quicksort control lives here too: its partition walk touches
addresses that depend on the stored values, so distinct inputs at equal
length produce distinct trace digests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .apps import SuccessorArray, emulate_crcw_step, euler_tour, list_rank, \
    undirected_to_edgelist
from .bitonic import bitonic_sort
from .blocks import bin_place, send_receive
from .core import ElementArray, default_params, next_pow2, pad_to_shape
from .fork_join import TaskContext
from .orba import assign_labels, orba_assign
from .permute import b_rpermute
from .primitives import prefix_sum, propagate, segmented_suffix
from .rsort import bb_sort


@dataclass(frozen=True)
class RegisteredOp:
    name: str
    generate: Callable[[np.random.Generator, int], object]
    run: Callable[[TaskContext, object], object]
    oblivious: bool = True


def _gen_keys(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 1 << 62, n, dtype=np.uint64)


def _run_bitonic(ctx, keys):
    return bitonic_sort(ElementArray.from_keys(keys), ctx=ctx)


def _gen_binplace(rng, n):
    beta = max(2, next_pow2(max(n // 16, 2)))
    Z = next_pow2(max(4 * ((n + beta - 1) // beta), 4))
    arr = ElementArray.from_keys(_gen_keys(rng, n))
    arr.group[:] = rng.integers(0, beta, n, dtype=np.uint32)
    return arr, beta, Z


def _run_binplace(ctx, inp):
    arr, beta, Z = inp
    return bin_place(arr, beta, Z, ctx=ctx)


def _run_rec_orba(ctx, keys):
    params = default_params(keys.shape[0])
    padded = pad_to_shape(ElementArray.from_keys(keys), params)
    labeled = assign_labels(padded, params.beta, ctx=ctx)
    return orba_assign(labeled, params, ctx=ctx)


def _run_permute_pre(ctx, keys):
    return b_rpermute(ElementArray.from_keys(keys), ctx=ctx,
                      stop_before_compaction=True)


def _run_permute(ctx, keys):
    return b_rpermute(ElementArray.from_keys(keys), ctx=ctx)


def _gen_send_receive(rng, n):
    src = rng.permutation(np.arange(1, 4 * n + 1, dtype=np.uint64))[:n]
    vals = _gen_keys(rng, n)
    dst = rng.integers(1, 4 * n + 1, n, dtype=np.uint64)
    return src, vals, dst


def _run_send_receive(ctx, inp):
    src, vals, dst = inp
    return send_receive(src, vals, dst, ctx=ctx)


def _gen_grouped(rng, n):
    keys = np.sort(rng.integers(0, max(n // 4, 1), n).astype(np.uint64))
    vals = rng.integers(0, 1 << 30, n, dtype=np.uint64)
    return keys, vals


def _run_aggregation(ctx, inp):
    keys, vals = inp
    return segmented_suffix(keys, vals, "add", ctx=ctx)


def _run_propagation(ctx, inp):
    keys, vals = inp
    return propagate(keys, vals, ctx=ctx)


def _run_prefix(ctx, vals):
    return prefix_sum(vals, "add", ctx=ctx)


def _gen_list(rng, n):
    order = rng.permutation(n) + 1
    succ = np.zeros(n, dtype=np.uint64)
    for i in range(n - 1):
        succ[order[i] - 1] = order[i + 1]
    return SuccessorArray(succ)


def _run_list_rank(ctx, S):
    return list_rank(S, seed=ctx.seed, ctx=ctx)


def _gen_tree(rng, n):
    parents = [int(rng.integers(0, i)) for i in range(1, n)]
    und = np.array([[p + 1, i + 2] for i, p in enumerate(parents)],
                   dtype=np.uint64)
    return undirected_to_edgelist(und)


def _run_euler(ctx, edges):
    return euler_tour(edges, ctx=ctx)


def _gen_crcw(rng, n):
    s = 2 * n
    ops = rng.integers(0, 2, n).astype(np.uint8)
    addrs = rng.integers(0, s, n).astype(np.uint64)
    vals = rng.integers(0, 1 << 30, n, dtype=np.uint64)
    mem = rng.integers(0, 1 << 30, s, dtype=np.uint64)
    return ops, addrs, vals, mem


def _run_crcw(ctx, inp):
    ops, addrs, vals, mem = inp
    return emulate_crcw_step(ops, addrs, vals, mem, ctx=ctx)


def _run_quicksort_control(ctx, keys):
    """In-place quicksort whose traced addresses follow the data."""
    a = keys.copy()
    n = a.shape[0]
    aid = 0
    if ctx.tracer is not None:
        aid = ctx.tracer.register("quicksort", n, words=1)

    def emit_rw(op, idx):
        if ctx.tracer is not None and idx.shape[0]:
            ctx.tracer.emit_rw(op, aid, idx)
        ctx.add_work(int(idx.shape[0]))

    def rec(lo, hi):
        if hi - lo <= 1:
            return
        pivot = a[hi - 1]
        emit_rw(0, np.array([hi - 1], dtype=np.int64))
        span = np.arange(lo, hi - 1, dtype=np.int64)
        emit_rw(0, span)
        ctx.add_comparisons(int(span.shape[0]), charge_work=False)
        mask = a[lo:hi - 1] < pivot
        less = span[mask]
        i = lo + less.shape[0]
        emit_rw(1, less)  # the swap targets trace the partition layout
        emit_rw(1, np.arange(lo, i, dtype=np.int64))
        left = a[lo:hi - 1][mask]
        right = a[lo:hi - 1][~mask]
        a[lo:i] = left
        a[i + 1:hi] = right
        a[i] = pivot
        emit_rw(1, np.array([i], dtype=np.int64))
        rec(lo, i)
        rec(i + 1, hi)

    ctx.add_span(int(np.ceil(np.log2(max(n, 2)))))
    rec(0, n)
    return a


def _run_bb(ctx, keys):
    return bb_sort(ElementArray.from_keys(keys), seed=ctx.seed, ctx=ctx)


OPS: Dict[str, RegisteredOp] = {}


def _add(name, generate, run, oblivious=True):
    OPS[name] = RegisteredOp(name, generate, run, oblivious)


_add("bitonic_sort", _gen_keys, _run_bitonic)
_add("bin_place", _gen_binplace, _run_binplace)
_add("rec_orba", _gen_keys, _run_rec_orba)
_add("b_rpermute_pre", _gen_keys, _run_permute_pre)
_add("b_rpermute", _gen_keys, _run_permute)
_add("send_receive", _gen_send_receive, _run_send_receive)
_add("aggregation", _gen_grouped, _run_aggregation)
_add("propagation", _gen_grouped, _run_propagation)
_add("prefix_sum", _gen_keys, _run_prefix)
_add("list_rank", _gen_list, _run_list_rank)
_add("euler_tour", _gen_tree, _run_euler)
_add("emulate_crcw_step", _gen_crcw, _run_crcw)
_add("quicksort_control", _gen_keys, _run_quicksort_control, oblivious=False)
_add("bb_sort", _gen_keys, _run_bb, oblivious=False)


def get_op(name: str) -> RegisteredOp:
    if name not in OPS:
        raise KeyError(f"unknown operation {name!r}; known: "
                       f"{', '.join(sorted(OPS))}")
    return OPS[name]
