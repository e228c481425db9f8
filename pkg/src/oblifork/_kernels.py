"""Hot numeric kernels.

All sorting kernels operate on three parallel uint64 vectors: a major sort
word ``hi``, a minor tie-break word ``lo`` (always the element origin, so
the order is total) and a permutation carrier ``idx``.  Callers gather the
full payload once afterwards; comparators never move more than three words.

Direction rule for the sort network: the merge over block ``b`` at stage
``s`` ascends iff the requested direction XOR the parity of ``b`` is set.
This matches the recursive construction (left half ascending, right half
descending, merge with the caller's flag) exactly; a reference recursion in
the test suite pins the equivalence.
"""

import numpy as np
from numba import njit, prange


@njit(inline="always")
def _parity(v):
    v ^= v >> 32
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return v & 1


@njit(inline="always")
def _cx(hi, lo, idx, a, b, up):
    ha = hi[a]
    hb = hi[b]
    if up:
        do = ha > hb or (ha == hb and lo[a] > lo[b])
    else:
        do = ha < hb or (ha == hb and lo[a] < lo[b])
    if do:
        hi[a] = hb
        hi[b] = ha
        la = lo[a]
        lo[a] = lo[b]
        lo[b] = la
        ia = idx[a]
        idx[a] = idx[b]
        idx[b] = ia


@njit(cache=True)
def bitonic_sort_network(hi, lo, idx, ascending):
    """Evaluate the full n*k*(k+1)/4-comparator sorting network in place."""
    n = hi.shape[0]
    k = 0
    while (1 << k) < n:
        k += 1
    half = n >> 1
    for s in range(1, k + 1):
        d = 1 << (s - 1)
        while d >= 1:
            for t in range(half):
                a = (t // d) * (d << 1) + (t % d)
                b = a + d
                up = (_parity(a >> s) == 0) == ascending
                _cx(hi, lo, idx, a, b, up)
            d >>= 1
    return 0


@njit(cache=True)
def bitonic_merge_network(hi, lo, idx, ascending):
    """Evaluate one m-input reverse-butterfly merge in place."""
    m = hi.shape[0]
    half = m >> 1
    d = half
    while d >= 1:
        for t in range(half):
            a = (t // d) * (d << 1) + (t % d)
            _cx(hi, lo, idx, a, a + d, ascending)
        d >>= 1
    return 0


@njit(cache=True, parallel=True)
def bitonic_sort_rows(hi, lo, idx, ascending):
    """Sort each row of 2-D inputs independently (batched small sorts)."""
    rows, m = hi.shape
    k = 0
    while (1 << k) < m:
        k += 1
    half = m >> 1
    for r in prange(rows):
        h = hi[r]
        l = lo[r]
        x = idx[r]
        for s in range(1, k + 1):
            d = 1 << (s - 1)
            while d >= 1:
                for t in range(half):
                    a = (t // d) * (d << 1) + (t % d)
                    b = a + d
                    up = (_parity(a >> s) == 0) == ascending
                    _cx(h, l, x, a, b, up)
                d >>= 1
    return 0


@njit(cache=True, parallel=True)
def merge_pass(hi, lo, idx, out_hi, out_lo, out_idx, width, comps):
    """One bottom-up mergesort pass; per-pair comparison counts in comps."""
    n = hi.shape[0]
    pairs = (n + 2 * width - 1) // (2 * width)
    for p in prange(pairs):
        left = p * 2 * width
        mid = min(left + width, n)
        right = min(left + 2 * width, n)
        i = left
        j = mid
        o = left
        c = 0
        while i < mid and j < right:
            c += 1
            if hi[j] < hi[i] or (hi[j] == hi[i] and lo[j] < lo[i]):
                out_hi[o] = hi[j]
                out_lo[o] = lo[j]
                out_idx[o] = idx[j]
                j += 1
            else:
                out_hi[o] = hi[i]
                out_lo[o] = lo[i]
                out_idx[o] = idx[i]
                i += 1
            o += 1
        while i < mid:
            out_hi[o] = hi[i]
            out_lo[o] = lo[i]
            out_idx[o] = idx[i]
            i += 1
            o += 1
        while j < right:
            out_hi[o] = hi[j]
            out_lo[o] = lo[j]
            out_idx[o] = idx[j]
            j += 1
            o += 1
        comps[p] = c
    return 0


@njit(inline="always")
def _lru_touch(b, node_of_block, node_block, node_prev, node_next,
               misses, used, head, tail):
    capacity = node_block.shape[0]
    nd = node_of_block[b]
    if nd >= 0:
        if nd != head:
            p = node_prev[nd]
            nx = node_next[nd]
            if p >= 0:
                node_next[p] = nx
            if nx >= 0:
                node_prev[nx] = p
            if nd == tail:
                tail = p
            node_prev[nd] = -1
            node_next[nd] = head
            node_prev[head] = nd
            head = nd
    else:
        misses += 1
        if used < capacity:
            nd = used
            used += 1
        else:
            nd = tail
            node_of_block[node_block[nd]] = -1
            p = node_prev[nd]
            if p >= 0:
                node_next[p] = -1
            tail = p
            node_prev[nd] = -1
        node_block[nd] = b
        node_of_block[b] = nd
        node_next[nd] = head
        node_prev[nd] = -1
        if head >= 0:
            node_prev[head] = nd
        head = nd
        if tail < 0:
            tail = nd
    return misses, used, head, tail


@njit(cache=True)
def lru_feed(blocks, node_of_block, node_block, node_prev, node_next, state):
    """Stream block ids through a fully-associative LRU of fixed capacity.

    state = [misses, used, head, tail]; node arrays sized to the capacity,
    node_of_block sized to the total block count (dense ids, -1 = absent).
    """
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    for i in range(blocks.shape[0]):
        misses, used, head, tail = _lru_touch(
            blocks[i], node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def lru_feed_cx(ia, ib, base, words, blk, node_of_block, node_block,
                node_prev, node_next, state):
    """Feed comparator accesses (read a, read b, write a, write b).

    Returns a nonzero flag when an address falls outside the registered
    space (an instrumentation bug in the caller)."""
    nb = node_of_block.shape[0]
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    for t in range(ia.shape[0]):
        ba = (base + ia[t] * words) // blk
        bb = (base + ib[t] * words) // blk
        if ba < 0 or ba >= nb or bb < 0 or bb >= nb:
            return 1
        misses, used, head, tail = _lru_touch(
            ba, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
        misses, used, head, tail = _lru_touch(
            bb, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
        misses, used, head, tail = _lru_touch(
            ba, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
        misses, used, head, tail = _lru_touch(
            bb, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def lru_feed_move(src_idx, dst_idx, sbase, swords, dbase, dwords, blk,
                  node_of_block, node_block, node_prev, node_next, state):
    """Feed element moves (read src, write dst), interleaved per element."""
    nb = node_of_block.shape[0]
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    for t in range(src_idx.shape[0]):
        bs = (sbase + src_idx[t] * swords) // blk
        bd = (dbase + dst_idx[t] * dwords) // blk
        if bs < 0 or bs >= nb or bd < 0 or bd >= nb:
            return 1
        misses, used, head, tail = _lru_touch(
            bs, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
        misses, used, head, tail = _lru_touch(
            bd, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def lru_feed_rw(idx, base, words, blk, node_of_block, node_block, node_prev,
                node_next, state):
    nb = node_of_block.shape[0]
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    for t in range(idx.shape[0]):
        b = (base + idx[t] * words) // blk
        if b < 0 or b >= nb:
            return 1
        misses, used, head, tail = _lru_touch(
            b, node_of_block, node_block, node_prev, node_next,
            misses, used, head, tail)
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def lru_feed_cx_batch(ia, ib, seg_base, seg_words, seg_end, blk,
                      node_of_block, node_block, node_prev, node_next, state):
    """Buffered comparator feeds: segments share one kernel dispatch."""
    nb = node_of_block.shape[0]
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    start = 0
    for s in range(seg_end.shape[0]):
        base = seg_base[s]
        words = seg_words[s]
        end = seg_end[s]
        for t in range(start, end):
            ba = (base + ia[t] * words) // blk
            bb = (base + ib[t] * words) // blk
            if ba < 0 or ba >= nb or bb < 0 or bb >= nb:
                return 1
            misses, used, head, tail = _lru_touch(
                ba, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
            misses, used, head, tail = _lru_touch(
                bb, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
            misses, used, head, tail = _lru_touch(
                ba, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
            misses, used, head, tail = _lru_touch(
                bb, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
        start = end
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def lru_feed_merge_net(m, base, words, blk, node_of_block, node_block,
                       node_prev, node_next, state):
    """Feed the full access stream of one inline m-input merge network."""
    nb = node_of_block.shape[0]
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    half = m >> 1
    d = half
    while d >= 1:
        for t in range(half):
            a = (t // d) * (d << 1) + (t % d)
            ba = (base + a * words) // blk
            bb = (base + (a + d) * words) // blk
            if ba < 0 or ba >= nb or bb < 0 or bb >= nb:
                return 1
            misses, used, head, tail = _lru_touch(
                ba, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
            misses, used, head, tail = _lru_touch(
                bb, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
            misses, used, head, tail = _lru_touch(
                ba, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
            misses, used, head, tail = _lru_touch(
                bb, node_of_block, node_block, node_prev, node_next,
                misses, used, head, tail)
        d >>= 1
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def lru_feed_sort_net(m, base, words, blk, node_of_block, node_block,
                      node_prev, node_next, state):
    """Feed the full access stream of one inline m-input sort network."""
    nb = node_of_block.shape[0]
    misses, used, head, tail = state[0], state[1], state[2], state[3]
    k = 0
    while (1 << k) < m:
        k += 1
    half = m >> 1
    for s in range(1, k + 1):
        d = 1 << (s - 1)
        while d >= 1:
            for t in range(half):
                a = (t // d) * (d << 1) + (t % d)
                ba = (base + a * words) // blk
                bb = (base + (a + d) * words) // blk
                if ba < 0 or ba >= nb or bb < 0 or bb >= nb:
                    return 1
                misses, used, head, tail = _lru_touch(
                    ba, node_of_block, node_block, node_prev, node_next,
                    misses, used, head, tail)
                misses, used, head, tail = _lru_touch(
                    bb, node_of_block, node_block, node_prev, node_next,
                    misses, used, head, tail)
                misses, used, head, tail = _lru_touch(
                    ba, node_of_block, node_block, node_prev, node_next,
                    misses, used, head, tail)
                misses, used, head, tail = _lru_touch(
                    bb, node_of_block, node_block, node_prev, node_next,
                    misses, used, head, tail)
            d >>= 1
    state[0], state[1], state[2], state[3] = misses, used, head, tail
    return 0


@njit(cache=True)
def cx_apply_flag(hi, lo, idx, a, b, up):
    """Apply comparators with one shared direction."""
    for t in range(a.shape[0]):
        _cx(hi, lo, idx, a[t], b[t], up)
    return 0


@njit(cache=True)
def cx_apply_stage(hi, lo, idx, a, b, s, ascending):
    """Apply one sort-network stage layer; direction follows the parity of
    each comparator's block index at stage s."""
    for t in range(a.shape[0]):
        aa = a[t]
        up = (_parity(aa >> s) == 0) == ascending
        _cx(hi, lo, idx, aa, b[t], up)
    return 0
