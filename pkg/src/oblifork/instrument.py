"""Access tracing, ideal-cache simulation and obliviousness checking.

The trace of a run is the canonical sequence of logical memory events under
the sequential (depth-first, left-before-right) serialization of the fork
tree.  The adversary model observes addresses even on cache hits, so every
logical slot access appears in the trace; the 256-bit digest over the packed
event stream is the object obliviousness is asserted on: one operation is
accepted as oblivious when distinct inputs at fixed (n, seed) produce one
identical digest.

Cache misses are counted by a fully-associative LRU over word addresses.
Registered arrays get block-aligned base addresses; an element of an array
registered with ``words`` words per item occupies words contiguous words,
so accesses never straddle blocks.  Compare/Fork/Join events cost no memory
traffic.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ._kernels import (lru_feed, lru_feed_cx, lru_feed_cx_batch,
                       lru_feed_merge_net, lru_feed_move, lru_feed_rw,
                       lru_feed_sort_net)
from .fork_join import CostAcc, SequentialBackend, TaskContext

READ, WRITE, COMPARE, FORK, JOIN = 0, 1, 2, 3, 4
OP_NAMES = ("Read", "Write", "Compare", "Fork", "Join")

EVENT_DTYPE = np.dtype([("op", "u1"), ("aid", "<u4"), ("idx", "<u8")])

_CX_OPS = np.array([READ, READ, COMPARE, WRITE, WRITE], dtype=np.uint8)
_MOVE_OPS = np.array([READ, WRITE], dtype=np.uint8)


@dataclass(frozen=True)
class CacheConfig:
    """Ideal-cache parameters: M and B in words."""

    M: int
    B: int
    words_per_element: int = 4

    def __post_init__(self):
        if self.B < 1 or self.M % self.B != 0 or self.M < 2 * self.B:
            raise ValueError("need B >= 1, B | M and M >= 2B")

    @property
    def lines(self) -> int:
        return self.M // self.B


@dataclass
class CostReport:
    work: int = 0
    span: int = 0
    comparisons: int = 0
    cache_misses: int = 0
    retries: int = 0
    wall_nanos: int = 0

    def as_json_dict(self) -> dict:
        return {
            "work": self.work,
            "span": self.span,
            "comparisons": self.comparisons,
            "cacheMisses": self.cache_misses,
            "retries": self.retries,
            "wallNanos": self.wall_nanos,
        }

    @classmethod
    def from_acc(cls, acc: CostAcc, cache_misses: int = 0,
                 wall_nanos: int = 0) -> "CostReport":
        return cls(work=acc.work, span=acc.span, comparisons=acc.comparisons,
                   cache_misses=cache_misses, retries=acc.retries,
                   wall_nanos=wall_nanos)


@dataclass(frozen=True)
class TraceEvent:
    op: int
    array_id: int
    index: int

    def __str__(self) -> str:
        return f"{OP_NAMES[self.op]} {self.array_id} {self.index}"


@dataclass
class Trace:
    """Canonical event sequence of one run plus its digest."""

    digest: bytes
    n_events: int
    arrays: List[Tuple[str, int, int]]
    events: Optional[np.ndarray] = None  # EVENT_DTYPE, present when captured

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def event(self, i: int) -> TraceEvent:
        if self.events is None:
            raise ValueError("trace was recorded without event capture")
        row = self.events[i]
        return TraceEvent(int(row["op"]), int(row["aid"]), int(row["idx"]))

    def iter_events(self):
        if self.events is None:
            raise ValueError("trace was recorded without event capture")
        for row in self.events:
            yield TraceEvent(int(row["op"]), int(row["aid"]), int(row["idx"]))

    def dump_lines(self):
        for ev in self.iter_events():
            yield str(ev)


class UnregisteredArrayError(RuntimeError):
    """An event referenced an array id or index the tracer does not know."""


class CacheSim:
    """Streaming fully-associative LRU over block ids."""

    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        self.total_words = 0
        self._bases: List[int] = []
        self._words: List[int] = []
        self.base_arr = np.zeros(0, dtype=np.int64)
        self.words_arr = np.zeros(0, dtype=np.int64)
        cap = cfg.lines
        self._node_block = np.full(cap, -1, dtype=np.int64)
        self._node_prev = np.full(cap, -1, dtype=np.int64)
        self._node_next = np.full(cap, -1, dtype=np.int64)
        self._node_of_block = np.full(0, -1, dtype=np.int64)
        self._state = np.array([0, 0, -1, -1], dtype=np.int64)
        self._cx_ia: List[np.ndarray] = []
        self._cx_ib: List[np.ndarray] = []
        self._cx_base: List[int] = []
        self._cx_words: List[int] = []
        self._cx_pending = 0

    def add_array(self, length: int, words: int) -> int:
        if self.cfg.B % words != 0:
            raise ValueError("item width must divide the block size")
        base = -(-self.total_words // self.cfg.B) * self.cfg.B
        self.total_words = base + length * words
        self._bases.append(base)
        self._words.append(words)
        self.base_arr = np.array(self._bases, dtype=np.int64)
        self.words_arr = np.array(self._words, dtype=np.int64)
        nblocks = -(-self.total_words // self.cfg.B)
        if nblocks > self._node_of_block.shape[0]:
            grown = np.full(nblocks, -1, dtype=np.int64)
            grown[: self._node_of_block.shape[0]] = self._node_of_block
            self._node_of_block = grown
        return base

    def feed(self, aids: np.ndarray, idx: np.ndarray) -> None:
        if aids.shape[0] == 0:
            return
        self._flush_cx()
        blocks = (self.base_arr[aids] + idx.astype(np.int64) * self.words_arr[aids]) \
            // self.cfg.B
        lru_feed(blocks, self._node_of_block, self._node_block,
                 self._node_prev, self._node_next, self._state)

    def feed_cx(self, aid: int, ia: np.ndarray, ib: np.ndarray,
                off: int = 0) -> None:
        # buffered: comparator streams between other events share a dispatch
        self._cx_ia.append(ia)
        self._cx_ib.append(ib)
        self._cx_base.append(self._bases[aid] + off * self._words[aid])
        self._cx_words.append(self._words[aid])
        self._cx_pending += ia.shape[0]
        if self._cx_pending >= (1 << 16):
            self._flush_cx()

    def _flush_cx(self) -> None:
        if not self._cx_ia:
            return
        ia = np.concatenate(self._cx_ia) if len(self._cx_ia) > 1 else self._cx_ia[0]
        ib = np.concatenate(self._cx_ib) if len(self._cx_ib) > 1 else self._cx_ib[0]
        seg_end = np.cumsum([a.shape[0] for a in self._cx_ia]).astype(np.int64)
        seg_base = np.array(self._cx_base, dtype=np.int64)
        seg_words = np.array(self._cx_words, dtype=np.int64)
        self._cx_ia.clear()
        self._cx_ib.clear()
        self._cx_base.clear()
        self._cx_words.clear()
        self._cx_pending = 0
        bad = lru_feed_cx_batch(ia, ib, seg_base, seg_words, seg_end,
                                self.cfg.B, self._node_of_block,
                                self._node_block, self._node_prev,
                                self._node_next, self._state)
        if bad:
            raise UnregisteredArrayError("comparator address out of range")

    def feed_merge_net(self, aid: int, off: int, m: int) -> None:
        self._flush_cx()
        bad = lru_feed_merge_net(m, self._bases[aid] + off * self._words[aid],
                                 self._words[aid], self.cfg.B,
                                 self._node_of_block, self._node_block,
                                 self._node_prev, self._node_next, self._state)
        if bad:
            raise UnregisteredArrayError("merge window out of range")

    def feed_sort_net(self, aid: int, off: int, m: int) -> None:
        self._flush_cx()
        bad = lru_feed_sort_net(m, self._bases[aid] + off * self._words[aid],
                                self._words[aid], self.cfg.B,
                                self._node_of_block, self._node_block,
                                self._node_prev, self._node_next, self._state)
        if bad:
            raise UnregisteredArrayError("sort window out of range")

    def feed_move(self, dst_aid: int, dst_idx: np.ndarray,
                  src_aid: int, src_idx: np.ndarray) -> None:
        self._flush_cx()
        bad = lru_feed_move(src_idx, dst_idx, self._bases[src_aid],
                            self._words[src_aid], self._bases[dst_aid],
                            self._words[dst_aid], self.cfg.B,
                            self._node_of_block, self._node_block,
                            self._node_prev, self._node_next, self._state)
        if bad:
            raise UnregisteredArrayError("address out of range in move")

    def feed_rw(self, aid: int, idx: np.ndarray) -> None:
        self._flush_cx()
        bad = lru_feed_rw(idx, self._bases[aid], self._words[aid], self.cfg.B,
                          self._node_of_block, self._node_block,
                          self._node_prev, self._node_next, self._state)
        if bad:
            raise UnregisteredArrayError(f"address out of range in array {aid}")

    @property
    def misses(self) -> int:
        self._flush_cx()
        return int(self._state[0])


class Tracer:
    """Event sink; modes can be combined.

    digest  -- incremental SHA-256 over the packed canonical stream
    capture -- retain the full event array (tests, trace dumps)
    cache   -- feed Read/Write addresses through an LRU simulator
    """

    def __init__(self, *, digest: bool = True, capture: bool = False,
                 cache: Optional[CacheSim] = None):
        self._sha = hashlib.sha256() if digest else None
        self._capture: Optional[List[np.ndarray]] = [] if capture else None
        self._cache = cache
        self.arrays: List[Tuple[str, int, int]] = []
        self._lengths = np.zeros(0, dtype=np.int64)
        self.n_events = 0
        self._fork_row = self._one_row(FORK)
        self._join_row = self._one_row(JOIN)

    @staticmethod
    def _one_row(op: int) -> np.ndarray:
        row = np.zeros(1, dtype=EVENT_DTYPE)
        row["op"] = op
        return row

    def register(self, name: str, length: int, words: int = 4) -> int:
        aid = len(self.arrays)
        self.arrays.append((name, int(length), int(words)))
        self._lengths = np.array([a[1] for a in self.arrays], dtype=np.int64)
        if self._cache is not None:
            self._cache.add_array(length, words)
        return aid

    # -- internal sinks ------------------------------------------------------

    def _check(self, aid: int, idx: np.ndarray) -> None:
        if aid >= len(self.arrays):
            raise UnregisteredArrayError(f"array id {aid} not registered")
        if idx.shape[0] and int(idx.max()) >= self.arrays[aid][1]:
            raise UnregisteredArrayError(
                f"index {int(idx.max())} out of range for array "
                f"{self.arrays[aid]}")

    def _sink(self, ev: np.ndarray) -> None:
        self.n_events += ev.shape[0]
        if self._sha is not None:
            self._sha.update(ev.tobytes())
        if self._capture is not None:
            self._capture.append(ev)

    # -- emission API ----------------------------------------------------------

    @property
    def cache_only(self) -> bool:
        return (self._sha is None and self._capture is None
                and self._cache is not None)

    @property
    def counting_only(self) -> bool:
        return (self._sha is None and self._capture is None
                and self._cache is None)

    def emit_cx(self, aid: int, ia: np.ndarray, ib: np.ndarray,
                off: int = 0) -> None:
        """Per comparator: Read a, Read b, Compare, Write a, Write b.
        Index arrays are window-local when ``off`` is given."""
        k = ia.shape[0]
        if self._sha is not None or self._capture is not None:
            gia = ia + off
            gib = ib + off
            self._check(aid, gia)
            self._check(aid, gib)
            ev = np.empty(5 * k, dtype=EVENT_DTYPE)
            ev["op"].reshape(k, 5)[:] = _CX_OPS
            ev["aid"] = aid
            grid = ev["idx"].reshape(k, 5)
            grid[:, 0] = gia
            grid[:, 1] = gib
            grid[:, 2] = gia
            grid[:, 3] = gia
            grid[:, 4] = gib
            self._sink(ev)
        else:
            self.n_events += 5 * k
        if self._cache is not None:
            self._cache.feed_cx(aid, ia, ib, off=off)

    def emit_merge_net(self, aid: int, off: int, m: int) -> None:
        """Whole inline merge network in one shot (cache-only fast path)."""
        self.n_events += 5 * (m // 2) * (m.bit_length() - 1)
        if self._cache is not None:
            self._cache.feed_merge_net(aid, off, m)

    def emit_sort_net(self, aid: int, off: int, m: int) -> None:
        k = m.bit_length() - 1
        self.n_events += 5 * (m // 2) * (k * (k + 1) // 2)
        if self._cache is not None:
            self._cache.feed_sort_net(aid, off, m)

    def emit_move(self, dst_aid: int, dst_idx: np.ndarray,
                  src_aid: int, src_idx: np.ndarray) -> None:
        """Per element: Read src, Write dst."""
        k = src_idx.shape[0]
        if self._sha is not None or self._capture is not None:
            self._check(src_aid, src_idx)
            self._check(dst_aid, dst_idx)
            ev = np.empty(2 * k, dtype=EVENT_DTYPE)
            ev["op"].reshape(k, 2)[:] = _MOVE_OPS
            aid_grid = ev["aid"].reshape(k, 2)
            aid_grid[:, 0] = src_aid
            aid_grid[:, 1] = dst_aid
            grid = ev["idx"].reshape(k, 2)
            grid[:, 0] = src_idx
            grid[:, 1] = dst_idx
            self._sink(ev)
        else:
            self.n_events += 2 * k
        if self._cache is not None:
            self._cache.feed_move(dst_aid,
                                  np.ascontiguousarray(dst_idx, dtype=np.int64),
                                  src_aid,
                                  np.ascontiguousarray(src_idx, dtype=np.int64))

    def emit_rw(self, op: int, aid: int, idx: np.ndarray) -> None:
        k = idx.shape[0]
        if self._sha is not None or self._capture is not None:
            self._check(aid, idx)
            ev = np.empty(k, dtype=EVENT_DTYPE)
            ev["op"] = op
            ev["aid"] = aid
            ev["idx"] = idx
            self._sink(ev)
        else:
            self.n_events += k
        if self._cache is not None:
            self._cache.feed_rw(aid, np.ascontiguousarray(idx, dtype=np.int64))

    def emit_fork(self) -> None:
        self._sink(self._fork_row)

    def emit_join(self) -> None:
        self._sink(self._join_row)

    def finish(self) -> Trace:
        digest = self._sha.digest() if self._sha is not None else b""
        events = None
        if self._capture is not None:
            events = np.concatenate(self._capture) if self._capture else \
                np.empty(0, dtype=EVENT_DTYPE)
        return Trace(digest=digest, n_events=self.n_events,
                     arrays=list(self.arrays), events=events)

    @property
    def cache_misses(self) -> int:
        return self._cache.misses if self._cache is not None else 0


@dataclass
class RunRecord:
    result: object
    trace: Trace
    report: CostReport


def record_trace(run: Callable[[TaskContext], object], *, seed: int = 0,
                 capture: bool = True, digest: bool = True,
                 cache_cfg: Optional[CacheConfig] = None) -> RunRecord:
    """Execute ``run`` under the sequential backend with a fresh tracer."""
    cache = CacheSim(cache_cfg) if cache_cfg is not None else None
    tracer = Tracer(digest=digest, capture=capture, cache=cache)
    ctx = TaskContext(seed=seed, tracer=tracer, backend=SequentialBackend())
    result = run(ctx)
    trace = tracer.finish()
    report = CostReport.from_acc(ctx.acc, cache_misses=tracer.cache_misses)
    return RunRecord(result=result, trace=trace, report=report)


def run_counted(run: Callable[[TaskContext], object], *, seed: int = 0,
                backend=None) -> Tuple[object, CostReport]:
    """Execute without any tracing; counters only (fast path)."""
    ctx = TaskContext(seed=seed, tracer=None, backend=backend)
    t0 = time.perf_counter_ns()
    result = run(ctx)
    wall = time.perf_counter_ns() - t0
    if backend is not None:
        backend.shutdown()
    return result, CostReport.from_acc(ctx.acc, wall_nanos=wall)


def simulate_cache(trace: Trace, cfg: CacheConfig) -> int:
    """Replay a captured trace through a fully-associative LRU; returns the
    total miss count.  Compare/Fork/Join events cost no memory traffic."""
    if trace.events is None:
        raise ValueError("trace must be recorded with capture=True")
    if trace.n_events == 0:
        raise ValueError("empty trace")
    sim = CacheSim(cfg)
    for name, length, words in trace.arrays:
        sim.add_array(length, words)
    ev = trace.events
    mask = ev["op"] <= WRITE
    chunk = 1 << 20
    sel = np.flatnonzero(mask)
    for lo in range(0, sel.shape[0], chunk):
        part = sel[lo:lo + chunk]
        sim.feed(ev["aid"][part].astype(np.int64), ev["idx"][part])
    return sim.misses


@dataclass
class OblivSizeResult:
    n: int
    digests: List[str]
    inputs_tried: int

    @property
    def ok(self) -> bool:
        return len(set(self.digests)) == 1

    @property
    def distinct(self) -> int:
        return len(set(self.digests))


@dataclass
class OblivReport:
    op_name: str
    seed: int
    results: List[OblivSizeResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def __str__(self) -> str:
        lines = [f"oblivious-check op={self.op_name} seed={self.seed}"]
        for r in self.results:
            verdict = "OK" if r.ok else "MISMATCH"
            lines.append(f"  n={r.n}: {r.inputs_tried} inputs, "
                         f"{r.distinct} distinct digest(s) -> {verdict}")
        return "\n".join(lines)


def check_oblivious(op_name: str, sizes: Sequence[int], inputs_per_size: int,
                    seed: int = 0) -> OblivReport:
    """Run a registered operation on several distinct random inputs at a
    fixed (n, seed) and compare the resulting trace digests."""
    if inputs_per_size < 2:
        raise ValueError("need at least 2 inputs per size")
    from .registry import get_op
    op = get_op(op_name)
    report = OblivReport(op_name=op_name, seed=seed)
    input_rng = np.random.default_rng(np.random.SeedSequence([0xB10B, seed]))
    for n in sizes:
        digests = []
        for _ in range(inputs_per_size):
            inp = op.generate(input_rng, n)
            rec = record_trace(lambda ctx: op.run(ctx, inp), seed=seed,
                               capture=False)
            digests.append(rec.trace.hex)
        report.results.append(OblivSizeResult(n=n, digests=digests,
                                              inputs_tried=inputs_per_size))
    return report
