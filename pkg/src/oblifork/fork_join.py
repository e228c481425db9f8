"""Binary fork-join execution substrate.

Tasks form a binary tree; every task is identified by its path from the
root (left = 0, right = 1).  A task's random stream is a pure function of
(global seed, path), so results never depend on scheduling order, and the
reference sequential backend (depth-first, left before right) defines the
canonical serialization that tracing and cache simulation consume.

Unit-cost model (used by every counter in the library):

* one Read / Write / Compare event          -> work 1
* a comparator (read a, read b, compare,
  write a, write b)                         -> work 5, span 1
* an element move (read src, write dst)     -> work 2, span 1
* ``parallel_for`` over k bodies            -> span ceil(log2 k) + max body
* ``fork_join``                             -> span 1 + max(children)

Scan-shaped primitives account their span explicitly (see primitives.py).
"""

from __future__ import annotations

import hashlib
import os
from typing import Callable, Optional

import numpy as np

DEFAULT_THREAD_ENV = "OBLIFORK_THREADS"


def default_thread_count() -> int:
    env = os.environ.get(DEFAULT_THREAD_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


class CostAcc:
    """Per-task work/span/comparison counters, merged at joins."""

    __slots__ = ("work", "span", "comparisons", "retries")

    def __init__(self):
        self.work = 0
        self.span = 0
        self.comparisons = 0
        self.retries = 0

    def absorb_children(self, left: "CostAcc", right: "CostAcc") -> None:
        self.work += left.work + right.work
        self.span += 1 + max(left.span, right.span)
        self.comparisons += left.comparisons + right.comparisons
        self.retries += left.retries + right.retries


class SequentialBackend:
    """Depth-first, left before right; the canonical serialization."""

    parallel = False

    def run_pair(self, left: Callable, right: Callable):
        return left(), right()

    def shutdown(self):
        pass


class ThreadBackend:
    """Work-sharing backend for wall-clock runs.

    A fork offers its left task to a fresh helper thread while the right
    runs inline; a semaphore caps the helpers at threads - 1 and saturated
    forks run both sides inline, so nested forks can never starve.  Outputs
    are identical to the sequential backend because tasks communicate only
    through arguments and join results.
    """

    parallel = True

    def __init__(self, threads: Optional[int] = None):
        import threading
        self.threads = threads or default_thread_count()
        self._slots = threading.BoundedSemaphore(max(1, self.threads - 1)) \
            if self.threads > 1 else None

    def run_pair(self, left: Callable, right: Callable):
        if self._slots is not None and self._slots.acquire(blocking=False):
            import threading
            box = {}

            def runner():
                try:
                    box["value"] = left()
                except BaseException as exc:  # re-raised at the join
                    box["error"] = exc
                finally:
                    self._slots.release()

            t = threading.Thread(target=runner)
            t.start()
            rr = right()
            t.join()
            if "error" in box:
                raise box["error"]
            return box["value"], rr
        return left(), right()

    def shutdown(self):
        pass


def _ceil_log2(k: int) -> int:
    return (int(k) - 1).bit_length() if k > 1 else 0


class TaskContext:
    """Execution handle carried through every operation.

    Bundles the task path, the derived random stream, the instrumentation
    sink (None for plain counting runs) and this task's cost accumulator.
    """

    __slots__ = ("seed", "path_bits", "path_len", "tracer", "acc", "backend",
                 "_rng")

    def __init__(self, seed: int = 0, tracer=None, backend=None,
                 path_bits: int = 0, path_len: int = 0, acc: Optional[CostAcc] = None):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path_bits = path_bits
        self.path_len = path_len
        self.tracer = tracer
        self.acc = acc if acc is not None else CostAcc()
        self.backend = backend if backend is not None else SequentialBackend()
        self._rng = None

    # -- randomness --------------------------------------------------------

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            h = hashlib.blake2b(digest_size=16)
            h.update(self.seed.to_bytes(8, "little"))
            h.update(self.path_len.to_bytes(8, "little"))
            nbytes = (self.path_len + 7) // 8
            h.update(self.path_bits.to_bytes(nbytes, "little") if nbytes else b"")
            key = int.from_bytes(h.digest(), "little")
            self._rng = np.random.Generator(np.random.Philox(key=key))
        return self._rng

    def child(self, bit: int) -> "TaskContext":
        return TaskContext(seed=self.seed, tracer=self.tracer, backend=self.backend,
                           path_bits=(self.path_bits << 1) | bit,
                           path_len=self.path_len + 1, acc=CostAcc())

    def with_seed(self, seed: int) -> "TaskContext":
        """Fresh random universe (retries); costs keep accumulating here."""
        return TaskContext(seed=seed, tracer=self.tracer, backend=self.backend,
                           path_bits=0, path_len=0, acc=self.acc)

    @property
    def path(self) -> str:
        if self.path_len == 0:
            return ""
        return format(self.path_bits, f"0{self.path_len}b")

    # -- bulk cost / event hooks --------------------------------------------

    def cx_block(self, aid: int, ia: np.ndarray, ib: np.ndarray,
                 off: int = 0) -> None:
        """Account and trace k comparators executed as one parallel step."""
        k = int(ia.shape[0])
        if k == 0:
            return
        self.acc.work += 5 * k
        self.acc.comparisons += k
        self.acc.span += _ceil_log2(k) + 1
        if self.tracer is not None:
            self.tracer.emit_cx(aid, ia, ib, off=off)

    def move_block(self, dst_aid: int, dst_idx: np.ndarray,
                   src_aid: int, src_idx: np.ndarray) -> None:
        k = int(src_idx.shape[0])
        if k == 0:
            return
        self.acc.work += 2 * k
        self.acc.span += _ceil_log2(k) + 1
        if self.tracer is not None:
            self.tracer.emit_move(dst_aid, dst_idx, src_aid, src_idx)

    def read_block(self, aid: int, idx: np.ndarray) -> None:
        """Reads without their own span (part of an enclosing structure)."""
        k = int(idx.shape[0])
        if k == 0:
            return
        self.acc.work += k
        if self.tracer is not None:
            self.tracer.emit_rw(0, aid, idx)

    def write_block(self, aid: int, idx: np.ndarray) -> None:
        k = int(idx.shape[0])
        if k == 0:
            return
        self.acc.work += k
        if self.tracer is not None:
            self.tracer.emit_rw(1, aid, idx)

    def add_span(self, s: int) -> None:
        self.acc.span += int(s)

    def add_work(self, w: int) -> None:
        self.acc.work += int(w)

    def add_comparisons(self, c: int, charge_work: bool = True) -> None:
        self.acc.comparisons += int(c)
        if charge_work:
            self.acc.work += int(c)

    def add_retry(self) -> None:
        self.acc.retries += 1


def _settled(fn: Callable):
    def run():
        try:
            return fn(), None
        except BaseException as exc:  # re-raised at the join
            return None, exc
    return run


def fork_join(ctx: TaskContext, left: Callable[[TaskContext], object],
              right: Callable[[TaskContext], object]):
    """Run two tasks that may execute in parallel; both settle before the
    join returns, and the first (left) failure wins.  Child contexts extend
    the path with 0 (left) and 1 (right)."""
    lctx = ctx.child(0)
    rctx = ctx.child(1)
    gl = _settled(lambda: left(lctx))
    gr = _settled(lambda: right(rctx))
    if ctx.tracer is not None:
        ctx.tracer.emit_fork()
        # tracing is pinned to the canonical sequential serialization
        (rl, el), (rr, er) = gl(), gr()
        ctx.tracer.emit_join()
    else:
        (rl, el), (rr, er) = ctx.backend.run_pair(gl, gr)
    ctx.acc.absorb_children(lctx.acc, rctx.acc)
    if el is not None:
        raise el
    if er is not None:
        raise er
    return rl, rr


def parallel_for(ctx: TaskContext, count: int,
                 body: Callable[[TaskContext, int], object]) -> list:
    """k bodies forked as a balanced binary tree of depth ceil(log2 k)."""
    if count < 1:
        raise ValueError("parallel_for needs count >= 1")
    if count == 1:
        return [body(ctx, 0)]

    def run(c: TaskContext, lo: int, hi: int):
        if hi - lo == 1:
            return [body(c, lo)]
        mid = (lo + hi + 1) // 2
        l, r = fork_join(c, lambda cc: run(cc, lo, mid), lambda cc: run(cc, mid, hi))
        return l + r

    return run(ctx, 0, count)
