"""Command-line harness: sorting, benchmark sweeps, obliviousness checks
and the tree/list applications.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 retry
budget exhausted.  Every run with fixed flags and seed is byte-reproducible
except for the wall-clock column.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from .apps import SuccessorArray, euler_tour, list_rank
from .bitonic import bitonic_sort, sort_padded
from .core import ElementArray, default_params
from .dataio import read_edges_text, read_elements, write_elements
from .fork_join import TaskContext, ThreadBackend, default_thread_count
from .instrument import (CacheConfig, CacheSim, CostReport, Tracer,
                         check_oblivious, record_trace, run_counted)
from .orba import RetryBudgetExceeded
from .registry import get_op
from .rsort import bb_sort, butterfly_sort

CSV_HEADER = "algo,n,seed,work,span,comparisons,cache_misses,M,B,retries,wall_ns"

ALGOS = {
    "bitonic": lambda ctx, arr, seed: sort_padded(ctx, arr, "cli_sort"),
    "bb": lambda ctx, arr, seed: bb_sort(arr, seed=seed, ctx=ctx),
    "butterfly": lambda ctx, arr, seed: butterfly_sort(arr, seed=seed, ctx=ctx),
}


def _parse_size(token: str) -> int:
    token = token.strip()
    if "^" in token:
        base, exp = token.split("^", 1)
        return int(base) ** int(exp)
    return int(token)


def _parse_sizes(text: str) -> List[int]:
    sizes = [_parse_size(t) for t in text.split(",") if t.strip()]
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError(f"bad size list {text!r}")
    return sizes


def _gen_input(n: int, seed: int) -> ElementArray:
    rng = np.random.Generator(np.random.Philox(key=(seed ^ 0x9E3779B97F4A7C15)))
    return ElementArray.from_keys(rng.integers(0, 1 << 62, n, dtype=np.uint64))


def _set_threads(threads: int) -> None:
    try:
        import numba
        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    except Exception:
        pass


def cmd_sort(args) -> int:
    if (args.infile is None) == (args.n is None):
        print("sort: give exactly one of --in or --n", file=sys.stderr)
        return 2
    if args.infile is not None:
        try:
            arr = read_elements(args.infile, args.format)
        except (OSError, ValueError) as exc:
            print(f"sort: cannot read input: {exc}", file=sys.stderr)
            return 2
        if len(arr) == 0:
            print("sort: empty input", file=sys.stderr)
            return 2
    else:
        arr = _gen_input(args.n, args.seed)

    _set_threads(args.threads)
    backend = ThreadBackend(args.threads) if args.threads > 1 else None
    algo = ALGOS[args.algo]
    try:
        out, report = run_counted(lambda ctx: algo(ctx, arr, args.seed),
                                  seed=args.seed, backend=backend)
    except RetryBudgetExceeded as exc:
        print(f"sort: {exc}", file=sys.stderr)
        return 3
    write_elements(args.out, out, args.format)
    if args.report == "json":
        print(json.dumps(report.as_json_dict(), sort_keys=True))
    return 0


def _bench_row(algo_name: str, n: int, seed: int, threads: int,
               cache_cfg: Optional[CacheConfig]) -> str:
    arr = _gen_input(n, seed)
    algo = ALGOS[algo_name]
    backend = ThreadBackend(threads) if threads > 1 else None
    _, report = run_counted(lambda ctx: algo(ctx, arr, seed), seed=seed,
                            backend=backend)
    misses = 0
    m_words = b_words = 0
    if cache_cfg is not None:
        m_words, b_words = cache_cfg.M, cache_cfg.B
        sim = CacheSim(cache_cfg)
        tracer = Tracer(digest=False, capture=False, cache=sim)
        ctx = TaskContext(seed=seed, tracer=tracer)
        algo(ctx, arr, seed)
        misses = sim.misses
    return ",".join(str(x) for x in (
        algo_name, n, seed, report.work, report.span, report.comparisons,
        misses, m_words, b_words, report.retries, report.wall_nanos))


def cmd_bench(args) -> int:
    try:
        sizes = _parse_sizes(args.sizes)
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return 2
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ALGOS:
            print(f"bench: unknown algo {a!r}", file=sys.stderr)
            return 2
    cache_cfg = None
    if (args.cache_m is None) != (args.cache_b is None):
        print("bench: --cache-m and --cache-b go together", file=sys.stderr)
        return 2
    if args.cache_m is not None:
        try:
            cache_cfg = CacheConfig(M=args.cache_m, B=args.cache_b)
        except ValueError as exc:
            print(f"bench: {exc}", file=sys.stderr)
            return 2
    _set_threads(args.threads)
    for a in algos:  # warm the kernels so wall_ns measures steady state
        run_counted(lambda ctx, a=a: ALGOS[a](ctx, _gen_input(64, 0), 0))
    print(CSV_HEADER)
    for a in algos:
        for n in sizes:
            for seed in seeds:
                print(_bench_row(a, n, seed, args.threads, cache_cfg))
    return 0


def cmd_trace_check(args) -> int:
    try:
        op = get_op(args.op)
    except KeyError as exc:
        print(f"trace-check: {exc}", file=sys.stderr)
        return 2
    if args.inputs < 2:
        print("trace-check: need --inputs >= 2", file=sys.stderr)
        return 2
    try:
        sizes = _parse_sizes(args.n)
    except ValueError as exc:
        print(f"trace-check: {exc}", file=sys.stderr)
        return 2

    if args.dump:
        rng = np.random.default_rng(np.random.SeedSequence([0xB10B, args.seed]))
        inp = op.generate(rng, sizes[0])
        rec = record_trace(lambda ctx: op.run(ctx, inp), seed=args.seed,
                           capture=True)
        with open(args.dump, "w", encoding="ascii") as fh:
            for line in rec.trace.dump_lines():
                fh.write(line + "\n")
        print(f"digest {rec.trace.hex}")

    report = check_oblivious(args.op, sizes, args.inputs, seed=args.seed)
    print(report)
    return 0 if report.ok else 1


def cmd_listrank(args) -> int:
    try:
        with open(args.infile, "r", encoding="ascii") as fh:
            succ = np.array([int(x) for x in fh.read().split()],
                            dtype=np.uint64)
    except (OSError, ValueError) as exc:
        print(f"listrank: cannot read input: {exc}", file=sys.stderr)
        return 2
    try:
        ranks = list_rank(SuccessorArray(succ), seed=args.seed)
    except RetryBudgetExceeded as exc:
        print(f"listrank: {exc}", file=sys.stderr)
        return 3
    out = sys.stdout if args.out is None else open(args.out, "w")
    try:
        for r in ranks:
            out.write(f"{int(r)}\n")
    finally:
        if args.out is not None:
            out.close()
    return 0


def cmd_euler(args) -> int:
    try:
        und = read_edges_text(args.infile)
    except (OSError, ValueError) as exc:
        print(f"euler: cannot read input: {exc}", file=sys.stderr)
        return 2
    from .apps import undirected_to_edgelist
    edges = undirected_to_edgelist(und)
    try:
        tau = euler_tour(edges)
    except (ValueError, RetryBudgetExceeded) as exc:
        print(f"euler: {exc}", file=sys.stderr)
        return 1
    out = sys.stdout if args.out is None else open(args.out, "w")
    try:
        for e in range(edges.shape[0]):
            u, v = int(edges[e, 0]), int(edges[e, 1])
            t = int(tau[e])
            out.write(f"{u} {v} -> {int(edges[t, 0])} {int(edges[t, 1])}\n")
    finally:
        if args.out is not None:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oblifork",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sort", help="sort a file or generated input")
    sp.add_argument("--algo", choices=sorted(ALGOS), default="bb")
    sp.add_argument("--in", dest="infile")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("bin", "text"), default="text")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=default_thread_count())
    sp.add_argument("--report", choices=("json",))
    sp.set_defaults(func=cmd_sort)

    bp = sub.add_parser("bench", help="benchmark sweep, CSV on stdout")
    bp.add_argument("--algos", default="bitonic,bb,butterfly")
    bp.add_argument("--sizes", required=True, help="e.g. 2^12,2^14,16384")
    bp.add_argument("--seeds", default="0")
    bp.add_argument("--cache-m", type=int, dest="cache_m")
    bp.add_argument("--cache-b", type=int, dest="cache_b")
    bp.add_argument("--threads", type=int, default=default_thread_count())
    bp.set_defaults(func=cmd_bench)

    tp = sub.add_parser("trace-check", help="compare trace digests across "
                                            "random inputs")
    tp.add_argument("--op", required=True)
    tp.add_argument("--n", required=True, help="size list, e.g. 2^8,2^10")
    tp.add_argument("--inputs", type=int, default=20)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--dump", help="write the event log of one run")
    tp.set_defaults(func=cmd_trace_check)

    lp = sub.add_parser("listrank", help="oblivious list ranking")
    lp.add_argument("--in", dest="infile", required=True)
    lp.add_argument("--out")
    lp.add_argument("--seed", type=int, default=0)
    lp.set_defaults(func=cmd_listrank)

    ep = sub.add_parser("euler", help="Euler tour successor map of a tree")
    ep.add_argument("--in", dest="infile", required=True)
    ep.add_argument("--out")
    ep.set_defaults(func=cmd_euler)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
