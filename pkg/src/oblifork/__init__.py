"""Data-oblivious parallel algorithms in the binary fork-join model.

The library routes fixed-capacity bins of tagged slots through butterfly
networks built from comparison networks, yielding an oblivious random
permutation and oblivious sorts whose memory traces depend only on the
input length and the seed.  Instrumentation records canonical access
traces, simulates an ideal LRU cache over them, and accounts work and span
under a unit-cost fork-join model.
"""

from .core import (BOTTOM, Bin, BinMatrix, Element, ElementArray, Kind,
                   PipelineParams, Region, compare_exchange, default_params,
                   pad_to_shape, strip_fillers)
from .fork_join import (SequentialBackend, TaskContext, ThreadBackend,
                        fork_join, parallel_for)
from .instrument import (CacheConfig, CostReport, Trace, TraceEvent, Tracer,
                         check_oblivious, record_trace, run_counted,
                         simulate_cache)
from .primitives import prefix_sum, propagate, segmented_suffix, transpose_bins
from .bitonic import (bitonic_merge, bitonic_sort, merge_comparators,
                      sort_comparators, sort_padded)
from .blocks import (DuplicateSourceKeys, GroupOverflow, bin_place,
                     compact_reveal, send_receive)
from .orba import (Overflow, OrbaRun, RetryBudgetExceeded, assign_labels,
                   meta_orba, orba_assign, rec_orba)
from .permute import b_rpermute, permute_keys
from .rsort import (PivotSet, RaggedBins, SbaOverflow, bb_sort,
                    butterfly_sort, pick_pivots, rec_sba)
from .apps import (CrcwOp, CrcwRequest, SuccessorArray, emulate_crcw_step,
                   emulate_requests, euler_tour, list_rank,
                   undirected_to_edgelist)

__version__ = "0.1.0"

__all__ = [
    "BOTTOM", "Bin", "BinMatrix", "CacheConfig", "CostReport", "CrcwOp",
    "CrcwRequest", "DuplicateSourceKeys", "Element", "ElementArray",
    "GroupOverflow", "Kind", "Overflow", "OrbaRun", "PipelineParams",
    "PivotSet", "RaggedBins", "Region", "RetryBudgetExceeded",
    "SbaOverflow", "SequentialBackend", "SuccessorArray", "TaskContext",
    "ThreadBackend", "Trace", "TraceEvent", "Tracer", "assign_labels",
    "b_rpermute", "bb_sort", "bin_place", "bitonic_merge", "bitonic_sort",
    "butterfly_sort", "check_oblivious", "compact_reveal", "compare_exchange",
    "default_params", "emulate_crcw_step", "emulate_requests", "euler_tour",
    "fork_join", "list_rank", "merge_comparators", "meta_orba", "orba_assign",
    "pad_to_shape", "parallel_for", "permute_keys", "pick_pivots",
    "prefix_sum", "propagate", "rec_orba", "rec_sba", "record_trace",
    "run_counted", "segmented_suffix", "send_receive", "simulate_cache",
    "sort_comparators", "sort_padded", "strip_fillers", "transpose_bins",
    "undirected_to_edgelist",
]
