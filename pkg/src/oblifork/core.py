"""Shared domain types and the element-level branchless operations.

Every routine in this library moves the same payload: a tagged slot holding
a sort key, a value, a random routing/permutation label, a destination group
id and a stable origin index.  Slots come in three kinds:

* ``REAL``    -- an actual element of the caller's input,
* ``FILLER``  -- padding that hides bin loads; compares greater than every
  real element under any order used in the pipeline,
* ``TEMP``    -- internal placeholders that exist only inside bin placement.

Arrays of slots are stored struct-of-arrays (:class:`ElementArray`) so the
hot kernels can run on plain contiguous uint64 vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Optional, Tuple

import numpy as np

U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)
#: value word used for "no result" / bottom in routing and aggregation
BOTTOM = int(U64_MAX)

#: hard cap on the padded working size accepted by :func:`pad_to_shape`
MAX_PADDED = 1 << 26


class Kind(IntEnum):
    REAL = 0
    TEMP = 1
    FILLER = 2


REAL = np.uint8(Kind.REAL)
TEMP = np.uint8(Kind.TEMP)
FILLER = np.uint8(Kind.FILLER)


def next_pow2(x: int) -> int:
    """Smallest power of two >= max(x, 1)."""
    x = max(int(x), 1)
    return 1 << (x - 1).bit_length()


def ilog2(x: int) -> int:
    """Exact log2 of a power of two."""
    if x <= 0 or x & (x - 1):
        raise ValueError(f"{x} is not a positive power of 2")
    return x.bit_length() - 1


@dataclass(frozen=True)
class Element:
    """A single slot; scalar twin of one row of an :class:`ElementArray`."""

    kind: Kind = Kind.REAL
    key: int = 0
    value: int = 0
    label: int = 0
    group: int = 0
    origin: int = 0

    def sort_rank(self) -> Tuple[int, int]:
        """(key, origin) pair that defines the library-wide total order."""
        return (self.key, self.origin)


def make_filler(origin: int) -> Element:
    """Filler slot: saturated key so it orders after every real element."""
    return Element(kind=Kind.FILLER, key=BOTTOM, value=BOTTOM, origin=origin)


def compare_exchange(a: Element, b: Element, ascending: bool = True,
                     ctx=None, array_id: int = 0,
                     index_a: int = 0, index_b: int = 0) -> Tuple[Element, Element]:
    """Two-element comparator under the (key, origin) order.

    Returns (min, max) when ascending, (max, min) otherwise.  When a task
    context is supplied the canonical event pattern is recorded: read a,
    read b, one comparison, write a, write b -- the same five events occur
    whichever order results.
    """
    if ctx is not None:
        ctx.cx_block(array_id,
                     np.array([index_a], dtype=np.int64),
                     np.array([index_b], dtype=np.int64))
    swap = a.sort_rank() > b.sort_rank()
    lo, hi = (b, a) if swap else (a, b)
    return (lo, hi) if ascending else (hi, lo)


_FIELDS = ("kind", "key", "value", "label", "group", "origin")
_DTYPES = {
    "kind": np.uint8,
    "key": np.uint64,
    "value": np.uint64,
    "label": np.uint64,
    "group": np.uint32,
    "origin": np.uint64,
}


class ElementArray:
    """Struct-of-arrays slot storage.

    Slicing returns views; :meth:`take` gathers a permutation into a fresh
    array.  All mutating helpers are in-place on the underlying buffers.
    """

    __slots__ = _FIELDS

    def __init__(self, kind, key, value, label, group, origin):
        self.kind = kind
        self.key = key
        self.value = value
        self.label = label
        self.group = group
        self.origin = origin

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls, n: int) -> "ElementArray":
        return cls(*(np.zeros(n, dtype=_DTYPES[f]) for f in _FIELDS))

    @classmethod
    def from_keys(cls, keys, values=None, origin_base: int = 0) -> "ElementArray":
        """Real elements with the given keys; origins follow input order."""
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        n = keys.shape[0]
        out = cls.empty(n)
        out.key[:] = keys
        out.value[:] = keys if values is None else np.asarray(values, dtype=np.uint64)
        out.origin[:] = np.arange(origin_base, origin_base + n, dtype=np.uint64)
        return out

    @classmethod
    def fillers(cls, n: int, origin_base: int) -> "ElementArray":
        out = cls.empty(n)
        out.kind[:] = FILLER
        out.key[:] = U64_MAX
        out.value[:] = U64_MAX
        out.origin[:] = np.arange(origin_base, origin_base + n, dtype=np.uint64)
        return out

    @classmethod
    def from_elements(cls, elems: Iterable[Element]) -> "ElementArray":
        elems = list(elems)
        out = cls.empty(len(elems))
        for i, e in enumerate(elems):
            out.kind[i] = np.uint8(e.kind)
            out.key[i] = e.key
            out.value[i] = e.value
            out.label[i] = e.label
            out.group[i] = e.group
            out.origin[i] = e.origin
        return out

    # -- basic protocol ----------------------------------------------------

    def __len__(self) -> int:
        return self.kind.shape[0]

    def __getitem__(self, sl) -> "ElementArray":
        return ElementArray(*(getattr(self, f)[sl] for f in _FIELDS))

    def element(self, i: int) -> Element:
        return Element(kind=Kind(int(self.kind[i])), key=int(self.key[i]),
                       value=int(self.value[i]), label=int(self.label[i]),
                       group=int(self.group[i]), origin=int(self.origin[i]))

    def copy(self) -> "ElementArray":
        return ElementArray(*(getattr(self, f).copy() for f in _FIELDS))

    def take(self, perm) -> "ElementArray":
        return ElementArray(*(getattr(self, f)[perm] for f in _FIELDS))

    def set_from(self, other: "ElementArray") -> None:
        for f in _FIELDS:
            getattr(self, f)[:] = getattr(other, f)

    def scatter_from(self, dst_idx, other: "ElementArray", src_idx) -> None:
        for f in _FIELDS:
            getattr(self, f)[dst_idx] = getattr(other, f)[src_idx]

    @classmethod
    def concat(cls, parts: Iterable["ElementArray"]) -> "ElementArray":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in _FIELDS))

    # -- kind helpers -------------------------------------------------------

    def is_real(self) -> np.ndarray:
        return self.kind == REAL

    def real_count(self) -> int:
        return int(np.count_nonzero(self.kind == REAL))

    def reals(self) -> "ElementArray":
        return self[self.kind == REAL]

    def sorted_copy(self) -> "ElementArray":
        """Reference (non-oblivious) sort by (key, origin); test oracle."""
        order = np.lexsort((self.origin, self.key))
        return self.take(order)


def strip_fillers(arr: ElementArray) -> ElementArray:
    """Drop every non-real slot, keeping real elements in order."""
    return arr.reals()


class Region:
    """A window of a registered flat slot array.

    Pairs an :class:`ElementArray` view with the tracer array id and the
    window's global offset, so bulk operations can report true addresses.
    """

    __slots__ = ("elems", "aid", "off")

    def __init__(self, elems: ElementArray, aid: int = 0, off: int = 0):
        self.elems = elems
        self.aid = aid
        self.off = off

    def __len__(self) -> int:
        return len(self.elems)

    def sub(self, lo: int, hi: int) -> "Region":
        return Region(self.elems[lo:hi], self.aid, self.off + lo)

    def gidx(self, local_idx: np.ndarray) -> np.ndarray:
        return np.asarray(local_idx, dtype=np.int64) + self.off

    def assign_from(self, dst_idx, src: "Region", src_idx) -> None:
        self.elems.scatter_from(dst_idx, src.elems, src_idx)


@dataclass(frozen=True)
class Bin:
    """A view of exactly ``capacity`` consecutive slots of a flat array."""

    capacity: int
    slots: ElementArray

    def __post_init__(self):
        if len(self.slots) != self.capacity:
            raise ValueError("bin view must hold exactly its capacity")

    @property
    def real_count(self) -> int:
        return self.slots.real_count()


class BinMatrix:
    """``rows x cols`` bins of one shared capacity over a flat slot array.

    Bin (i, j) occupies slots [(i*cols + j)*Z, (i*cols + j + 1)*Z).
    """

    __slots__ = ("rows", "cols", "Z", "elems")

    def __init__(self, rows: int, cols: int, Z: int, elems: ElementArray):
        if len(elems) != rows * cols * Z:
            raise ValueError("flat array length must equal rows*cols*Z")
        self.rows = rows
        self.cols = cols
        self.Z = Z
        self.elems = elems

    def bin(self, i: int, j: int) -> Bin:
        off = (i * self.cols + j) * self.Z
        return Bin(self.Z, self.elems[off:off + self.Z])

    def bin_flat(self, b: int) -> Bin:
        off = b * self.Z
        return Bin(self.Z, self.elems[off:off + self.Z])

    @property
    def n_bins(self) -> int:
        return self.rows * self.cols

    def copy(self) -> "BinMatrix":
        return BinMatrix(self.rows, self.cols, self.Z, self.elems.copy())


@dataclass(frozen=True)
class PipelineParams:
    """Sizing knobs for the butterfly pipeline.

    For n >= 2**10 the defaults follow Z ~ log2(n)**2 and gamma ~ log2(n),
    both rounded up to powers of two; below that the asymptotic constants
    are meaningless, so Z is floored at 64 and gamma at 8 (clamped to beta,
    which stays >= 2).
    """

    n: int
    Z: int
    gamma: int
    beta: int
    sba_bin_size: int
    sba_cap_factor: int = 4
    max_retries: int = 8
    max_padded: int = MAX_PADDED

    def __post_init__(self):
        for name in ("Z", "gamma", "beta"):
            ilog2(getattr(self, name))  # raises unless power of 2
        if self.gamma > self.beta:
            raise ValueError("gamma must not exceed beta")

    @property
    def padded_n(self) -> int:
        return self.beta * self.Z // 2


def default_params(n: int, *, max_retries: int = 8) -> PipelineParams:
    if n < 1:
        raise ValueError("need at least one element")
    lg = max(np.log2(max(n, 2)), 1.0)
    if n >= 1 << 10:
        Z = next_pow2(int(np.ceil(lg * lg)))
        gamma = next_pow2(int(np.ceil(lg)))
    else:
        Z = 64
        gamma = 8
    beta = max(2, next_pow2(int(np.ceil(2 * n / Z))))
    gamma = min(gamma, beta)
    sba_bin = max(64, next_pow2(int(np.ceil(lg ** 3))))
    return PipelineParams(n=n, Z=Z, gamma=gamma, beta=beta,
                          sba_bin_size=sba_bin, max_retries=max_retries)


def pad_to_shape(arr: ElementArray, params: PipelineParams) -> ElementArray:
    """Append fillers so the result holds beta*Z/2 slots.

    The filler count is the length difference; real elements are untouched,
    so stripping fillers afterwards recovers the input exactly.
    """
    n = len(arr)
    if n < 1:
        raise ValueError("need at least one element")
    target = params.padded_n
    if target > params.max_padded:
        raise ValueError(f"padded size {target} exceeds limit {params.max_padded}")
    if n > target:
        raise ValueError(f"input of {n} does not fit shape {target}")
    if n == target:
        return arr
    pad = ElementArray.fillers(target - n, origin_base=n)
    return ElementArray.concat([arr, pad])
