"""File encodings for element data.

Binary: little-endian 64-bit unsigned key followed by the 64-bit value,
one pair per element.  Text: one decimal key per line (the value mirrors
the key; labels and groups are unset).
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .core import ElementArray

PathLike = Union[str, Path]


def read_text(path: PathLike) -> ElementArray:
    keys = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                keys.append(int(line))
    return ElementArray.from_keys(np.array(keys, dtype=np.uint64))


def write_text(path: PathLike, arr: ElementArray) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for k in arr.key:
            fh.write(f"{int(k)}\n")


def read_binary(path: PathLike) -> ElementArray:
    raw = np.fromfile(path, dtype="<u8")
    if raw.shape[0] % 2:
        raise ValueError("binary element file must hold (key, value) pairs")
    pairs = raw.reshape(-1, 2)
    return ElementArray.from_keys(pairs[:, 0], pairs[:, 1])


def write_binary(path: PathLike, arr: ElementArray) -> None:
    pairs = np.empty((len(arr), 2), dtype="<u8")
    pairs[:, 0] = arr.key
    pairs[:, 1] = arr.value
    pairs.tofile(path)


def read_elements(path: PathLike, fmt: str) -> ElementArray:
    if fmt == "text":
        return read_text(path)
    if fmt == "bin":
        return read_binary(path)
    raise ValueError(f"unknown format {fmt!r}")


def write_elements(path: PathLike, arr: ElementArray, fmt: str) -> None:
    if fmt == "text":
        write_text(path, arr)
    elif fmt == "bin":
        write_binary(path, arr)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_edges_text(path: PathLike) -> np.ndarray:
    """Undirected edge list, one `u v` pair per line."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                rows.append((int(parts[0]), int(parts[1])))
    return np.array(rows, dtype=np.uint64).reshape(-1, 2)
