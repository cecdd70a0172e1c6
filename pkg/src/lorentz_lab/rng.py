"""Reproducible, splittable random streams.

A stream is keyed by ``(master_seed, stream_id)`` and is counter based
(Philox-4x64): work is cut into fixed row blocks, and block ``b`` draws
from the counter window starting at ``b * 2**128``. The variates of a
block therefore depend only on the key and the block index, never on the
order in which blocks are evaluated or on the number of worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1
WORKERS_ENV = "LORENTZ_LAB_WORKERS"

# doubles per row block; block boundaries are part of the stream layout
BLOCK_ELEMENTS = 1 << 18

T = TypeVar("T")


@dataclass(frozen=True)
class RngStreamSpec:
    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")
            object.__setattr__(self, name, int(v))

    def generator(self, block: int = 0) -> np.random.Generator:
        """Generator for row block ``block`` of this stream."""
        if block < 0:
            raise ValueError("block index must be non-negative")
        key = self.master_seed | (self.stream_id << 64)
        counter = [0, 0, block & MASK64, block >> 64]
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def substream(self, offset: int) -> "RngStreamSpec":
        """A stream with a different id, for independent sub-experiments."""
        return RngStreamSpec(self.master_seed, (self.stream_id + offset) & MASK64)

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "stream_id": self.stream_id}


def rows_per_block(width: int) -> int:
    return max(1, BLOCK_ELEMENTS // max(1, width))


def block_layout(count: int, width: int) -> list[tuple[int, int, int]]:
    """``(block_index, first_row, n_rows)`` covering ``count`` rows."""
    per = rows_per_block(width)
    return [(b, start, min(per, count - start)) for b, start in enumerate(range(0, count, per))]


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ordered_map(fn: Callable[..., T], items: Iterable, workers: int | None = None) -> Iterator[T]:
    """``map`` preserving order, on a thread pool when ``workers > 1``.

    numpy releases the GIL in the heavy kernels, so threads help for the
    large-n blocks; results come back in submission order either way.
    """
    workers = default_workers() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, items)


def exponentials(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard exponentials by inversion, E = -log(1 - U)."""
    return -np.log1p(-rng.random(shape))
