"""LRU stack-distance (reuse-distance) histograms.

The histogram is the capacity-independent summary of a trace: an access hits
a fully-associative LRU cache of capacity c iff its distance (distinct sectors
touched since the previous access to the same sector) is below c. That makes
this module the independent oracle for the cache simulator, and the lens for
why alternating scan directions beat cyclic rescans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from ._kernels import stack_distance_pass
from .tracegen import AccessTrace, TraceDump


@dataclass
class DistanceHistogram:
    """Occurrence counts per exact distance, plus first-touch and overflow buckets."""

    counts: np.ndarray  # occurrences of finite distances 0..len(counts)-1
    infinite: int  # first touches (one per distinct sector)
    overflow: int = 0  # distances >= cap when the histogram was capped
    cap: int | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.infinite + self.overflow

    @property
    def distinct_sectors(self) -> int:
        return self.infinite

    def misses_at(self, capacity_sectors: int) -> int:
        return misses_at_capacity(self, capacity_sectors)

    def to_csv(self, path: str | Path) -> None:
        lines = ["distance,count"]
        lines += [f"{d},{int(c)}" for d, c in enumerate(self.counts) if c]
        if self.overflow:
            lines.append(f">={self.cap},{self.overflow}")
        lines.append(f"inf,{self.infinite}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_dict(self) -> dict:
        return {
            "counts": {str(d): int(c) for d, c in enumerate(self.counts) if c},
            "infinite": self.infinite,
            "overflow": self.overflow,
            "cap": self.cap,
            "total": self.total,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


TraceLike = Union[AccessTrace, TraceDump, np.ndarray, Iterable[int]]


def _id_batches(source: TraceLike):
    if isinstance(source, (AccessTrace, TraceDump)):
        space = source.address_space_sectors
        total = source.total_sectors
        batches = (ids for ids, _tensors, _waves in source.sector_stream())
        return space, total, batches
    ids = np.asarray(list(source) if not isinstance(source, np.ndarray) else source)
    ids = ids.astype(np.int64)
    if ids.size and ids.min() < 0:
        raise ValueError("sector ids must be non-negative")
    space = int(ids.max()) + 1 if ids.size else 0
    return space, len(ids), iter([ids])


def stack_distances(source: TraceLike, max_distance: int | None = None) -> DistanceHistogram:
    """Histogram of LRU stack distances for a trace or raw sector-id stream.

    Runs in O(n log n) over a Fenwick tree. Distances are exact integers up to
    `max_distance`; anything at or above it lands in the overflow bucket
    (useful to bound memory on long traces).
    """
    space, total, batches = _id_batches(source)
    last_pos = np.zeros(space, dtype=np.int64)
    bit = np.zeros(total + 1, dtype=np.int64)
    pos = np.zeros(1, dtype=np.int64)

    cap = max_distance if max_distance is not None else max(space, 1)
    counts = np.zeros(cap, dtype=np.int64)
    infinite = 0
    overflow = 0
    for ids in batches:
        out = np.empty(len(ids), dtype=np.int64)
        stack_distance_pass(ids, last_pos, bit, pos, out)
        infinite += int((out < 0).sum())
        finite = out[out >= 0]
        over = finite >= cap
        overflow += int(over.sum())
        kept = finite[~over]
        if kept.size:
            counts += np.bincount(kept, minlength=cap)
    return DistanceHistogram(
        counts=counts,
        infinite=infinite,
        overflow=overflow,
        cap=max_distance,
    )


def stack_distances_naive(ids: Iterable[int]) -> list[int | None]:
    """Quadratic reference: per-access distance, None for first touches.

    Kept deliberately independent of the fast path (plain set counting) so the
    two implementations can check each other.
    """
    ids = list(ids)
    out: list[int | None] = []
    for i, x in enumerate(ids):
        prev = None
        for j in range(i - 1, -1, -1):
            if ids[j] == x:
                prev = j
                break
        if prev is None:
            out.append(None)
        else:
            out.append(len(set(ids[prev + 1 : i])))
    return out


def misses_at_capacity(hist: DistanceHistogram, capacity_sectors: int) -> int:
    """Fully-associative LRU misses at a given capacity: first touches plus
    every reuse whose distance reaches the capacity."""
    if capacity_sectors < 0:
        raise ValueError("capacity must be non-negative")
    if hist.cap is not None and capacity_sectors > hist.cap and hist.overflow:
        raise ValueError(
            f"histogram was capped at distance {hist.cap}; "
            f"cannot resolve capacity {capacity_sectors}"
        )
    c = min(capacity_sectors, len(hist.counts))
    return hist.infinite + hist.overflow + int(hist.counts[c:].sum())


def histogram_from_distances(distances: Iterable[int | None]) -> DistanceHistogram:
    """Build an uncapped histogram from explicit distances (None = first touch)."""
    distances = list(distances)
    finite = [d for d in distances if d is not None]
    infinite = sum(1 for d in distances if d is None)
    size = (max(finite) + 1) if finite else 1
    counts = np.zeros(size, dtype=np.int64)
    for d in finite:
        counts[d] += 1
    return DistanceHistogram(counts=counts, infinite=infinite)
