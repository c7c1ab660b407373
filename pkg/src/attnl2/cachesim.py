"""Trace-driven L2 sector cache simulation with miss classification.

Two fidelity levels share one LRU core: sector-exact replays every sector,
tile-block replays one weighted event per whole-tile load (valid only when
tile loads are atomic runs of disjoint sectors, which generated traces
guarantee for sector-aligned tiles). Misses are split into compulsory (global
first touch) and non-compulsory (everything else, the optimization target).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _kernels
from .config import CacheModel, ConfigError, Fidelity, validate_cache
from .tracegen import TENSOR_NAMES, AccessTrace, TraceDump


class FidelityError(ValueError):
    """Requested fidelity is invalid for this trace or cache geometry."""


@dataclass(frozen=True)
class TensorCounts:
    accesses: int = 0
    hits: int = 0
    compulsory_misses: int = 0

    @property
    def misses(self) -> int:
        return self.accesses - self.hits

    @property
    def non_compulsory_misses(self) -> int:
        return self.misses - self.compulsory_misses

    @property
    def hit_rate(self) -> float:
        return self.hits / self.accesses if self.accesses else 0.0

    def __add__(self, other: "TensorCounts") -> "TensorCounts":
        return TensorCounts(
            self.accesses + other.accesses,
            self.hits + other.hits,
            self.compulsory_misses + other.compulsory_misses,
        )

    def as_dict(self) -> dict:
        return {
            "accesses": self.accesses,
            "hits": self.hits,
            "misses": self.misses,
            "compulsory_misses": self.compulsory_misses,
            "non_compulsory_misses": self.non_compulsory_misses,
            "hit_rate": self.hit_rate,
        }


@dataclass
class WaveSeries:
    """Per-wave access and hit counts (sector-weighted)."""

    accesses: np.ndarray
    hits: np.ndarray

    def hit_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.accesses > 0, self.hits / self.accesses, 0.0)


@dataclass
class CacheStats:
    """Hit/miss counters per tensor and in total for one simulation run."""

    per_tensor: dict[str, TensorCounts]
    meta: dict = field(default_factory=dict)
    waves: WaveSeries | None = None

    @property
    def total(self) -> TensorCounts:
        out = TensorCounts()
        for c in self.per_tensor.values():
            out = out + c
        return out

    @property
    def kv(self) -> TensorCounts:
        """Counts over the streamed K and V tensors only."""
        return self.per_tensor["K"] + self.per_tensor["V"]

    @property
    def hit_rate(self) -> float:
        return self.total.hit_rate

    def as_dict(self) -> dict:
        d = {name: c.as_dict() for name, c in self.per_tensor.items()}
        d["total"] = self.total.as_dict()
        d["kv_hit_rate"] = self.kv.hit_rate
        if self.meta:
            d["meta"] = self.meta
        return d

    def csv_row(self) -> dict:
        t = self.total
        return {
            "accesses": t.accesses,
            "hits": t.hits,
            "misses": t.misses,
            "compulsory_misses": t.compulsory_misses,
            "non_compulsory_misses": t.non_compulsory_misses,
            "hit_rate": t.hit_rate,
            "kv_hit_rate": self.kv.hit_rate,
        }


def _counters_to_stats(counters: np.ndarray, meta: dict, waves: WaveSeries | None) -> CacheStats:
    per = {
        name: TensorCounts(
            accesses=int(counters[i, 0]),
            hits=int(counters[i, 1]),
            compulsory_misses=int(counters[i, 2]),
        )
        for i, name in enumerate(TENSOR_NAMES)
    }
    return CacheStats(per_tensor=per, meta=meta, waves=waves)


def simulate(
    trace: Union[AccessTrace, TraceDump],
    cache: CacheModel | None = None,
    fidelity: Fidelity = Fidelity.SECTOR,
    track_waves: bool = False,
) -> CacheStats:
    """Replay a trace through the cache model and collect CacheStats.

    The cache defaults to the one the trace was generated for; passing a
    different capacity or associativity over the same trace is allowed as
    long as the sector size matches the trace's address space.
    """
    if cache is None:
        cache = getattr(trace, "cache", None)
        if cache is None:
            raise ValueError("replayed dumps need an explicit CacheModel")
    errors = validate_cache(cache)
    if errors:
        raise ConfigError(errors)
    own = getattr(trace, "cache", None)
    if own is not None and own.sector_bytes != cache.sector_bytes:
        raise ValueError(
            f"trace was generated at {own.sector_bytes} B sectors, "
            f"cannot simulate at {cache.sector_bytes} B"
        )

    meta = {
        "cache": cache.to_dict(),
        "fidelity": fidelity.value,
    }
    spec = getattr(trace, "spec_dict", None)
    if spec is not None:
        meta["trace"] = spec()

    counters = np.zeros((4, 3), dtype=np.int64)
    cap = cache.capacity_sectors
    n_waves = trace.total_waves if track_waves else 0
    wave_acc = np.zeros(max(n_waves, 1), dtype=np.int64)
    wave_hits = np.zeros(max(n_waves, 1), dtype=np.int64)

    if fidelity is Fidelity.TILEBLOCK:
        if cache.ways is not None:
            raise FidelityError("tile-block fidelity requires a fully-associative cache")
        if not getattr(trace, "tile_aligned", False):
            raise FidelityError(
                "tile-block fidelity needs atomic, sector-aligned tile loads; "
                "use sector fidelity for this trace"
            )
        n_blocks = trace.block_space
        prev, nxt, incache, seen = _kernels.lru_state(n_blocks)
        resident = np.zeros(n_blocks, dtype=np.int64)
        state = np.zeros(1, dtype=np.int64)
        for batch in trace.chunks():
            _kernels.lru_weighted(
                batch.block,
                batch.tensor,
                batch.wave,
                batch.count,
                cap,
                prev,
                nxt,
                incache,
                seen,
                resident,
                counters,
                state,
                wave_acc,
                wave_hits,
                track_waves,
            )
    elif cache.ways is None or cap == 0:
        n_ids = trace.address_space_sectors
        prev, nxt, incache, seen = _kernels.lru_state(n_ids)
        resident = np.ones(n_ids, dtype=np.int64)
        state = np.zeros(1, dtype=np.int64)
        ones: np.ndarray | None = None
        for ids, tensors, waves in trace.sector_stream():
            if ones is None or len(ones) < len(ids):
                ones = np.ones(len(ids), dtype=np.int64)
            _kernels.lru_weighted(
                ids,
                tensors,
                waves,
                ones[: len(ids)],
                cap,
                prev,
                nxt,
                incache,
                seen,
                resident,
                counters,
                state,
                wave_acc,
                wave_hits,
                track_waves,
            )
    else:
        n_sets = cache.num_sets
        tags = np.full(n_sets * cache.ways, -1, dtype=np.int64)
        stamp = np.zeros(n_sets * cache.ways, dtype=np.int64)
        seen = np.zeros(trace.address_space_sectors, dtype=np.bool_)
        tick = np.zeros(1, dtype=np.int64)
        for ids, tensors, _waves in trace.sector_stream():
            _kernels.lru_setassoc(
                ids, tensors, n_sets, cache.ways, tags, stamp, seen, counters, tick
            )
        if track_waves:
            track_waves = False  # wave series not collected on the set-associative path

    waves = WaveSeries(wave_acc, wave_hits) if track_waves and n_waves else None
    return _counters_to_stats(counters, meta, waves)


def lru_misses(ids: np.ndarray, capacity_sectors: int) -> int:
    """Fully-associative LRU miss count over a raw sector-id stream.

    Exposed as the cross-validation primitive: its result must equal the
    stack-distance histogram tail at the same capacity, on any trace.
    """
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return 0
    space = int(ids.max()) + 1
    prev, nxt, incache, seen = _kernels.lru_state(space)
    resident = np.ones(space, dtype=np.int64)
    counters = np.zeros((4, 3), dtype=np.int64)
    state = np.zeros(1, dtype=np.int64)
    dummy = np.zeros(1, dtype=np.int64)
    _kernels.lru_weighted(
        ids,
        np.zeros(len(ids), dtype=np.uint8),
        np.zeros(len(ids), dtype=np.int64),
        np.ones(len(ids), dtype=np.int64),
        capacity_sectors,
        prev,
        nxt,
        incache,
        seen,
        resident,
        counters,
        state,
        dummy,
        dummy,
        False,
    )
    return int(counters[0, 0] - counters[0, 1])


@dataclass
class MissReduction:
    """Side-by-side miss deltas between a baseline and a variant run."""

    baseline_non_compulsory: int
    variant_non_compulsory: int
    non_compulsory_reduction: float | None  # fraction of baseline removed
    baseline_misses: int
    variant_misses: int
    miss_reduction: float | None
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "baseline_non_compulsory": self.baseline_non_compulsory,
            "variant_non_compulsory": self.variant_non_compulsory,
            "non_compulsory_reduction": self.non_compulsory_reduction,
            "baseline_misses": self.baseline_misses,
            "variant_misses": self.variant_misses,
            "miss_reduction": self.miss_reduction,
            "note": self.note,
        }


def classify(baseline: CacheStats, variant: CacheStats) -> MissReduction:
    """Compare two runs of the same workload under different orderings.

    Demands identical per-tensor access totals and compulsory counts (both are
    ordering-invariant), and identical workload/cache geometry when metadata
    is available.
    """
    problems = []
    for name in TENSOR_NAMES:
        a, b = baseline.per_tensor[name], variant.per_tensor[name]
        if a.accesses != b.accesses:
            problems.append(f"{name} access totals differ ({a.accesses} vs {b.accesses})")
        if a.compulsory_misses != b.compulsory_misses:
            problems.append(
                f"{name} compulsory counts differ "
                f"({a.compulsory_misses} vs {b.compulsory_misses})"
            )
    ta = baseline.meta.get("trace", {})
    tb = variant.meta.get("trace", {})
    if ta and tb:
        for key in ("config", "cache"):
            if ta.get(key) != tb.get(key):
                problems.append(f"{key} differs between runs")
    if baseline.meta.get("cache") != variant.meta.get("cache"):
        problems.append("simulated cache geometry differs between runs")
    if problems:
        raise ValueError("stats are not comparable: " + "; ".join(problems))

    a_nc = baseline.total.non_compulsory_misses
    b_nc = variant.total.non_compulsory_misses
    a_m = baseline.total.misses
    b_m = variant.total.misses
    note = ""
    if a_nc == 0:
        note = "no non-compulsory misses to reduce"
    return MissReduction(
        baseline_non_compulsory=a_nc,
        variant_non_compulsory=b_nc,
        non_compulsory_reduction=(a_nc - b_nc) / a_nc if a_nc else None,
        baseline_misses=a_m,
        variant_misses=b_m,
        miss_reduction=(a_m - b_m) / a_m if a_m else None,
        note=note,
    )
