"""Deterministic sector-granularity access traces for tiled attention kernels.

The generator emulates the memory side of a split-Q attention kernel: each CTA
holds one Q tile resident, streams every K/V tile past it, and writes one O
tile. CTAs advance in lockstep wavefronts, one KV tile load per CTA per wave
step, with CTAs visited in ascending index order inside a wave.

Traces are produced as chunk batches (one chunk = one whole tile load, a run
of consecutive sectors), which keeps generation vectorized; per-sector views
are derived on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .config import (
    AttentionConfig,
    CacheModel,
    Scan,
    Schedule,
    SchedulePolicy,
    ensure_valid,
    slice_sectors,
    tile_sector_span,
    tiles_sector_aligned,
)

TENSOR_NAMES = ("Q", "K", "V", "O")
TENSOR_Q, TENSOR_K, TENSOR_V, TENSOR_O = 0, 1, 2, 3
KIND_READ, KIND_WRITE = 0, 1
KIND_NAMES = ("read", "write")

# Intra-wave ordering of one CTA's emissions: Q load on tile entry, then the
# KV pair for this inner step, then the O store on tile exit.
_SUB_Q, _SUB_K, _SUB_V, _SUB_O = 0, 1, 2, 3

DEFAULT_EVENT_CAP = 2**31 - 1

_DUMP_DTYPE = np.dtype(
    [("tensor", "u1"), ("kind", "u1"), ("cta", "<u2"), ("wave", "<u4"), ("sector", "<i8")]
)


class TraceCapError(RuntimeError):
    """Sector-event count exceeds the configured hard cap."""


class SectorAccess(NamedTuple):
    tensor: str
    sector_id: int
    cta: int
    wave: int
    kind: str


@dataclass
class ChunkBatch:
    """A trace segment as parallel arrays, one row per whole-tile load/store."""

    tensor: np.ndarray  # uint8 tensor codes
    kind: np.ndarray  # uint8, 0=read 1=write
    cta: np.ndarray  # int32
    wave: np.ndarray  # int64 lockstep step index
    start: np.ndarray  # int64 first sector id of the chunk
    count: np.ndarray  # int64 sectors in the chunk
    block: np.ndarray  # int64 dense tile-block id

    def __len__(self) -> int:
        return len(self.start)


@dataclass
class QTileAssignment:
    """Per-CTA ordered claims of global work items ((batch, head, tile) triples)."""

    kind: Schedule
    grid: int
    cta_items: list[np.ndarray]
    cohorts: list[list[int]]  # CTA groups launched back to back (wave barrier between)
    num_q_tiles: int
    heads: int

    def items_of(self, cta: int) -> list[tuple[int, int, int]]:
        n, h = self.num_q_tiles, self.heads
        out = []
        for w in self.cta_items[cta]:
            s, tile = divmod(int(w), n)
            out.append((s // h, s % h, tile))
        return out


def assign_q_tiles(
    config: AttentionConfig,
    sched: SchedulePolicy,
    n_sm: int,
) -> QTileAssignment:
    """Distribute every (batch, head, q_tile) work item over CTAs.

    Work items are linearized batch-major, then head, then tile index, and
    each variant covers every item exactly once.
    """
    n = config.num_q_tiles
    total = n * config.num_slices
    grid = sched.resolve_grid(total, n_sm)

    if sched.kind is Schedule.NONPERSISTENT:
        items = [np.array([k], dtype=np.int64) for k in range(total)]
        cohorts = [list(range(w, min(w + grid, total))) for w in range(0, total, grid)]
        return QTileAssignment(sched.kind, grid, items, cohorts, n, config.heads)

    if grid > total:
        raise ValueError(f"grid_size {grid} exceeds total q tiles {total}")

    if sched.kind is Schedule.PERSISTENT:
        items = [np.arange(c, total, grid, dtype=np.int64) for c in range(grid)]
    elif sched.kind is Schedule.CONTIGUOUS:
        block = -(-total // grid)
        items = [
            np.arange(c * block, min((c + 1) * block, total), dtype=np.int64)
            for c in range(grid)
        ]
    elif sched.kind is Schedule.TILESTEP2:
        # Pair-granular grid stride: the local tile loop advances by two, so a
        # forward/backward KV pair lands on consecutive Q tiles.
        num_pairs = -(-total // 2)
        items = []
        for c in range(grid):
            pairs = np.arange(c, num_pairs, grid, dtype=np.int64)
            lo = pairs * 2
            claimed = np.stack([lo, lo + 1], axis=1).reshape(-1)
            items.append(claimed[claimed < total])
    else:  # pragma: no cover
        raise ValueError(f"unknown schedule kind {sched.kind}")

    return QTileAssignment(sched.kind, grid, items, [list(range(grid))], n, config.heads)


def kv_visit_order(
    local_iter: int,
    n_kv: int,
    scan: Scan,
    causal_bound: int | None = None,
) -> list[int]:
    """KV tile indices visited by one inner loop, in order.

    Cyclic always ascends; sawtooth descends on odd local iterations. A causal
    bound restricts the visited set to tiles 0..bound and the sawtooth
    reverses within that prefix.
    """
    if n_kv < 1:
        raise ValueError(f"n_kv >= 1 required (n_kv={n_kv})")
    if causal_bound is not None and not (0 <= causal_bound < n_kv):
        raise ValueError(f"causal_bound must lie in [0, n_kv) (got {causal_bound})")
    n = n_kv if causal_bound is None else causal_bound + 1
    if scan is Scan.SAWTOOTH and local_iter % 2 == 1:
        return list(range(n - 1, -1, -1))
    return list(range(n))


@dataclass(frozen=True)
class TraceTotals:
    """Exact per-tensor sector-access counts (closed form, no enumeration)."""

    q: int
    k: int
    v: int
    o: int
    distinct_sectors: int

    @property
    def total(self) -> int:
        return self.q + self.k + self.v + self.o

    def as_dict(self) -> dict:
        return {
            "Q": self.q,
            "K": self.k,
            "V": self.v,
            "O": self.o,
            "total": self.total,
            "distinct_sectors": self.distinct_sectors,
        }


class _Plan:
    """Precomputed geometry and per-CTA streams for one trace."""

    def __init__(self, trace: "AccessTrace"):
        cfg = trace.config
        sector_bytes = trace.cache.sector_bytes
        n = cfg.num_q_tiles
        self.n_kv = n
        self.num_slices = cfg.num_slices
        self.slice_sectors = slice_sectors(cfg, sector_bytes)

        spans = np.array(
            [tile_sector_span(cfg, j, sector_bytes) for j in range(n)], dtype=np.int64
        )
        self.tile_start = spans[:, 0]
        self.tile_count = spans[:, 1]

        region = self.num_slices * self.slice_sectors
        self.tensor_base = np.arange(4, dtype=np.int64) * region
        self.address_space = 4 * region
        self.block_space = 4 * self.num_slices * n

        assignment = trace.assignment
        self.ctas = []
        for cta, w in enumerate(assignment.cta_items):
            sl = w // n
            tiles = w % n
            if cfg.causal:
                n_inner = tiles + 1
            else:
                n_inner = np.full(len(w), n, dtype=np.int64)
            cum = np.zeros(len(w) + 1, dtype=np.int64)
            np.cumsum(n_inner, out=cum[1:])
            self.ctas.append(
                {
                    "cta": cta,
                    "slices": sl,
                    "tiles": tiles,
                    "n_inner": n_inner,
                    "cum": cum,
                    "len": int(cum[-1]),
                }
            )

        # Wave offsets per cohort: a cohort launches only after the previous
        # one fully drains (gang-scheduled dispatch waves).
        self.cohort_offsets = []
        self.cohort_members = assignment.cohorts
        off = 0
        for group in assignment.cohorts:
            self.cohort_offsets.append(off)
            off += max((self.ctas[c]["len"] for c in group), default=0)
        self.total_waves = off
        self.max_cohort = max((len(g) for g in assignment.cohorts), default=1)


class AccessTrace:
    """Lazy, re-iterable, deterministic stream of sector accesses.

    The chunk stream is a pure function of (config, cache, sched, scan), so
    repeated iteration yields byte-identical output.
    """

    def __init__(
        self,
        config: AttentionConfig,
        cache: CacheModel,
        sched: SchedulePolicy,
        scan: Scan,
        max_events: int = DEFAULT_EVENT_CAP,
    ):
        self.config = config
        self.cache = cache
        self.sched = sched
        self.scan = scan
        self.max_events = max_events
        self.assignment = assign_q_tiles(config, sched, cache.n_sm)
        self._plan = _Plan(self)
        self._totals: TraceTotals | None = None

    # -- closed-form accounting -------------------------------------------------

    def totals(self) -> TraceTotals:
        if self._totals is None:
            p = self._plan
            cfg = self.config
            q = int(p.tile_count.sum())
            if cfg.causal:
                visits = int(np.cumsum(p.tile_count).sum())
            else:
                visits = p.n_kv * q
            m = p.num_slices
            self._totals = TraceTotals(
                q=q * m,
                k=visits * m,
                v=visits * m,
                o=q * m,
                distinct_sectors=4 * m * p.slice_sectors,
            )
        return self._totals

    @property
    def total_sectors(self) -> int:
        return self.totals().total

    @property
    def total_chunks(self) -> int:
        cfg = self.config
        n = cfg.num_q_tiles
        kv_visits = n * (n + 1) // 2 if cfg.causal else n * n
        return cfg.num_slices * (2 * n + 2 * kv_visits)

    @property
    def total_waves(self) -> int:
        return self._plan.total_waves

    @property
    def address_space_sectors(self) -> int:
        return self._plan.address_space

    @property
    def block_space(self) -> int:
        return self._plan.block_space

    @property
    def tile_aligned(self) -> bool:
        return tiles_sector_aligned(self.config, self.cache.sector_bytes)

    def spec_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "cache": self.cache.to_dict(),
            "schedule": self.sched.to_dict(),
            "scan": self.scan.value,
        }

    # -- chunk stream -------------------------------------------------------------

    def chunks(self, max_rows: int = 2_000_000) -> Iterator[ChunkBatch]:
        """Yield the trace as ordered chunk batches, partitioned on wave bounds."""
        p = self._plan
        if p.total_waves == 0:
            return
        window = max(1, max_rows // max(1, 4 * p.max_cohort))
        starts = np.array(p.cohort_offsets, dtype=np.int64)
        w0 = 0
        while w0 < p.total_waves:
            w1 = min(p.total_waves, w0 + window)
            batch = self._build_window(w0, w1, starts)
            if batch is not None and len(batch):
                yield batch
            w0 = w1

    def _build_window(self, w0: int, w1: int, cohort_starts: np.ndarray) -> ChunkBatch | None:
        p = self._plan
        sawtooth = self.scan is Scan.SAWTOOTH
        g0 = int(np.searchsorted(cohort_starts, w0, side="right") - 1)
        fields: list[list[np.ndarray]] = [[] for _ in range(8)]  # +sortkey

        for g in range(max(g0, 0), len(cohort_starts)):
            off = int(cohort_starts[g])
            if off >= w1:
                break
            for c in p.cohort_members[g]:
                st = p.ctas[c]
                lo = max(0, w0 - off)
                hi = min(st["len"], w1 - off)
                if hi <= lo:
                    continue
                self._emit_cta_rows(st, off, lo, hi, sawtooth, fields)

        if not fields[0]:
            return None
        tensor, kind, cta, wave, start, count, block, sub = (
            np.concatenate(f) for f in fields
        )
        # Single composite key: (wave, cta, sub) ascending.
        key = ((wave - w0) * (len(p.ctas) + 1) + cta) * 4 + sub
        order = np.argsort(key, kind="stable")
        return ChunkBatch(
            tensor=tensor[order].astype(np.uint8),
            kind=kind[order].astype(np.uint8),
            cta=cta[order].astype(np.int32),
            wave=wave[order],
            start=start[order],
            count=count[order],
            block=block[order],
        )

    def _emit_cta_rows(self, st, off, lo, hi, sawtooth, fields):
        p = self._plan
        cta = st["cta"]
        k = np.arange(lo, hi, dtype=np.int64)
        pos = np.searchsorted(st["cum"], k, side="right") - 1
        jrel = k - st["cum"][pos]
        ni = st["n_inner"][pos]
        if sawtooth:
            j = np.where((pos & 1) == 1, ni - 1 - jrel, jrel)
        else:
            j = jrel
        wave = off + k
        sl = st["slices"][pos]
        tiles = st["tiles"][pos]
        slice_off = sl * p.slice_sectors
        n = p.n_kv

        def push(tensor_code, kind_code, sub, waves, starts, counts, blocks):
            m = len(waves)
            fields[0].append(np.full(m, tensor_code, dtype=np.int64))
            fields[1].append(np.full(m, kind_code, dtype=np.int64))
            fields[2].append(np.full(m, cta, dtype=np.int64))
            fields[3].append(waves)
            fields[4].append(starts)
            fields[5].append(counts)
            fields[6].append(blocks)
            fields[7].append(np.full(m, sub, dtype=np.int64))

        # Q load on tile entry.
        m0 = jrel == 0
        if m0.any():
            push(
                TENSOR_Q,
                KIND_READ,
                _SUB_Q,
                wave[m0],
                p.tensor_base[TENSOR_Q] + slice_off[m0] + p.tile_start[tiles[m0]],
                p.tile_count[tiles[m0]],
                (TENSOR_Q * p.num_slices + sl[m0]) * n + tiles[m0],
            )
        # One K tile then one V tile per inner step.
        push(
            TENSOR_K,
            KIND_READ,
            _SUB_K,
            wave,
            p.tensor_base[TENSOR_K] + slice_off + p.tile_start[j],
            p.tile_count[j],
            (TENSOR_K * p.num_slices + sl) * n + j,
        )
        push(
            TENSOR_V,
            KIND_READ,
            _SUB_V,
            wave,
            p.tensor_base[TENSOR_V] + slice_off + p.tile_start[j],
            p.tile_count[j],
            (TENSOR_V * p.num_slices + sl) * n + j,
        )
        # O store on tile completion.
        ml = jrel == ni - 1
        if ml.any():
            push(
                TENSOR_O,
                KIND_WRITE,
                _SUB_O,
                wave[ml],
                p.tensor_base[TENSOR_O] + slice_off[ml] + p.tile_start[tiles[ml]],
                p.tile_count[tiles[ml]],
                (TENSOR_O * p.num_slices + sl[ml]) * n + tiles[ml],
            )

    # -- sector-level views ---------------------------------------------------------

    def _check_cap(self, what: str) -> None:
        if self.total_sectors > self.max_events:
            raise TraceCapError(
                f"{what} would expand {self.total_sectors:,} sector events, above the "
                f"cap of {self.max_events:,}; use tile-block fidelity or raise max_events"
            )

    def sector_stream(
        self, batch_sectors: int = 4_000_000
    ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yield (sector_ids, tensor_codes, waves) arrays in trace order."""
        self._check_cap("sector stream")
        avg = max(1, self.total_sectors // max(1, self.total_chunks))
        for batch in self.chunks(max_rows=max(1024, batch_sectors // avg)):
            yield expand_chunks(batch)

    def events(self) -> Iterator[SectorAccess]:
        """Per-sector view; intended for desk-scale traces and dumps."""
        self._check_cap("event iteration")
        for batch in self.chunks(max_rows=65_536):
            for i in range(len(batch)):
                s = int(batch.start[i])
                for sid in range(s, s + int(batch.count[i])):
                    yield SectorAccess(
                        tensor=TENSOR_NAMES[batch.tensor[i]],
                        sector_id=sid,
                        cta=int(batch.cta[i]),
                        wave=int(batch.wave[i]),
                        kind=KIND_NAMES[batch.kind[i]],
                    )


def expand_chunks(batch: ChunkBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expand a chunk batch to per-sector (ids, tensor_codes, waves) arrays."""
    counts = batch.count
    total = int(counts.sum())
    offsets = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    ids = np.repeat(batch.start - offsets, counts) + np.arange(total, dtype=np.int64)
    tensors = np.repeat(batch.tensor, counts)
    waves = np.repeat(batch.wave, counts)
    return ids, tensors, waves


def gen_trace(
    config: AttentionConfig,
    cache: CacheModel,
    sched: SchedulePolicy | None = None,
    scan: Scan = Scan.CYCLIC,
    max_events: int = DEFAULT_EVENT_CAP,
) -> AccessTrace:
    """Validate inputs and build the lazy access trace."""
    sched = sched or SchedulePolicy()
    ensure_valid(config, cache, sched)
    return AccessTrace(config, cache, sched, scan, max_events=max_events)


def trace_totals(trace: AccessTrace) -> TraceTotals:
    """Exact per-tensor totals without enumerating the trace."""
    return trace.totals()


# -- binary dump / replay -------------------------------------------------------


def dump_trace(trace: AccessTrace, path: str | Path) -> Path:
    """Write per-sector records plus a JSON sidecar; returns the record path.

    Record layout (little endian): tensor u8, kind u8, cta u16, wave u32,
    sector_id i64.
    """
    path = Path(path)
    trace._check_cap("trace dump")
    written = 0
    with open(path, "wb") as f:
        for batch in trace.chunks():
            ids, tensors, waves = expand_chunks(batch)
            counts = batch.count
            ctas = np.repeat(batch.cta, counts)
            kinds = np.repeat(batch.kind, counts)
            if ctas.size and int(ctas.max()) >= 2**16:
                raise ValueError("cta index does not fit the 2-byte dump field")
            if waves.size and int(waves.max()) >= 2**32:
                raise ValueError("wave index does not fit the 4-byte dump field")
            rec = np.empty(len(ids), dtype=_DUMP_DTYPE)
            rec["tensor"] = tensors
            rec["kind"] = kinds
            rec["cta"] = ctas
            rec["wave"] = waves
            rec["sector"] = ids
            rec.tofile(f)
            written += len(ids)
    sidecar = {
        "format": "attnl2-trace-v1",
        "records": written,
        "address_space_sectors": trace.address_space_sectors,
        "spec": trace.spec_dict(),
        "totals": trace.totals().as_dict(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))
    return path


class TraceDump:
    """Replayable per-sector trace loaded from a binary dump."""

    def __init__(self, records: np.ndarray, meta: dict):
        self.records = records
        self.meta = meta
        self.address_space_sectors = int(
            meta.get("address_space_sectors", int(records["sector"].max()) + 1 if len(records) else 0)
        )
        self.total_sectors = len(records)
        self.tile_aligned = False  # block atomicity is not recoverable from a flat dump

    @property
    def total_waves(self) -> int:
        return int(self.records["wave"].max()) + 1 if len(self.records) else 0

    def sector_stream(
        self, batch_sectors: int = 4_000_000
    ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        for at in range(0, len(self.records), batch_sectors):
            part = self.records[at : at + batch_sectors]
            yield (
                part["sector"].astype(np.int64),
                part["tensor"].astype(np.uint8),
                part["wave"].astype(np.int64),
            )


def read_dump(path: str | Path) -> TraceDump:
    path = Path(path)
    records = np.fromfile(path, dtype=_DUMP_DTYPE)
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return TraceDump(records, meta)


def write_totals_csv(trace: AccessTrace, path: str | Path) -> None:
    """Per-tensor totals as a two-column CSV summary."""
    totals = trace.totals().as_dict()
    lines = ["tensor,sectors"]
    lines += [f"{k},{v}" for k, v in totals.items()]
    Path(path).write_text("\n".join(lines) + "\n")
