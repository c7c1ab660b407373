"""Workload and machine parameters, derived tiling geometry, and validation.

Everything downstream (trace generation, simulation, analytic models) consumes
the value types defined here. All types are immutable after construction and
safe to share across concurrent experiment runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

KIB = 1024
MIB = 1024 * 1024

# GB10-class defaults: 48 SMs, 24 MiB L2, 32 B sectors, fp16 elements,
# 80x80 square tiles over a 64-wide head. All overridable.
DEFAULT_HEAD_DIM = 64
DEFAULT_TILE = 80
DEFAULT_ELEM_BYTES = 2
DEFAULT_SECTOR_BYTES = 32
DEFAULT_L2_BYTES = 24 * MIB
DEFAULT_SM_COUNT = 48

VALID_ELEM_BYTES = (1, 2, 4)


class ConfigError(ValueError):
    """Aggregated validation failure; `errors` lists every violated invariant."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Schedule(str, Enum):
    """How Q tiles are distributed over CTAs."""

    PERSISTENT = "persistent"  # grid-stride round-robin, one resident CTA per SM
    NONPERSISTENT = "nonpersistent"  # one CTA per Q tile, dispatched in SM-wide waves
    CONTIGUOUS = "contiguous"  # persistent, each CTA owns a contiguous block of Q tiles
    TILESTEP2 = "tilestep2"  # persistent, CTAs claim consecutive pairs of Q tiles


class Scan(str, Enum):
    """Direction policy for the inner KV streaming loop."""

    CYCLIC = "cyclic"  # always ascending
    SAWTOOTH = "sawtooth"  # ascending on even local iterations, descending on odd


class Fidelity(str, Enum):
    """Simulation granularity."""

    SECTOR = "sector"  # exact LRU over individual sectors
    TILEBLOCK = "tileblock"  # LRU over whole tile loads, weighted by sector count


@dataclass(frozen=True)
class AttentionConfig:
    """Shape of one attention workload (square tiling, split-Q dataflow)."""

    seq_len: int
    head_dim: int = DEFAULT_HEAD_DIM
    tile: int = DEFAULT_TILE
    elem_bytes: int = DEFAULT_ELEM_BYTES
    batch: int = 1
    heads: int = 1
    causal: bool = False

    @property
    def num_q_tiles(self) -> int:
        return -(-self.seq_len // self.tile)

    @property
    def trailing_rows(self) -> int:
        """Rows in the last (possibly partial) tile, in [1, tile]."""
        return self.seq_len - (self.num_q_tiles - 1) * self.tile

    @property
    def num_slices(self) -> int:
        """Independent (batch, head) tensor slices."""
        return self.batch * self.heads

    def tile_rows(self, index: int) -> int:
        if index == self.num_q_tiles - 1:
            return self.trailing_rows
        return self.tile

    def to_dict(self) -> dict:
        return {
            "seq_len": self.seq_len,
            "head_dim": self.head_dim,
            "tile": self.tile,
            "elem_bytes": self.elem_bytes,
            "batch": self.batch,
            "heads": self.heads,
            "causal": self.causal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class CacheModel:
    """L2 geometry plus SM count. `ways=None` means fully associative."""

    capacity_bytes: int = DEFAULT_L2_BYTES
    sector_bytes: int = DEFAULT_SECTOR_BYTES
    ways: int | None = None
    n_sm: int = DEFAULT_SM_COUNT

    @property
    def capacity_sectors(self) -> int:
        return self.capacity_bytes // self.sector_bytes

    @property
    def num_sets(self) -> int:
        if self.ways is None:
            return 1
        return self.capacity_sectors // self.ways

    def to_dict(self) -> dict:
        return {
            "capacity_bytes": self.capacity_bytes,
            "sector_bytes": self.sector_bytes,
            "ways": self.ways,
            "n_sm": self.n_sm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CacheModel":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class SchedulePolicy:
    """Schedule variant plus grid size; `grid_size=None` derives min(tiles, SMs)."""

    kind: Schedule = Schedule.PERSISTENT
    grid_size: int | None = None

    def resolve_grid(self, total_q_tiles: int, n_sm: int) -> int:
        """Number of persistent CTAs (wave width for the non-persistent case)."""
        if self.kind is Schedule.NONPERSISTENT:
            return n_sm
        if self.grid_size is None:
            return min(total_q_tiles, n_sm)
        return self.grid_size

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "grid_size": self.grid_size}

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulePolicy":
        return cls(kind=Schedule(d.get("kind", "persistent")), grid_size=d.get("grid_size"))


def validate_cache(cache: CacheModel) -> list[str]:
    """Cache-geometry invariants alone; used by validate() and the simulator."""
    errors: list[str] = []
    if cache.sector_bytes < 1:
        errors.append(f"sector_bytes >= 1 violated (sector_bytes={cache.sector_bytes})")
    elif cache.capacity_bytes % cache.sector_bytes != 0:
        errors.append(
            "capacity_bytes must be a multiple of sector_bytes "
            f"(capacity_bytes={cache.capacity_bytes}, sector_bytes={cache.sector_bytes})"
        )
    if cache.capacity_bytes < 0:
        errors.append(f"capacity_bytes >= 0 violated (capacity_bytes={cache.capacity_bytes})")
    if cache.n_sm < 1:
        errors.append(f"n_sm >= 1 violated (n_sm={cache.n_sm})")
    if cache.ways is not None:
        if cache.ways < 1:
            errors.append(f"ways >= 1 violated (ways={cache.ways})")
        elif cache.sector_bytes >= 1 and cache.capacity_sectors % cache.ways != 0:
            errors.append(
                "capacity_bytes / (sector_bytes * ways) must be a whole number of sets "
                f"(capacity_sectors={cache.capacity_sectors}, ways={cache.ways})"
            )
    return errors


def validate(
    config: AttentionConfig,
    cache: CacheModel | None = None,
    sched: SchedulePolicy | None = None,
) -> list[str]:
    """Check every invariant; returns all violations (empty list means valid)."""
    errors: list[str] = []

    if not (config.seq_len >= config.tile >= 1):
        errors.append(
            f"seq_len >= tile >= 1 violated (seq_len={config.seq_len}, tile={config.tile})"
        )
    if config.head_dim < 1:
        errors.append(f"head_dim >= 1 violated (head_dim={config.head_dim})")
    if config.elem_bytes not in VALID_ELEM_BYTES:
        errors.append(
            f"elem_bytes must be one of {VALID_ELEM_BYTES} (elem_bytes={config.elem_bytes})"
        )
    if config.batch < 1:
        errors.append(f"batch >= 1 violated (batch={config.batch})")
    if config.heads < 1:
        errors.append(f"heads >= 1 violated (heads={config.heads})")

    if cache is not None:
        errors.extend(validate_cache(cache))

    if sched is not None and not errors:
        total = config.num_q_tiles * config.num_slices
        if sched.grid_size is not None:
            if sched.grid_size < 1:
                errors.append(f"grid_size >= 1 violated (grid_size={sched.grid_size})")
            elif sched.kind is Schedule.PERSISTENT and cache is not None:
                expect = min(total, cache.n_sm)
                if sched.grid_size != expect:
                    errors.append(
                        "persistent schedule requires grid_size = min(total_q_tiles, n_sm) "
                        f"(grid_size={sched.grid_size}, expected={expect})"
                    )
            elif sched.kind in (Schedule.CONTIGUOUS, Schedule.TILESTEP2):
                if sched.grid_size > total:
                    errors.append(
                        "grid_size <= total_q_tiles violated "
                        f"(grid_size={sched.grid_size}, total_q_tiles={total})"
                    )

    return errors


def ensure_valid(
    config: AttentionConfig,
    cache: CacheModel | None = None,
    sched: SchedulePolicy | None = None,
) -> None:
    errors = validate(config, cache, sched)
    if errors:
        raise ConfigError(errors)


def sectors_per_tile(
    tile: int,
    head_dim: int,
    elem_bytes: int,
    sector_bytes: int = DEFAULT_SECTOR_BYTES,
) -> int:
    """Sectors covered by one tile's worth of rows: ceil(T*D*E / C)."""
    return -(-(tile * head_dim * elem_bytes) // sector_bytes)


def kv_bytes(config: AttentionConfig, *, total: bool = False) -> int:
    """K plus V footprint: 2*S*D*E per (batch, head) slice; all slices if `total`."""
    per_slice = 2 * config.seq_len * config.head_dim * config.elem_bytes
    if total:
        return per_slice * config.num_slices
    return per_slice


def slice_sectors(config: AttentionConfig, sector_bytes: int = DEFAULT_SECTOR_BYTES) -> int:
    """Sector footprint of one tensor's (batch, head) slice: ceil(S*D*E / C)."""
    return -(-(config.seq_len * config.head_dim * config.elem_bytes) // sector_bytes)


def tile_sector_span(
    config: AttentionConfig,
    tile_index: int,
    sector_bytes: int = DEFAULT_SECTOR_BYTES,
) -> tuple[int, int]:
    """(first sector, sector count) of a tile within its slice, from byte ranges.

    Tiles of a slice start sector-aligned only when tile*head_dim*elem_bytes is
    a multiple of the sector size; otherwise neighboring tiles share a boundary
    sector and the spans overlap by one.
    """
    row_bytes = config.head_dim * config.elem_bytes
    r0 = tile_index * config.tile
    r1 = min(r0 + config.tile, config.seq_len)
    s0 = (r0 * row_bytes) // sector_bytes
    s1 = -(-(r1 * row_bytes) // sector_bytes)
    return s0, s1 - s0


def tiles_sector_aligned(config: AttentionConfig, sector_bytes: int) -> bool:
    """True when every tile's sector span is disjoint from its neighbors'."""
    return (config.tile * config.head_dim * config.elem_bytes) % sector_bytes == 0
