"""attnl2: trace-driven L2 cache laboratory for tiled attention kernels.

Generates deterministic sector-level memory traces for split-Q attention
under different CTA schedules and KV scan orders, replays them through an L2
cache model, and checks the results against closed-form traffic predictors
and stack-distance analysis.
"""

from .config import (
    AttentionConfig,
    CacheModel,
    ConfigError,
    Fidelity,
    Scan,
    Schedule,
    SchedulePolicy,
    ensure_valid,
    kv_bytes,
    sectors_per_tile,
    slice_sectors,
    validate,
)
from .cachesim import CacheStats, FidelityError, MissReduction, classify, lru_misses, simulate
from .models import (
    DivergenceEstimate,
    ModelPrediction,
    cold_sectors,
    divergence_length,
    hit_rate_model,
    mape,
    sectors_causal_approx,
    sectors_noncausal_approx,
)
from .reuse import DistanceHistogram, misses_at_capacity, stack_distances
from .tracegen import (
    AccessTrace,
    QTileAssignment,
    SectorAccess,
    TraceCapError,
    TraceTotals,
    assign_q_tiles,
    dump_trace,
    gen_trace,
    kv_visit_order,
    read_dump,
    trace_totals,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionConfig",
    "CacheModel",
    "SchedulePolicy",
    "Schedule",
    "Scan",
    "Fidelity",
    "ConfigError",
    "validate",
    "ensure_valid",
    "sectors_per_tile",
    "kv_bytes",
    "slice_sectors",
    "AccessTrace",
    "QTileAssignment",
    "SectorAccess",
    "TraceTotals",
    "TraceCapError",
    "assign_q_tiles",
    "kv_visit_order",
    "gen_trace",
    "trace_totals",
    "dump_trace",
    "read_dump",
    "CacheStats",
    "MissReduction",
    "FidelityError",
    "simulate",
    "classify",
    "lru_misses",
    "DistanceHistogram",
    "stack_distances",
    "misses_at_capacity",
    "ModelPrediction",
    "DivergenceEstimate",
    "sectors_noncausal_approx",
    "sectors_causal_approx",
    "cold_sectors",
    "hit_rate_model",
    "divergence_length",
    "mape",
    "__version__",
]
