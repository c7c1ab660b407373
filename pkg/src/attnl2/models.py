"""Closed-form L2 sector-traffic predictors and the MAPE comparison metric.

The predictors use plain division (no ceiling), so they deliberately ignore
trailing-tile effects; values are kept fractional and compared to exact trace
counts via MAPE rather than rounded into false agreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import (
    DEFAULT_ELEM_BYTES,
    DEFAULT_HEAD_DIM,
    DEFAULT_SECTOR_BYTES,
    DEFAULT_TILE,
    CacheModel,
)

# Measured onset of capacity misses on GB10-class parts sits near 20/24 of the
# pure-capacity bound (KV working set vs. L2 size).
OBSERVED_ONSET_FRACTION = 20 / 24


@dataclass(frozen=True)
class ModelPrediction:
    """Predicted sector count, split into the Q+O term and the K+V term."""

    qo_sectors: float
    kv_sectors: float

    @property
    def total(self) -> float:
        return self.qo_sectors + self.kv_sectors


@dataclass(frozen=True)
class DivergenceEstimate:
    """Sequence lengths bracketing the onset of non-compulsory misses."""

    capacity_bound: float  # S where the KV footprint exactly fills the cache
    expected_onset: float  # empirical fraction of the bound
    adjusted_bound: float | None = None  # bound minus one wavefront's tile residency


def sectors_noncausal_approx(
    seq_len: int,
    head_dim: int = DEFAULT_HEAD_DIM,
    elem_bytes: int = DEFAULT_ELEM_BYTES,
    sector_bytes: int = DEFAULT_SECTOR_BYTES,
    tile: int = DEFAULT_TILE,
) -> ModelPrediction:
    """M = 2*(S*D*E/C + S^2*D*E/(T*C)); reduces to 8S(1 + S/T) at the defaults."""
    qo = 2 * seq_len * head_dim * elem_bytes / sector_bytes
    kv = 2 * seq_len * seq_len * head_dim * elem_bytes / (tile * sector_bytes)
    return ModelPrediction(qo_sectors=qo, kv_sectors=kv)


def sectors_causal_approx(
    seq_len: int,
    head_dim: int = DEFAULT_HEAD_DIM,
    elem_bytes: int = DEFAULT_ELEM_BYTES,
    sector_bytes: int = DEFAULT_SECTOR_BYTES,
    tile: int = DEFAULT_TILE,
) -> ModelPrediction:
    """Causal-masked variant; reduces to 8S(S/(2T) + 1/2) at the defaults.

    Halves the full rescan term, which also halves the Q+O contribution and
    drops the diagonal tile's full visit; the slack shows up as a few percent
    of MAPE against exact traces, by construction.
    """
    qo = seq_len * head_dim * elem_bytes / sector_bytes
    kv = seq_len * seq_len * head_dim * elem_bytes / (tile * sector_bytes)
    return ModelPrediction(qo_sectors=qo, kv_sectors=kv)


def cold_sectors(
    seq_len: int,
    head_dim: int = DEFAULT_HEAD_DIM,
    elem_bytes: int = DEFAULT_ELEM_BYTES,
    sector_bytes: int = DEFAULT_SECTOR_BYTES,
) -> float:
    """Compulsory-miss law for the four tensors: 4*S*D*E/C (16S at the defaults)."""
    return 4 * seq_len * head_dim * elem_bytes / sector_bytes


def hit_rate_model(n_sm: int) -> float:
    """Wavefront-sharing hit-rate factor 1 - 1/n: one leader miss, n-1 follower hits."""
    if n_sm < 1:
        raise ValueError(f"n_sm >= 1 required (n_sm={n_sm})")
    return 1.0 - 1.0 / n_sm


def divergence_length(
    cache: CacheModel,
    head_dim: int = DEFAULT_HEAD_DIM,
    elem_bytes: int = DEFAULT_ELEM_BYTES,
    tile: int | None = None,
) -> DivergenceEstimate:
    """Sequence length where KV stops fitting in L2 and capacity misses begin.

    The capacity bound solves 2*S*D*E = capacity. When `tile` is given, a
    second bound discounts the capacity by one wavefront's worth of resident
    Q/K/V/O tiles (n_sm CTAs, four tiles each).
    """
    kv_bytes_per_row = 2 * head_dim * elem_bytes
    bound = cache.capacity_bytes / kv_bytes_per_row
    adjusted = None
    if tile is not None:
        resident = cache.n_sm * 4 * tile * head_dim * elem_bytes
        adjusted = max(cache.capacity_bytes - resident, 0) / kv_bytes_per_row
    return DivergenceEstimate(
        capacity_bound=bound,
        expected_onset=bound * OBSERVED_ONSET_FRACTION,
        adjusted_bound=adjusted,
    )


def mape(pairs: Iterable[Sequence[float]]) -> float:
    """Mean absolute percentage error of (observed, predicted) pairs, in percent."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("mape requires at least one (observed, predicted) pair")
    acc = 0.0
    for observed, predicted in pairs:
        if observed <= 0:
            raise ValueError(f"observed values must be positive (got {observed})")
        acc += abs(observed - predicted) / observed
    return acc / len(pairs) * 100.0
