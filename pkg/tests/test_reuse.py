import numpy as np
import pytest

from attnl2 import lru_misses, misses_at_capacity, stack_distances
from attnl2.reuse import histogram_from_distances, stack_distances_naive

from helpers import make_trace


def two_pass(n, second_reversed):
    fwd = list(range(n))
    return np.array(fwd + (fwd[::-1] if second_reversed else fwd), dtype=np.int64)


def test_cyclic_rescan_distances_equal_footprint():
    hist = stack_distances(two_pass(8, second_reversed=False))
    assert hist.infinite == 8
    assert int(hist.counts[7]) == 8
    assert int(hist.counts.sum()) == 8


def test_sawtooth_rescan_spreads_distances():
    hist = stack_distances(two_pass(8, second_reversed=True))
    assert hist.infinite == 8
    assert hist.counts[:8].tolist() == [1] * 8


def test_no_repeats_all_infinite():
    hist = stack_distances(np.arange(17))
    assert hist.infinite == 17
    assert int(hist.counts.sum()) == 0
    assert hist.total == 17


def test_histogram_totals_invariants():
    trace = make_trace(19, n_sm=3, causal=True)
    hist = stack_distances(trace)
    assert hist.total == trace.totals().total
    assert hist.distinct_sectors == trace.totals().distinct_sectors


def test_misses_at_capacity_reference_points():
    cyc = stack_distances(two_pass(8, False))
    saw = stack_distances(two_pass(8, True))
    assert misses_at_capacity(cyc, 0) == 16
    assert misses_at_capacity(cyc, 8) == 8
    assert misses_at_capacity(cyc, 4) == 16
    assert misses_at_capacity(saw, 4) == 12
    assert misses_at_capacity(saw, 8) == 8


def test_sawtooth_dominates_cyclic_at_every_capacity():
    for n in (4, 8, 13):
        cyc = stack_distances(two_pass(n, False))
        saw = stack_distances(two_pass(n, True))
        for cap in range(0, n + 3):
            a, b = misses_at_capacity(saw, cap), misses_at_capacity(cyc, cap)
            assert a <= b
            if 0 < cap < n:
                assert a < b
            else:
                assert a == b


def test_naive_and_fast_agree():
    rng = np.random.default_rng(21)
    for _ in range(20):
        ids = rng.integers(0, int(rng.integers(1, 40)), int(rng.integers(1, 500)))
        fast = stack_distances(ids.astype(np.int64))
        naive = histogram_from_distances(stack_distances_naive(ids))
        assert fast.infinite == naive.infinite
        top = max(len(fast.counts), len(naive.counts))
        for cap in range(top + 1):
            assert misses_at_capacity(fast, cap) == misses_at_capacity(naive, cap)


def test_oracle_identity_against_simulator():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n_ids = int(rng.integers(1, 64))
        ids = rng.integers(0, n_ids, int(rng.integers(1, 2000))).astype(np.int64)
        hist = stack_distances(ids)
        for cap in range(0, n_ids + 2):
            assert misses_at_capacity(hist, cap) == lru_misses(ids, cap)


def test_oracle_identity_on_generated_traces():
    for scan_trace in (
        make_trace(12, n_sm=2),
        make_trace(12, n_sm=2, causal=True),
        make_trace(30, n_sm=4, capacity_sectors=16),
    ):
        hist = stack_distances(scan_trace)
        ids = np.concatenate([i for i, _, _ in scan_trace.sector_stream()])
        for cap in (0, 1, 5, 16, 40, 200):
            assert misses_at_capacity(hist, cap) == lru_misses(ids, cap)


def test_capped_histogram_overflow():
    hist = stack_distances(two_pass(8, False), max_distance=4)
    assert hist.cap == 4
    assert hist.overflow == 8  # all reuses sit at distance 7
    assert misses_at_capacity(hist, 3) == 16
    with pytest.raises(ValueError, match="capped"):
        misses_at_capacity(hist, 10)


def test_empty_trace():
    hist = stack_distances(np.empty(0, dtype=np.int64))
    assert hist.total == 0
    assert misses_at_capacity(hist, 0) == 0
    assert misses_at_capacity(hist, 100) == 0


def test_exports(tmp_path):
    hist = stack_distances(two_pass(4, True))
    hist.to_csv(tmp_path / "h.csv")
    hist.to_json(tmp_path / "h.json")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "distance,count"
    assert lines[-1] == "inf,4"
    import json

    doc = json.loads((tmp_path / "h.json").read_text())
    assert doc["infinite"] == 4
    assert doc["total"] == 8
