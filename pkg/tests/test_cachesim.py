import numpy as np
import pytest

from attnl2 import (
    AttentionConfig,
    CacheModel,
    Fidelity,
    FidelityError,
    Scan,
    Schedule,
    SchedulePolicy,
    classify,
    dump_trace,
    gen_trace,
    lru_misses,
    read_dump,
    simulate,
)

from helpers import (
    collect_ids,
    make_trace,
    reference_lru,
    reference_set_assoc,
    tiny_cache,
)


def test_everything_fits_only_cold_misses():
    trace = make_trace(32, capacity_sectors=1 << 12, n_sm=4)
    stats = simulate(trace)
    assert stats.total.non_compulsory_misses == 0
    assert stats.total.misses == stats.total.compulsory_misses == 4 * 32
    assert stats.total.accesses == trace.totals().total


def test_zero_capacity_never_hits():
    trace = make_trace(16, capacity_sectors=0)
    stats = simulate(trace)
    assert stats.total.hits == 0
    assert stats.total.misses == stats.total.accesses


def test_wavefront_leader_misses_followers_hit():
    # 8 lockstep CTAs over 64 single-sector tiles; KV (128 sectors) is twice
    # the 64-sector capacity, so each round's leading CTA misses the whole KV
    # stream while the other seven reuse it: KV hit rate exactly 7/8.
    trace = make_trace(64, capacity_sectors=64, n_sm=8)
    stats = simulate(trace)
    assert stats.kv.accesses == 8 * 8 * 128
    assert stats.kv.hits * 8 == stats.kv.accesses * 7
    assert stats.per_tensor["K"].misses == 8 * 64
    assert stats.per_tensor["K"].compulsory_misses == 64
    # Q and O are touched once each: all compulsory, no reuse possible
    assert stats.per_tensor["Q"].hits == 0
    assert stats.per_tensor["O"].hits == 0


def test_single_cta_has_no_wavefront_reuse():
    # KV footprint twice the capacity, one CTA: every KV reuse distance spans
    # the whole stream, so there are no KV hits at all.
    trace = make_trace(128, capacity_sectors=128, n_sm=1)
    stats = simulate(trace)
    assert stats.kv.hits == 0
    assert stats.kv.compulsory_misses == 2 * 128


def test_counts_are_conserved():
    trace = make_trace(40, capacity_sectors=32, n_sm=4, causal=True)
    stats = simulate(trace)
    total = stats.total
    assert total.hits + total.misses == total.accesses
    assert total.compulsory_misses + total.non_compulsory_misses == total.misses
    summed = sum(stats.per_tensor[n].accesses for n in "QKVO")
    assert summed == total.accesses == trace.totals().total
    assert total.compulsory_misses == trace.totals().distinct_sectors


@pytest.mark.parametrize("scan", list(Scan))
@pytest.mark.parametrize("kind", [Schedule.PERSISTENT, Schedule.NONPERSISTENT])
def test_fidelity_equivalence(scan, kind):
    # trailing tile included: 1000 = 12*80 + 40 rows
    cfg = AttentionConfig(seq_len=1000)
    cache = CacheModel(capacity_bytes=1200 * 32, sector_bytes=32, n_sm=4)
    trace = gen_trace(cfg, cache, SchedulePolicy(kind), scan)
    sector = simulate(trace, fidelity=Fidelity.SECTOR)
    block = simulate(trace, fidelity=Fidelity.TILEBLOCK)
    assert {k: v.as_dict() for k, v in sector.per_tensor.items()} == {
        k: v.as_dict() for k, v in block.per_tensor.items()
    }


def test_tileblock_rejects_misaligned_tiles():
    cfg = AttentionConfig(seq_len=7, head_dim=5, tile=3, elem_bytes=1)
    cache = CacheModel(capacity_bytes=64, sector_bytes=8, n_sm=2)
    trace = gen_trace(cfg, cache, SchedulePolicy(), Scan.CYCLIC)
    with pytest.raises(FidelityError, match="sector-aligned"):
        simulate(trace, fidelity=Fidelity.TILEBLOCK)


def test_tileblock_rejects_set_associative():
    trace = make_trace(8)
    with pytest.raises(FidelityError, match="fully-associative"):
        simulate(trace, cache=tiny_cache(16, ways=4), fidelity=Fidelity.TILEBLOCK)


def test_full_assoc_matches_reference_lru():
    rng = np.random.default_rng(5)
    trace = make_trace(37, n_sm=3, scan=Scan.SAWTOOTH)
    ids, _ = collect_ids(trace)
    for cap in (0, 1, 7, 33, 100, 4096):
        hits, misses, compulsory = reference_lru(ids, cap)
        stats = simulate(trace, cache=tiny_cache(cap, n_sm=3))
        assert (stats.total.hits, stats.total.misses) == (hits, misses)
        assert stats.total.compulsory_misses == compulsory
        assert lru_misses(ids, cap) == misses
    for _ in range(10):
        raw = rng.integers(0, 40, int(rng.integers(1, 400))).astype(np.int64)
        cap = int(rng.integers(0, 50))
        assert lru_misses(raw, cap) == reference_lru(raw, cap)[1]


def test_set_associative_matches_reference():
    for ways in (1, 2, 4):
        cache = tiny_cache(16 * ways, ways=ways)  # 16 sets
        trace = make_trace(50, n_sm=4)
        ids, _ = collect_ids(trace)
        hits, misses = reference_set_assoc(ids, cache.num_sets, ways)
        stats = simulate(trace, cache=cache)
        assert (stats.total.hits, stats.total.misses) == (hits, misses)


def test_set_associative_kernel_on_random_streams():
    from attnl2 import _kernels

    rng = np.random.default_rng(9)
    for _ in range(10):
        ways = int(rng.choice([1, 2, 4, 8]))
        n_sets = int(rng.choice([4, 8, 16]))
        raw = rng.integers(0, 64, 300).astype(np.int64)
        tags = np.full(n_sets * ways, -1, dtype=np.int64)
        stamp = np.zeros(n_sets * ways, dtype=np.int64)
        seen = np.zeros(64, dtype=np.bool_)
        counters = np.zeros((4, 3), dtype=np.int64)
        _kernels.lru_setassoc(
            raw, np.zeros(300, dtype=np.uint8), n_sets, ways, tags, stamp, seen,
            counters, np.zeros(1, dtype=np.int64),
        )
        hits, misses = reference_set_assoc(raw, n_sets, ways)
        assert int(counters[0, 1]) == hits
        assert int(counters[0, 0] - counters[0, 1]) == misses


def test_lru_inclusion_misses_monotone_in_capacity():
    rng = np.random.default_rng(13)
    for _ in range(10):
        ids = rng.integers(0, 64, 1000).astype(np.int64)
        misses = [lru_misses(ids, c) for c in range(0, 70, 3)]
        assert all(a >= b for a, b in zip(misses, misses[1:]))


def test_replayed_dump_matches_direct_simulation(tmp_path):
    trace = make_trace(21, capacity_sectors=20, n_sm=3, scan=Scan.SAWTOOTH)
    direct = simulate(trace)
    dump = read_dump(dump_trace(trace, tmp_path / "t.bin"))
    replay = simulate(dump, cache=trace.cache)
    assert direct.total.as_dict() == replay.total.as_dict()
    with pytest.raises(FidelityError):
        simulate(dump, cache=trace.cache, fidelity=Fidelity.TILEBLOCK)


def test_wave_series_sums_to_totals():
    trace = make_trace(24, capacity_sectors=16, n_sm=4)
    stats = simulate(trace, track_waves=True)
    assert stats.waves is not None
    assert int(stats.waves.accesses.sum()) == stats.total.accesses
    assert int(stats.waves.hits.sum()) == stats.total.hits
    assert len(stats.waves.accesses) == trace.total_waves


def test_sector_size_mismatch_rejected():
    trace = make_trace(8)
    with pytest.raises(ValueError, match="sector"):
        simulate(trace, cache=CacheModel(sector_bytes=64))


def test_fuzz_engine_consistency():
    # random shapes x schedules x scans: enumeration, closed form and the
    # simulator must agree on totals and on the compulsory floor
    rng = np.random.default_rng(2718)
    for _ in range(20):
        cfg = AttentionConfig(
            seq_len=int(rng.integers(1, 40)) * int(rng.integers(1, 5)),
            head_dim=int(rng.choice([3, 8, 16])),
            tile=int(rng.integers(1, 6)),
            elem_bytes=int(rng.choice([1, 2, 4])),
            batch=int(rng.integers(1, 3)),
            heads=int(rng.integers(1, 3)),
            causal=bool(rng.integers(0, 2)),
        )
        if cfg.seq_len < cfg.tile:
            continue
        cache = CacheModel(
            capacity_bytes=int(rng.integers(0, 64)) * 32,
            sector_bytes=32,
            n_sm=int(rng.integers(1, 6)),
        )
        kind = list(Schedule)[rng.integers(0, len(Schedule))]
        scan = list(Scan)[rng.integers(0, len(Scan))]
        trace = gen_trace(cfg, cache, SchedulePolicy(kind), scan)
        stats = simulate(trace)
        totals = trace.totals()
        assert stats.total.accesses == totals.total
        assert stats.total.compulsory_misses == totals.distinct_sectors
        ids, tensors = collect_ids(trace)
        assert len(ids) == totals.total
        assert int((tensors == 1).sum()) == totals.k


# -- classification -------------------------------------------------------------------


def _scan_pair(seq_len, capacity_sectors, n_sm=8, **kw):
    out = []
    for scan in (Scan.CYCLIC, Scan.SAWTOOTH):
        trace = make_trace(seq_len, capacity_sectors=capacity_sectors, n_sm=n_sm,
                           scan=scan, **kw)
        out.append(simulate(trace))
    return out


def test_classify_identical_runs():
    a, b = _scan_pair(16, 1 << 12)
    rep = classify(a, a)
    assert rep.non_compulsory_reduction is None
    assert rep.note == "no non-compulsory misses to reduce"
    assert rep.baseline_misses == rep.variant_misses


def test_classify_sawtooth_halves_noncompulsory_at_double_capacity():
    # KV footprint (512 sectors) = 2x the 256-sector capacity
    a, b = _scan_pair(256, 256)
    rep = classify(a, b)
    assert rep.baseline_non_compulsory > 0
    assert 0.45 <= rep.non_compulsory_reduction <= 0.55
    assert rep.variant_misses < rep.baseline_misses


def test_classify_below_threshold_reports_no_noncompulsory():
    a, b = _scan_pair(64, 1 << 12)
    rep = classify(a, b)
    assert rep.baseline_non_compulsory == rep.variant_non_compulsory == 0
    assert rep.non_compulsory_reduction is None
    assert "no non-compulsory" in rep.note


def test_classify_rejects_mismatched_workloads():
    a = simulate(make_trace(16, capacity_sectors=64))
    b = simulate(make_trace(24, capacity_sectors=64))
    with pytest.raises(ValueError, match="not comparable"):
        classify(a, b)
    c = simulate(make_trace(16, capacity_sectors=32))
    with pytest.raises(ValueError, match="cache geometry"):
        classify(a, c)
