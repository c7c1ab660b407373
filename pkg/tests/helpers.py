"""Shared test utilities: tiny workload builders and reference cache models."""

from collections import OrderedDict

import numpy as np

from attnl2 import AttentionConfig, CacheModel, Scan, Schedule, SchedulePolicy, gen_trace


def tiny_config(seq_len, **kw):
    """Workload whose tiles are exactly one 32 B sector (tile=1, head_dim=16, fp16)."""
    kw.setdefault("head_dim", 16)
    kw.setdefault("tile", 1)
    kw.setdefault("elem_bytes", 2)
    return AttentionConfig(seq_len=seq_len, **kw)


def tiny_cache(capacity_sectors, n_sm=2, ways=None):
    return CacheModel(capacity_bytes=capacity_sectors * 32, sector_bytes=32, ways=ways, n_sm=n_sm)


def make_trace(seq_len, capacity_sectors=1 << 20, n_sm=2, schedule=Schedule.PERSISTENT,
               scan=Scan.CYCLIC, **cfg_kw):
    cfg = tiny_config(seq_len, **cfg_kw)
    cache = tiny_cache(capacity_sectors, n_sm=n_sm)
    return gen_trace(cfg, cache, SchedulePolicy(schedule), scan)


def collect_ids(trace):
    """All sector ids of a trace in order, with tensor codes."""
    ids, tensors = [], []
    for i, t, _w in trace.sector_stream():
        ids.append(i)
        tensors.append(t)
    if not ids:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint8)
    return np.concatenate(ids), np.concatenate(tensors)


def reference_lru(ids, capacity):
    """OrderedDict-based fully-associative LRU; returns (hits, misses, compulsory)."""
    cache = OrderedDict()
    seen = set()
    hits = misses = compulsory = 0
    for x in ids:
        x = int(x)
        if x in cache:
            hits += 1
            cache.move_to_end(x)
        else:
            misses += 1
            if x not in seen:
                compulsory += 1
                seen.add(x)
            if capacity > 0:
                cache[x] = True
                if len(cache) > capacity:
                    cache.popitem(last=False)
    return hits, misses, compulsory


def reference_set_assoc(ids, n_sets, ways):
    """Per-set LRU reference; returns (hits, misses)."""
    sets = [OrderedDict() for _ in range(n_sets)]
    hits = misses = 0
    for x in ids:
        x = int(x)
        s = sets[x % n_sets]
        if x in s:
            hits += 1
            s.move_to_end(x)
        else:
            misses += 1
            s[x] = True
            if len(s) > ways:
                s.popitem(last=False)
    return hits, misses
