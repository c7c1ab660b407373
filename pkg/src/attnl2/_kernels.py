"""Numba kernels for the hot loops: LRU simulation and stack distances.

All kernels operate on dense integer id spaces so state lives in flat arrays
(no hashing). Linked lists use two sentinel slots appended after the id range:
HEAD = n, TAIL = n + 1, with the MRU element at nxt[HEAD].

Counter layout everywhere: int64[4, 3] indexed by tensor code, with columns
(accesses, hits, compulsory_misses); weighted by sector count in block mode.
"""

import numpy as np
from numba import njit


def lru_state(n_ids: int):
    """Fresh linked-list state for a dense id space of size n_ids."""
    prev = np.zeros(n_ids + 2, dtype=np.int64)
    nxt = np.zeros(n_ids + 2, dtype=np.int64)
    head, tail = n_ids, n_ids + 1
    nxt[head] = tail
    prev[tail] = head
    return prev, nxt, np.zeros(n_ids, dtype=np.bool_), np.zeros(n_ids, dtype=np.bool_)


@njit(cache=True)
def lru_weighted(
    ids,
    tensors,
    waves,
    weights,
    cap,
    prev,
    nxt,
    incache,
    seen,
    resident_weight,
    counters,
    state,
    wave_acc,
    wave_hits,
    track_waves,
):
    """Fully-associative LRU; weight 1 per id gives exact per-sector behavior."""
    n = prev.shape[0] - 2
    head = n
    tail = n + 1
    size = state[0]
    for i in range(ids.shape[0]):
        x = ids[i]
        t = tensors[i]
        w = weights[i]
        counters[t, 0] += w
        if track_waves:
            wave_acc[waves[i]] += w
        if incache[x]:
            counters[t, 1] += w
            if track_waves:
                wave_hits[waves[i]] += w
            p = prev[x]
            q = nxt[x]
            nxt[p] = q
            prev[q] = p
            f = nxt[head]
            nxt[head] = x
            prev[x] = head
            nxt[x] = f
            prev[f] = x
        else:
            if not seen[x]:
                counters[t, 2] += w
                seen[x] = True
            if cap > 0:
                f = nxt[head]
                nxt[head] = x
                prev[x] = head
                nxt[x] = f
                prev[f] = x
                incache[x] = True
                resident_weight[x] = w
                size += w
                while size > cap:
                    v = prev[tail]
                    p = prev[v]
                    nxt[p] = tail
                    prev[tail] = p
                    incache[v] = False
                    size -= resident_weight[v]
    state[0] = size


@njit(cache=True)
def lru_setassoc(ids, tensors, n_sets, ways, tags, stamp, seen, counters, tick_state):
    """Per-set LRU, set = sector_id mod n_sets; tags of -1 mark empty ways."""
    tick = tick_state[0]
    for i in range(ids.shape[0]):
        x = ids[i]
        t = tensors[i]
        counters[t, 0] += 1
        if not seen[x]:
            counters[t, 2] += 1
            seen[x] = True
        base = (x % n_sets) * ways
        tick += 1
        hit = False
        victim = base
        oldest = stamp[base]
        for s in range(base, base + ways):
            if tags[s] == x:
                stamp[s] = tick
                counters[t, 1] += 1
                hit = True
                break
            if tags[s] == -1:
                victim = s
                oldest = -1
            elif oldest >= 0 and stamp[s] < oldest:
                victim = s
                oldest = stamp[s]
        if not hit:
            tags[victim] = x
            stamp[victim] = tick
    tick_state[0] = tick


@njit(cache=True)
def stack_distance_pass(ids, last_pos, bit, pos_state, out):
    """LRU stack distances via a Fenwick tree over access positions.

    A position is marked while it is some id's latest access; the distance of
    a reuse is the number of marks strictly between the two accesses, i.e. the
    count of distinct ids touched in between. First touches yield -1.
    """
    n = bit.shape[0] - 1
    p0 = pos_state[0]
    for i in range(ids.shape[0]):
        x = ids[i]
        t = p0 + i + 1
        p = last_pos[x]
        if p == 0:
            out[i] = -1
        else:
            d = 0
            j = t - 1
            while j > 0:
                d += bit[j]
                j -= j & (-j)
            j = p
            while j > 0:
                d -= bit[j]
                j -= j & (-j)
            out[i] = d
            j = p
            while j <= n:
                bit[j] -= 1
                j += j & (-j)
        j = t
        while j <= n:
            bit[j] += 1
            j += j & (-j)
        last_pos[x] = t
    pos_state[0] = p0 + ids.shape[0]
