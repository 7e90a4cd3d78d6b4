"""Compiled kernels for frame decoding and success-table estimation.

The trial loops are allocation-free; everything else in the package is plain
numpy. Random streams for table estimation come from a splitmix64 mix of
(master_seed, tau, trial), so no draw depends on execution order and results
are bit-identical under any worker schedule.
"""

import numpy as np
from numba import njit

_U64 = np.uint64
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    # splitmix64 finalizer
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> _U64(30))) * _MIX1) & _MASK
    z = ((z ^ (z >> _U64(27))) * _MIX2) & _MASK
    return z ^ (z >> _U64(31))


@njit(cache=True, nogil=True)
def _peel(slots, occ, decoded, newly, tau, d, max_iterations):
    """Parallel peeling on slot occupancy counts.

    Each iteration marks every undecoded user owning a burst that is alone in
    its slot, then removes all replicas of the users marked in that pass.
    Returns (decoded_count, productive_iterations).
    """
    ndec = 0
    iters = 0
    for _ in range(max_iterations):
        n_new = 0
        for u in range(tau):
            if not decoded[u]:
                for j in range(d):
                    if occ[slots[u, j]] == 1:
                        decoded[u] = True
                        newly[n_new] = u
                        n_new += 1
                        break
        if n_new == 0:
            break
        for i in range(n_new):
            u = newly[i]
            for j in range(d):
                occ[slots[u, j]] -= 1
        ndec += n_new
        iters += 1
        if ndec == tau:
            break
    return ndec, iters


@njit(cache=True, nogil=True)
def decode_frame(slots, num_slots, max_iterations, decoded):
    """Decode one frame given an explicit (tau, d) placement matrix.

    `decoded` is a caller-supplied bool buffer of length tau, filled with the
    per-user outcome. Returns (decoded_count, iterations_used).
    """
    tau, d = slots.shape
    occ = np.zeros(num_slots, np.int32)
    for u in range(tau):
        for j in range(d):
            occ[slots[u, j]] += 1
        decoded[u] = False
    newly = np.empty(max(tau, 1), np.int64)
    return _peel(slots, occ, decoded, newly, tau, d, max_iterations)


@njit(cache=True, nogil=True)
def decoded_count_hist(tau, d, num_slots, max_iterations, trials, master_seed, hist):
    """Accumulate the decoded-count histogram of `trials` independent frames.

    Each user draws d distinct slots uniformly (rejection sampling on the
    per-trial splitmix64 stream); the frame is then peeled. hist[v] counts
    trials with exactly v decoded users.
    """
    slots = np.empty((max(tau, 1), d), np.int64)
    occ = np.zeros(num_slots, np.int32)
    decoded = np.empty(max(tau, 1), np.bool_)
    newly = np.empty(max(tau, 1), np.int64)
    chosen = np.empty(d, np.int64)
    for trial in range(trials):
        h = _mix64(_U64(master_seed))
        h = _mix64(h ^ _U64(tau))
        state = _mix64(h ^ _U64(trial))
        for s in range(num_slots):
            occ[s] = 0
        for u in range(tau):
            k = 0
            while k < d:
                state = (state + _GOLDEN) & _MASK
                cand = np.int64(_mix64(state) % _U64(num_slots))
                dup = False
                for j in range(k):
                    if chosen[j] == cand:
                        dup = True
                        break
                if not dup:
                    chosen[k] = cand
                    k += 1
            for j in range(d):
                slots[u, j] = chosen[j]
                occ[chosen[j]] += 1
            decoded[u] = False
        ndec, _ = _peel(slots, occ, decoded, newly, tau, d, max_iterations)
        hist[ndec] += 1
