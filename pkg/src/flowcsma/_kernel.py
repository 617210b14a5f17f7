"""Compiled jump-chain kernel for the flow-level Markov process.

The embedded chain is advanced one jump at a time; statistics are
accumulated per window (warm-up, batches, or doubling stability windows are
all expressed as windows by the callers). Random numbers come from
SplitMix64, a counter-based 64-bit generator (Steele, Lea & Flood 2014):
the state is a Weyl sequence advanced by a fixed odd constant and hashed by
two xor-shift multiplies, so a run is a pure function of the seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Factors above this size switch the flow-aware weight products to log-space.
_LOG_SPACE_THRESHOLD = 1e6

MODE_STANDARD = 0
MODE_FLOW_AWARE = 1
MODE_STANDARD_LIMIT = 2
MODE_FLOW_AWARE_LIMIT = 3

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def _splitmix64(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(inline="always")
def _uniform(state):
    """Open-interval (0,1) uniform; safe as a log argument."""
    state, z = _splitmix64(state)
    return state, (np.float64(z >> np.uint64(11)) + 0.5) * _U53


@njit(cache=True)
def _throughputs(
    x, alpha, rates, mode, sched_offsets, sched_links, sched_card, wbuf, phi
):
    """Per-link throughput vector for state x, written into phi."""
    nsched = sched_card.size
    nlinks = x.size
    for k in range(nlinks):
        phi[k] = 0.0

    if mode == MODE_STANDARD or mode == MODE_FLOW_AWARE:
        maxf = 0.0
        for k in range(nlinks):
            if x[k] > 0:
                f = alpha[k] if mode == MODE_STANDARD else alpha[k] * x[k]
                if f > maxf:
                    maxf = f
        if maxf <= _LOG_SPACE_THRESHOLD:
            total = 0.0
            for i in range(nsched):
                w = 1.0
                for j in range(sched_offsets[i], sched_offsets[i + 1]):
                    k = sched_links[j]
                    if x[k] <= 0:
                        w = 0.0
                        break
                    w *= alpha[k] if mode == MODE_STANDARD else alpha[k] * x[k]
                wbuf[i] = w
                total += w
            for i in range(nsched):
                if wbuf[i] > 0.0:
                    p = wbuf[i] / total
                    for j in range(sched_offsets[i], sched_offsets[i + 1]):
                        phi[sched_links[j]] += p
        else:
            maxlog = -np.inf
            for i in range(nsched):
                lw = 0.0
                for j in range(sched_offsets[i], sched_offsets[i + 1]):
                    k = sched_links[j]
                    if x[k] <= 0:
                        lw = -np.inf
                        break
                    lw += np.log(alpha[k] if mode == MODE_STANDARD else alpha[k] * x[k])
                wbuf[i] = lw
                if lw > maxlog:
                    maxlog = lw
            total = 0.0
            for i in range(nsched):
                if wbuf[i] > -np.inf:
                    wbuf[i] = np.exp(wbuf[i] - maxlog)
                    total += wbuf[i]
                else:
                    wbuf[i] = 0.0
            for i in range(nsched):
                if wbuf[i] > 0.0:
                    p = wbuf[i] / total
                    for j in range(sched_offsets[i], sched_offsets[i + 1]):
                        phi[sched_links[j]] += p
    else:
        # Zero-backoff limit: only maximum-cardinality schedules inside the
        # busy set survive; flow-aware weights them by the product of counts.
        best = -1
        for i in range(nsched):
            ok = True
            for j in range(sched_offsets[i], sched_offsets[i + 1]):
                if x[sched_links[j]] <= 0:
                    ok = False
                    break
            if ok and sched_card[i] > best:
                best = sched_card[i]
        total = 0.0
        for i in range(nsched):
            w = 0.0
            if sched_card[i] == best:
                ok = True
                prod = 1.0
                for j in range(sched_offsets[i], sched_offsets[i + 1]):
                    k = sched_links[j]
                    if x[k] <= 0:
                        ok = False
                        break
                    if mode == MODE_FLOW_AWARE_LIMIT:
                        prod *= x[k]
                if ok:
                    w = prod
            wbuf[i] = w
            total += w
        for i in range(nsched):
            if wbuf[i] > 0.0:
                p = wbuf[i] / total
                for j in range(sched_offsets[i], sched_offsets[i + 1]):
                    phi[sched_links[j]] += p

    for k in range(nlinks):
        phi[k] *= rates[k]


@njit(cache=True)
def run_jump_chain(
    seed,
    window_ends,
    lam,
    inv_sigma,
    rates,
    alpha,
    mode,
    sched_offsets,
    sched_links,
    sched_card,
    mask_table,
    use_table,
    cap,
    sample_holding,
    x0,
):
    """Simulate the embedded jump chain for window_ends[-1] jumps.

    Every visited state is weighted by its holding time: the expected value
    1/(total rate) by default, or a sampled exponential when sample_holding
    is set. Returns per-window accumulators:

    time_sum[w], x_time[w, k], abs_x_time[w], cap_time[w],
    arrivals[w, k], departures[w, k], empty_visits[w], and the final state.
    """
    nlinks = lam.size
    nwin = window_ends.size
    nsched = sched_card.size

    x = x0.copy()
    rate_buf = np.empty(2 * nlinks)
    phi = np.empty(nlinks)
    wbuf = np.empty(nsched)

    time_sum = np.zeros(nwin)
    x_time = np.zeros((nwin, nlinks))
    abs_x_time = np.zeros(nwin)
    cap_time = np.zeros(nwin)
    arrivals = np.zeros((nwin, nlinks), dtype=np.int64)
    departures = np.zeros((nwin, nlinks), dtype=np.int64)
    empty_visits = np.zeros(nwin, dtype=np.int64)

    state = np.uint64(seed)
    win = 0
    total_jumps = window_ends[-1]

    for jump in range(total_jumps):
        while jump >= window_ends[win]:
            win += 1

        if use_table:
            busy = 0
            for k in range(nlinks):
                if x[k] > 0:
                    busy |= 1 << k
            for k in range(nlinks):
                phi[k] = mask_table[busy, k]
        else:
            _throughputs(
                x, alpha, rates, mode, sched_offsets, sched_links, sched_card, wbuf, phi
            )

        total_rate = 0.0
        at_cap = False
        for k in range(nlinks):
            blocked = cap >= 0 and x[k] >= cap
            if blocked:
                at_cap = True
            r = 0.0 if blocked else lam[k]
            rate_buf[k] = r
            total_rate += r
        for k in range(nlinks):
            r = phi[k] * inv_sigma[k] if x[k] > 0 else 0.0
            rate_buf[nlinks + k] = r
            total_rate += r

        if sample_holding:
            state, u = _uniform(state)
            dt = -np.log(u) / total_rate
        else:
            dt = 1.0 / total_rate

        time_sum[win] += dt
        absx = 0.0
        for k in range(nlinks):
            x_time[win, k] += x[k] * dt
            absx += x[k]
        abs_x_time[win] += absx * dt
        if at_cap:
            cap_time[win] += dt

        state, u = _uniform(state)
        target = u * total_rate
        acc = 0.0
        chosen = -1
        for j in range(2 * nlinks):
            acc += rate_buf[j]
            if target < acc:
                chosen = j
                break
        if chosen < 0:  # fp slack: take the last positive-rate transition
            for j in range(2 * nlinks - 1, -1, -1):
                if rate_buf[j] > 0.0:
                    chosen = j
                    break

        if chosen < nlinks:
            x[chosen] += 1
            arrivals[win, chosen] += 1
        else:
            x[chosen - nlinks] -= 1
            departures[win, chosen - nlinks] += 1

        empty = True
        for k in range(nlinks):
            if x[k] != 0:
                empty = False
                break
        if empty:
            empty_visits[win] += 1

    return time_sum, x_time, abs_x_time, cap_time, arrivals, departures, empty_visits, x
