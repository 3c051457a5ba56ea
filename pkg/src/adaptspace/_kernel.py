"""Compiled Monte-Carlo kernel for the network quality model.

Each call reseeds numba's per-thread generator, so a result depends only on its inputs
and seed, whichever thread runs it.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _binomial(n, p):
    # inversion; fine for the small packet counts that occur here
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    flip = p > 0.5
    if flip:
        p = 1.0 - p
    q = 1.0 - p
    s = p / q
    a = (n + 1) * s
    r = q ** n
    u = np.random.random()
    x = 0
    while u > r and x < n:
        u -= r
        x += 1
        r *= a / x - s
    return n - x if flip else x


@numba.njit(cache=True, nogil=True)
def run(runs, order, n_links, targets, probs, loss, cost, capacity, load, seed):
    np.random.seed(seed)
    n_motes = load.shape[0]
    generated = 0
    for i in range(n_motes):
        generated += load[i]
    pl = np.zeros(runs)
    la = np.zeros(runs)
    ec = np.zeros(runs)
    delayed = np.zeros((runs, n_motes), dtype=np.int64)
    inflow = np.zeros(n_motes, dtype=np.int64)
    for r in range(runs):
        for i in range(n_motes):
            inflow[i] = load[i]
        arrived_gw = 0
        energy = 0.0
        late = 0
        for j in range(n_motes):
            m = order[j]
            n = inflow[m]
            if n > capacity[m]:
                delayed[r, m] = n - capacity[m]
                late += n - capacity[m]
            remaining = n
            share = 1.0
            for k in range(n_links[m]):
                if k == n_links[m] - 1:
                    through = remaining
                elif share > 0.0:
                    through = _binomial(remaining, probs[m, k] / share)
                else:
                    through = 0
                remaining -= through
                share -= probs[m, k]
                if through == 0:
                    continue
                arrived = through - _binomial(through, loss[m, k])
                energy += through * cost[m, k]
                t = targets[m, k]
                if t < 0:
                    arrived_gw += arrived
                else:
                    inflow[t] += arrived
        if generated > 0:
            pl[r] = 1.0 - arrived_gw / generated
            la[r] = min(1.0, late / generated)
        ec[r] = energy
    return pl, la, ec, delayed
