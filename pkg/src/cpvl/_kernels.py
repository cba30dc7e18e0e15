"""numba-compiled event loops.

All kernels draw randomness from an in-place xoshiro256++ state (uint64[4])
and index precomputed rate tables by the current load; when a load is about
to outgrow its table the kernel suspends with STATUS_OVERFLOW and the Python
wrapper re-enters with extended tables (the walk is Markov, so resuming is
exact).
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_HORIZON = 0
STATUS_EXTINCT = 1
STATUS_OVERFLOW = 2
STATUS_BOUNDARY = 3
STATUS_THRESHOLD = 4
STATUS_PENDING = 5

_INV53 = 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _next_u64(s):
    x = s[0] + s[3]
    result = ((x << np.uint64(23)) | (x >> np.uint64(41))) + s[0]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << np.uint64(45)) | (s[3] >> np.uint64(19))
    return result


@njit(cache=True, inline="always")
def _rand_u01(s):
    # in [0, 1); 53 mantissa bits
    return np.float64(_next_u64(s) >> np.uint64(11)) * _INV53


@njit(cache=True)
def bd_batch(states, times, status, rngs, b_tab, d_tab, horizon):
    """Run every PENDING path to absorption, censoring, or table overflow."""
    n_paths = states.shape[0]
    table_len = b_tab.shape[0]
    for i in range(n_paths):
        if status[i] != STATUS_PENDING:
            continue
        n = states[i]
        t = times[i]
        s = rngs[i]
        while True:
            if n == 0:
                status[i] = STATUS_EXTINCT
                break
            if t >= horizon:
                status[i] = STATUS_HORIZON
                t = horizon
                break
            if n + 2 >= table_len:
                status[i] = STATUS_OVERFLOW
                break
            bn = b_tab[n]
            dn = d_tab[n]
            tot = bn + dn
            if tot <= 0.0:
                # capped standstill state; nothing more can happen
                status[i] = STATUS_HORIZON
                t = horizon
                break
            t += -np.log(1.0 - _rand_u01(s)) / tot
            if t > horizon:
                status[i] = STATUS_HORIZON
                t = horizon
                break
            if _rand_u01(s) * tot < bn:
                n += 1
            else:
                n -= 1
        states[i] = n
        times[i] = t


@njit(cache=True)
def cpvl_run(loads, indptr, indices, b_tab, d_tab, lam_tab,
             t_start, horizon, rng, stop_mask, stop_threshold,
             snap_times, snap_out, snap_start, event_start):
    """One CPVL trajectory.

    Composite per-vertex rate r[x] = b(n) + d(n) + deg(x) * Lambda(n) 1{n>0};
    the infection part is booked at the *source*, so one event touches at
    most two vertices' rates.  Total rate is maintained incrementally and
    recomputed every 4096 events to bound float drift.
    """
    n_vertices = loads.shape[0]
    table_len = b_tab.shape[0]
    r = np.zeros(n_vertices)
    total_load = 0
    infected = 0
    for x in range(n_vertices):
        n = loads[x]
        deg = indptr[x + 1] - indptr[x]
        rx = b_tab[n] + d_tab[n]
        if n > 0:
            rx += lam_tab[n] * deg
            infected += 1
        r[x] = rx
        total_load += n
    total_rate = r.sum()

    t = t_start
    events = event_start
    snap_i = snap_start
    ext_time = -1.0
    status = STATUS_HORIZON
    since_recount = 0

    if infected >= stop_threshold:
        status = STATUS_THRESHOLD
    else:
        hit = False
        for x in range(n_vertices):
            if stop_mask[x] != 0 and loads[x] > 0:
                hit = True
        if hit:
            status = STATUS_BOUNDARY
        else:
            while True:
                if total_load == 0:
                    ext_time = t
                    status = STATUS_EXTINCT
                    break
                if total_rate <= 1e-300:
                    t = horizon
                    status = STATUS_HORIZON
                    break
                dt = -np.log(1.0 - _rand_u01(rng)) / total_rate
                t_next = t + dt
                if t_next > horizon:
                    t = horizon
                    status = STATUS_HORIZON
                    break
                while snap_i < snap_times.shape[0] and snap_times[snap_i] < t_next:
                    for x in range(n_vertices):
                        snap_out[snap_i, x] = loads[x]
                    snap_i += 1
                t = t_next
                events += 1

                w = _rand_u01(rng) * total_rate
                acc = 0.0
                x = -1
                for v in range(n_vertices):
                    acc += r[v]
                    if w < acc:
                        x = v
                        break
                if x < 0:
                    # float round-off ran past the end: take the last active vertex
                    for v in range(n_vertices - 1, -1, -1):
                        if r[v] > 0.0:
                            x = v
                            break

                n = loads[x]
                deg = indptr[x + 1] - indptr[x]
                w2 = _rand_u01(rng) * r[x]
                if w2 < b_tab[n]:
                    loads[x] = n + 1
                    total_load += 1
                    if n + 3 >= table_len:
                        status = STATUS_OVERFLOW
                        break
                    r_new = b_tab[n + 1] + d_tab[n + 1] + lam_tab[n + 1] * deg
                    total_rate += r_new - r[x]
                    r[x] = r_new
                elif w2 < b_tab[n] + d_tab[n]:
                    loads[x] = n - 1
                    total_load -= 1
                    if n == 1:
                        infected -= 1
                        r_new = 0.0
                    else:
                        r_new = b_tab[n - 1] + d_tab[n - 1] + lam_tab[n - 1] * deg
                    total_rate += r_new - r[x]
                    r[x] = r_new
                    if total_load == 0:
                        ext_time = t
                        status = STATUS_EXTINCT
                        break
                else:
                    k = np.int64(_rand_u01(rng) * deg)
                    if k >= deg:
                        k = deg - 1
                    z = indices[indptr[x] + k]
                    if loads[z] == 0:
                        loads[z] = 1
                        infected += 1
                        total_load += 1
                        deg_z = indptr[z + 1] - indptr[z]
                        r_new = b_tab[1] + d_tab[1] + lam_tab[1] * deg_z
                        total_rate += r_new - r[z]
                        r[z] = r_new
                        if stop_mask[z] != 0:
                            status = STATUS_BOUNDARY
                            break
                        if infected >= stop_threshold:
                            status = STATUS_THRESHOLD
                            break

                since_recount += 1
                if since_recount >= 4096:
                    since_recount = 0
                    total_rate = 0.0
                    for v in range(n_vertices):
                        total_rate += r[v]

    if status == STATUS_HORIZON or status == STATUS_EXTINCT:
        # state is frozen (or constant-zero) from t to the horizon
        while snap_i < snap_times.shape[0] and snap_times[snap_i] <= horizon:
            for x in range(n_vertices):
                snap_out[snap_i, x] = loads[x]
            snap_i += 1

    return status, t, events, ext_time, snap_i, infected, total_load


@njit(cache=True)
def cpli_run(dorm, indptr, indices, b_tab, d_tab, lam,
             t_start, horizon, rng, snap_times, snap_out, snap_start, event_start):
    """One CPLI trajectory.

    Per-vertex rate r[x] = d(m+1) + b(m) + deg(x) * lam * 1{m == 0} where m
    is x's dormancy; reset events are booked at the active source.
    """
    n_vertices = dorm.shape[0]
    table_len = b_tab.shape[0]
    r = np.zeros(n_vertices)
    active = 0
    for x in range(n_vertices):
        m = dorm[x]
        deg = indptr[x + 1] - indptr[x]
        rx = d_tab[m + 1] + b_tab[m]
        if m == 0:
            rx += lam * deg
            active += 1
        r[x] = rx
    total_rate = r.sum()

    t = t_start
    events = event_start
    snap_i = snap_start
    status = STATUS_HORIZON
    since_recount = 0

    while True:
        if total_rate <= 1e-300:
            t = horizon
            status = STATUS_HORIZON
            break
        dt = -np.log(1.0 - _rand_u01(rng)) / total_rate
        t_next = t + dt
        if t_next > horizon:
            t = horizon
            status = STATUS_HORIZON
            break
        while snap_i < snap_times.shape[0] and snap_times[snap_i] < t_next:
            for x in range(n_vertices):
                snap_out[snap_i, x] = dorm[x]
            snap_i += 1
        t = t_next
        events += 1

        w = _rand_u01(rng) * total_rate
        acc = 0.0
        x = -1
        for v in range(n_vertices):
            acc += r[v]
            if w < acc:
                x = v
                break
        if x < 0:
            for v in range(n_vertices - 1, -1, -1):
                if r[v] > 0.0:
                    x = v
                    break

        m = dorm[x]
        deg = indptr[x + 1] - indptr[x]
        w2 = _rand_u01(rng) * r[x]
        if w2 < d_tab[m + 1]:
            dorm[x] = m + 1
            if m + 3 >= table_len:
                status = STATUS_OVERFLOW
                break
            if m == 0:
                active -= 1
            r_new = d_tab[m + 2] + b_tab[m + 1]
            total_rate += r_new - r[x]
            r[x] = r_new
        elif w2 < d_tab[m + 1] + b_tab[m]:
            dorm[x] = m - 1
            r_new = d_tab[m] + b_tab[m - 1]
            if m - 1 == 0:
                active += 1
                r_new += lam * deg
            total_rate += r_new - r[x]
            r[x] = r_new
        else:
            k = np.int64(_rand_u01(rng) * deg)
            if k >= deg:
                k = deg - 1
            z = indices[indptr[x] + k]
            mz = dorm[z]
            if mz > 0:
                dorm[z] = 0
                active += 1
                deg_z = indptr[z + 1] - indptr[z]
                r_new = d_tab[1] + lam * deg_z
                total_rate += r_new - r[z]
                r[z] = r_new

        since_recount += 1
        if since_recount >= 4096:
            since_recount = 0
            total_rate = 0.0
            for v in range(n_vertices):
                total_rate += r[v]

    if status == STATUS_HORIZON:
        while snap_i < snap_times.shape[0] and snap_times[snap_i] <= horizon:
            for x in range(n_vertices):
                snap_out[snap_i, x] = dorm[x]
            snap_i += 1

    return status, t, events, snap_i, active
