"""Numba backend for the hot kernels.

Twin of _numpy_impl; formulas and per-element op order must match it
exactly (no fastmath anywhere). The evolve/heat-kernel entry points
additionally take an active-prefix (order, active_counts) pair so the
inner loops only touch vertices a walk can have reached; skipped entries
are provably log-zero, so results are identical to the full sweep.

This module is only imported when numba is available and enabled.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64_1 = np.uint64(1)
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)

FAM_GAUSSIAN = 0
FAM_RADEMACHER = 1
FAM_DISCRETE = 2

_U53_SCALE = 2.0 ** -53
_NEG_INF = -np.inf


@njit(cache=True)
def _mix64(z):
    z = z + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _hash3(seed, a, b, c):
    h = _mix64(seed)
    h = _mix64(h ^ a)
    h = _mix64(h ^ b)
    return _mix64(h ^ c)


@njit(cache=True)
def _u64_to_uniform(h):
    return (np.float64(h >> np.uint64(11)) + 0.5) * _U53_SCALE


@njit(cache=True)
def _ppnd16(u):
    q = u - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = u
    else:
        r = 1.0 - u
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
        z = num / den
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
        z = num / den
    if q < 0.0:
        return -z
    return z


@njit(cache=True)
def _omega_one(seed, replica, t, key, fam, values, cumprobs):
    h = _hash3(seed, replica, t, key)
    if fam == FAM_GAUSSIAN:
        return _ppnd16(_u64_to_uniform(h))
    if fam == FAM_RADEMACHER:
        if (h >> np.uint64(63)) == U64_1:
            return 1.0
        return -1.0
    u = _u64_to_uniform(h)
    j = 0
    while u >= cumprobs[j]:
        j += 1
    return values[j]


@njit(cache=True)
def omega_values(seed, replica, t_arr, key_arr, fam, values, cumprobs):
    n = t_arr.shape[0]
    out = np.empty(n, dtype=np.float64)
    s = np.uint64(seed)
    rep = np.uint64(replica)
    for i in range(n):
        out[i] = _omega_one(s, rep, t_arr[i], key_arr[i], fam, values, cumprobs)
    return out


@njit(cache=True)
def omega_block(seed, replicas, t, keys, fam, values, cumprobs):
    R = replicas.shape[0]
    V = keys.shape[0]
    out = np.empty((R, V), dtype=np.float64)
    s = np.uint64(seed)
    tt = np.uint64(t)
    for r in range(R):
        rep = replicas[r]
        for y in range(V):
            out[r, y] = _omega_one(s, rep, tt, keys[y], fam, values, cumprobs)
    return out


@njit(cache=True)
def counter_uniforms(seed, a, b, c):
    n = a.shape[0]
    out = np.empty(n, dtype=np.float64)
    s = np.uint64(seed)
    for i in range(n):
        out[i] = _u64_to_uniform(_hash3(s, a[i], b[i], c[i]))
    return out


@njit(cache=True)
def bfs_distances(indptr, indices, source, rmax):
    V = indptr.shape[0] - 1
    dist = np.full(V, -1, dtype=np.int64)
    queue = np.empty(V, dtype=np.int64)
    dist[source] = 0
    queue[0] = source
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        d = dist[v]
        if rmax >= 0 and d >= rmax:
            continue
        for k in range(indptr[v], indptr[v + 1]):
            w = indices[k]
            if dist[w] < 0:
                dist[w] = d + 1
                queue[tail] = w
                tail += 1
    return dist


@njit(cache=True)
def hk_iterate(indptr, indices, p_in, v0, nsteps, order, active_counts):
    V = indptr.shape[0] - 1
    cur = np.zeros(V, dtype=np.float64)
    nxt = np.zeros(V, dtype=np.float64)
    for i in range(V):
        cur[i] = v0[i]
    sums = np.empty(nsteps, dtype=np.float64)
    for k in range(nsteps):
        na = active_counts[k]
        total = 0.0
        for oi in range(na):
            y = order[oi]
            acc = 0.0
            for e in range(indptr[y], indptr[y + 1]):
                acc += cur[indices[e]] * p_in[e]
            nxt[y] = acc
            total += acc
        sums[k] = total
        cur, nxt = nxt, cur
        for oi in range(na):
            nxt[order[oi]] = 0.0
    return cur, sums


@njit(cache=True)
def hk_profile(indptr, indices, p_in, x, nmax, order, active_counts):
    V = indptr.shape[0] - 1
    cur = np.zeros(V, dtype=np.float64)
    nxt = np.zeros(V, dtype=np.float64)
    cur[x] = 1.0
    diag = np.empty(nmax + 2, dtype=np.float64)
    sumsq = np.empty(nmax + 2, dtype=np.float64)
    sums = np.empty(nmax + 2, dtype=np.float64)
    diag[0] = 1.0
    sumsq[0] = 1.0
    sums[0] = 1.0
    for i in range(1, nmax + 2):
        na = active_counts[i - 1]
        for oi in range(na):
            y = order[oi]
            acc = 0.0
            for e in range(indptr[y], indptr[y + 1]):
                acc += cur[indices[e]] * p_in[e]
            nxt[y] = acc
        cur, nxt = nxt, cur
        for oi in range(na):
            nxt[order[oi]] = 0.0
        diag[i] = cur[x]
        ss = 0.0
        tm = 0.0
        for oi in range(na):
            vv = cur[order[oi]]
            ss += vv * vv
            tm += vv
        sumsq[i] = ss
        sums[i] = tm
    return diag, sumsq, sums


@njit(cache=True)
def hk_masked_survival(indptr, indices, p_in, x, nsteps, mask):
    V = indptr.shape[0] - 1
    cur = np.zeros(V, dtype=np.float64)
    nxt = np.zeros(V, dtype=np.float64)
    cur[x] = 1.0
    masses = np.empty(nsteps + 1, dtype=np.float64)
    masses[0] = 1.0
    for k in range(1, nsteps + 1):
        total = 0.0
        for y in range(V):
            if mask[y] == 0:
                nxt[y] = 0.0
                continue
            acc = 0.0
            for e in range(indptr[y], indptr[y + 1]):
                acc += cur[indices[e]] * p_in[e]
            nxt[y] = acc
            total += acc
        masses[k] = total
        cur, nxt = nxt, cur
    return masses


@njit(cache=True)
def hk_masked_iterate(indptr, indices, p_in, v0, nsteps, mask):
    V = indptr.shape[0] - 1
    cur = v0.copy()
    nxt = np.zeros(V, dtype=np.float64)
    for _ in range(nsteps):
        for y in range(V):
            if mask[y] == 0:
                nxt[y] = 0.0
                continue
            acc = 0.0
            for e in range(indptr[y], indptr[y + 1]):
                acc += cur[indices[e]] * p_in[e]
            nxt[y] = acc
        cur, nxt = nxt, cur
    return cur


@njit(cache=True)
def hk_batch_penalized(indptr, indices, p_in, v0, nsteps, pen_mask,
                       pen_factor, order, active_counts):
    B, V = v0.shape
    cur = v0.copy()
    nxt = np.zeros((B, V), dtype=np.float64)
    for k in range(nsteps):
        na = active_counts[k]
        for b in range(B):
            for oi in range(na):
                y = order[oi]
                acc = 0.0
                for e in range(indptr[y], indptr[y + 1]):
                    acc += cur[b, indices[e]] * p_in[e]
                if pen_factor != 1.0 and pen_mask[y] == 1:
                    acc *= pen_factor
                nxt[b, y] = acc
        cur, nxt = nxt, cur
        for b in range(B):
            for oi in range(na):
                nxt[b, order[oi]] = 0.0
    return cur


@njit(cache=True)
def evolve(indptr, indices, logp_in, logw0, t0, nsteps, beta, lam, seed,
           replicas, keys, fam, values, cumprobs, order, active_counts,
           record_trace):
    R, V = logw0.shape
    cur = np.full((R, V), _NEG_INF, dtype=np.float64)
    nxt = np.full((R, V), _NEG_INF, dtype=np.float64)
    for r in range(R):
        for y in range(V):
            cur[r, y] = logw0[r, y]
    tcols = nsteps if record_trace else 0
    trace = np.empty((R, tcols), dtype=np.float64)
    s = np.uint64(seed)
    for k in range(nsteps):
        t = np.uint64(t0 + k + 1)
        na = active_counts[k]
        for r in range(R):
            rep = replicas[r]
            for oi in range(na):
                y = order[oi]
                m = _NEG_INF
                for e in range(indptr[y], indptr[y + 1]):
                    c = cur[r, indices[e]] + logp_in[e]
                    if c > m:
                        m = c
                if m == _NEG_INF:
                    agg = _NEG_INF
                else:
                    acc = 0.0
                    for e in range(indptr[y], indptr[y + 1]):
                        acc += np.exp(cur[r, indices[e]] + logp_in[e] - m)
                    agg = m + np.log(acc)
                om = _omega_one(s, rep, t, keys[y], fam, values, cumprobs)
                nxt[r, y] = beta * om - lam + agg
            if record_trace:
                m = _NEG_INF
                for oi in range(na):
                    v = nxt[r, order[oi]]
                    if v > m:
                        m = v
                if m == _NEG_INF:
                    trace[r, k] = _NEG_INF
                else:
                    acc = 0.0
                    for oi in range(na):
                        acc += np.exp(nxt[r, order[oi]] - m)
                    trace[r, k] = m + np.log(acc)
        cur, nxt = nxt, cur
    return cur, trace


@njit(cache=True)
def evolve_masked(indptr, indices, logp_in, logw0, t0, nsteps, beta, lam,
                  seed, replicas, keys, fam, values, cumprobs, mask):
    R, V = logw0.shape
    cur = logw0.copy()
    nxt = np.empty((R, V), dtype=np.float64)
    s = np.uint64(seed)
    for k in range(nsteps):
        t = np.uint64(t0 + k + 1)
        for r in range(R):
            rep = replicas[r]
            for y in range(V):
                if mask[y] == 0:
                    nxt[r, y] = _NEG_INF
                    continue
                m = _NEG_INF
                for e in range(indptr[y], indptr[y + 1]):
                    c = cur[r, indices[e]] + logp_in[e]
                    if c > m:
                        m = c
                if m == _NEG_INF:
                    nxt[r, y] = _NEG_INF
                    continue
                acc = 0.0
                for e in range(indptr[y], indptr[y + 1]):
                    acc += np.exp(cur[r, indices[e]] + logp_in[e] - m)
                om = _omega_one(s, rep, t, keys[y], fam, values, cumprobs)
                nxt[r, y] = beta * om - lam + (m + np.log(acc))
        cur, nxt = nxt, cur
    return cur


@njit(cache=True)
def pair_iterate(indptr, indices, p_in, f0, nsteps, diag_factor):
    V = f0.shape[0]
    f = f0.copy()
    tmp = np.empty((V, V), dtype=np.float64)
    out = np.empty((V, V), dtype=np.float64)
    for _ in range(nsteps):
        for y in range(V):
            for j in range(V):
                tmp[y, j] = 0.0
            for e in range(indptr[y], indptr[y + 1]):
                x = indices[e]
                w = p_in[e]
                for j in range(V):
                    tmp[y, j] += w * f[x, j]
        for y in range(V):
            for j in range(V):
                acc = 0.0
                for e in range(indptr[j], indptr[j + 1]):
                    acc += tmp[y, indices[e]] * p_in[e]
                out[y, j] = acc
        for y in range(V):
            out[y, y] *= diag_factor
        f, out = out, f
    return f


@njit(cache=True)
def perc_survival(seed, rho, horizon, nruns):
    out = np.empty(nruns, dtype=np.uint8)
    s = np.uint64(seed)
    reach = np.zeros(horizon + 2, dtype=np.uint8)
    new = np.zeros(horizon + 2, dtype=np.uint8)
    for run in range(nruns):
        rr = np.uint64(run)
        for j in range(horizon + 2):
            reach[j] = 0
        u = _u64_to_uniform(_hash3(s, rr, np.uint64(0), np.uint64(0)))
        if u < rho:
            reach[0] = 1
        for I in range(1, horizon + 1):
            for j in range(horizon + 2):
                new[j] = 0
            for J in range(I % 2, I + 1, 2):
                ok = False
                if J - 1 >= 0 and reach[J - 1] == 1:
                    ok = True
                if (not ok) and J + 1 <= I - 1 and reach[J + 1] == 1:
                    ok = True
                if ok:
                    u = _u64_to_uniform(_hash3(s, rr, np.uint64(I), np.uint64(J)))
                    if u < rho:
                        new[J] = 1
            for j in range(horizon + 2):
                reach[j] = new[j]
        alive = 0
        for j in range(horizon + 2):
            if reach[j] == 1:
                alive = 1
                break
        out[run] = alive
    return out
