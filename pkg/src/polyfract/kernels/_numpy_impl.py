"""Pure-numpy backend for the hot kernels.

Each function here has a numba twin in _numba_impl. Per-row reductions
run over a column-padded copy of the CSR so terms accumulate in edge
order, exactly like the scalar loops; integer hashing and the linear
probability-domain kernels are then bit-identical across backends.

Log-domain results agree only to ~1 ulp per exp/log call: numpy's SIMD
exp and log round differently from libm on a small fraction of inputs,
so cross-backend checks on those outputs need a tolerance. Replay on one
backend is exact either way.

Graphs arrive as CSR triples (indptr, indices, p_in) where row y lists
the neighbours x of y and p_in[k] is the one-step probability of moving
x -> y, i.e. edge_weight / mu[x]. Induced sub-CSRs may have empty rows
and rows summing below 1 (absorbing semantics); both are handled.
"""

from __future__ import annotations

import numpy as np

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)

FAM_GAUSSIAN = 0
FAM_RADEMACHER = 1
FAM_DISCRETE = 2

_U53_SCALE = 2.0 ** -53


def mix64(z):
    """splitmix64 finalizer on uint64 scalars or arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _SM_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM_M1
        z = (z ^ (z >> np.uint64(27))) * _SM_M2
        z = z ^ (z >> np.uint64(31))
    return z


def hash3(seed, a, b, c):
    """Counter hash of three coordinates under one seed; broadcasts."""
    seed = np.uint64(seed)
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    c = np.asarray(c, dtype=np.uint64)
    h = mix64(seed)
    h = mix64(h ^ a)
    h = mix64(h ^ b)
    h = mix64(h ^ c)
    return h


def u64_to_uniform(h):
    """Map uint64 to a double in (0, 1), strictly."""
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _U53_SCALE


# AS241 (PPND16) inverse normal CDF. Constants are the published
# double-precision set; both backends evaluate the same nested forms.

def _ppnd16_central(q):
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


def _ppnd16_middle(r):
    r = r - 1.6
    num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
              + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
            + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
    den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
              + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
            + 2.05319162663775882187e0) * r + 1.0)
    return num / den


def _ppnd16_tail(r):
    r = r - 5.0
    num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
              + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
            + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
    den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
              + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
            + 5.99832206555887937690e-1) * r + 1.0)
    return num / den


def ppnd16(u):
    """Inverse standard normal CDF, vectorized, for u strictly in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(u)
    central = np.abs(q) <= 0.425
    if np.any(central):
        out[central] = _ppnd16_central(q[central])
    rest = ~central
    if np.any(rest):
        qr = q[rest]
        ur = u[rest]
        rr = np.where(qr < 0.0, ur, 1.0 - ur)
        rr = np.sqrt(-np.log(rr))
        z = np.empty_like(rr)
        mid = rr <= 5.0
        z[mid] = _ppnd16_middle(rr[mid])
        z[~mid] = _ppnd16_tail(rr[~mid])
        out[rest] = np.where(qr < 0.0, -z, z)
    return out


def _values_from_hash(h, fam, values, cumprobs):
    if fam == FAM_GAUSSIAN:
        return ppnd16(u64_to_uniform(h))
    if fam == FAM_RADEMACHER:
        return np.where((h >> np.uint64(63)) == np.uint64(1), 1.0, -1.0)
    u = u64_to_uniform(h)
    idx = np.searchsorted(cumprobs, u, side="right")
    return values[idx]


def omega_values(seed, replica, t_arr, key_arr, fam, values, cumprobs):
    """Disorder values at (t, key) pairs for one replica."""
    h = hash3(seed, np.uint64(replica), t_arr, key_arr)
    return _values_from_hash(h, fam, values, cumprobs)


def omega_block(seed, replicas, t, keys, fam, values, cumprobs):
    """Disorder slice at time t: shape (len(replicas), len(keys))."""
    h = hash3(seed, np.asarray(replicas, dtype=np.uint64)[:, None],
              np.uint64(t), np.asarray(keys, dtype=np.uint64)[None, :])
    return _values_from_hash(h, fam, values, cumprobs)


def counter_uniforms(seed, a, b, c):
    """Uniforms in (0,1) from the counter hash; broadcasts over inputs."""
    return u64_to_uniform(hash3(seed, a, b, c))


# ---------------------------------------------------------------------------
# graph traversal

def bfs_distances(indptr, indices, source, rmax):
    """Hop distances from source; -1 where unreached. rmax < 0: unbounded."""
    V = indptr.shape[0] - 1
    dist = np.full(V, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    d = 0
    while frontier.size and (rmax < 0 or d < rmax):
        starts = indptr[frontier]
        counts = indptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        offs = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        nbrs = indices[np.arange(total, dtype=np.int64) + offs]
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        if nbrs.size == 0:
            break
        d += 1
        dist[nbrs] = d
        frontier = nbrs
    return dist


# ---------------------------------------------------------------------------
# heat-kernel iteration (linear probability domain)

def _pad_csr(indptr, indices, w, pad_w):
    """Column-padded row tables: (V, D) neighbour ids and edge weights.

    Row y keeps its real entries first, in edge order, padded out to the
    max degree with (index 0, pad_w). Reductions then run as D sequential
    vectorized accumulations whose term order matches the scalar loops;
    pad terms must be absorbing for the op (0 for sums, -inf for maxes).
    """
    degs = np.diff(indptr)
    D = max(1, int(degs.max()))
    cols = np.arange(D)
    valid = cols[None, :] < degs[:, None]
    epos = np.where(valid, indptr[:-1, None] + cols[None, :], 0)
    pidx = np.where(valid, indices[epos], 0)
    pw = np.where(valid, w[epos], pad_w)
    return pidx, pw


def _hk_step(pidx, pw, v):
    out = v[..., pidx[:, 0]] * pw[:, 0]
    for d in range(1, pidx.shape[1]):
        out += v[..., pidx[:, d]] * pw[:, d]
    return out


def hk_iterate(indptr, indices, p_in, v0, nsteps):
    """n plain steps; returns (v_n, per-step total masses)."""
    pidx, pw = _pad_csr(indptr, indices, p_in, 0.0)
    v = v0.astype(np.float64, copy=True)
    sums = np.empty(nsteps, dtype=np.float64)
    for k in range(nsteps):
        v = _hk_step(pidx, pw, v)
        sums[k] = v.sum()
    return v, sums


def hk_profile(indptr, indices, p_in, x, nmax):
    """Diagonal p_i(x,x), sum_y p_i(x,y)^2, and total mass, i = 0 .. nmax+1."""
    V = indptr.shape[0] - 1
    pidx, pw = _pad_csr(indptr, indices, p_in, 0.0)
    v = np.zeros(V, dtype=np.float64)
    v[x] = 1.0
    diag = np.empty(nmax + 2, dtype=np.float64)
    sumsq = np.empty(nmax + 2, dtype=np.float64)
    sums = np.empty(nmax + 2, dtype=np.float64)
    diag[0] = 1.0
    sumsq[0] = 1.0
    sums[0] = 1.0
    for i in range(1, nmax + 2):
        v = _hk_step(pidx, pw, v)
        diag[i] = v[x]
        sumsq[i] = np.dot(v, v)
        sums[i] = v.sum()
    return diag, sumsq, sums


def hk_masked_survival(indptr, indices, p_in, x, nsteps, mask):
    """Mass still alive after k masked steps, k = 0 .. nsteps.

    mask is uint8 per vertex; mass moving onto a masked-out vertex is
    killed. Start mass sits at x (assumed inside the mask).
    """
    V = indptr.shape[0] - 1
    pidx, pw = _pad_csr(indptr, indices, p_in, 0.0)
    v = np.zeros(V, dtype=np.float64)
    v[x] = 1.0
    masses = np.empty(nsteps + 1, dtype=np.float64)
    masses[0] = 1.0
    keep = mask.astype(bool)
    for k in range(1, nsteps + 1):
        v = _hk_step(pidx, pw, v)
        v[~keep] = 0.0
        masses[k] = v.sum()
    return masses


def hk_masked_iterate(indptr, indices, p_in, v0, nsteps, mask):
    """n absorbing steps: after each step, vertices outside mask are zeroed."""
    pidx, pw = _pad_csr(indptr, indices, p_in, 0.0)
    v = v0.astype(np.float64, copy=True)
    keep = mask.astype(bool)
    for _ in range(nsteps):
        v = _hk_step(pidx, pw, v)
        v[~keep] = 0.0
    return v


def hk_batch_penalized(indptr, indices, p_in, v0, nsteps, pen_mask, pen_factor):
    """Batched free steps with a per-visit multiplicative penalty.

    v0 has shape (B, V). After each step, entries on vertices flagged in
    pen_mask are scaled by pen_factor. pen_factor = 1 gives plain masses.
    """
    pidx, pw = _pad_csr(indptr, indices, p_in, 0.0)
    v = v0.astype(np.float64, copy=True)
    pen = pen_mask.astype(bool)
    for _ in range(nsteps):
        v = _hk_step(pidx, pw, v)
        if pen_factor != 1.0:
            v[:, pen] *= pen_factor
    return v


# ---------------------------------------------------------------------------
# log-domain polymer evolution

def _lse_step(pidx, plog, logw):
    """Per-row log-sum-exp of logw[pidx] + plog; pad entries carry -inf."""
    D = pidx.shape[1]
    terms = [logw[..., pidx[:, d]] + plog[:, d] for d in range(D)]
    m = terms[0].copy()
    for d in range(1, D):
        np.maximum(m, terms[d], out=m)
    # where m = -inf, exp(-inf - -inf) is nan; masked out below
    with np.errstate(invalid="ignore"):
        s = np.exp(terms[0] - m)
        for d in range(1, D):
            s += np.exp(terms[d] - m)
        return np.where(np.isneginf(m), -np.inf, m + np.log(s))


def _row_lse(a):
    m = np.max(a, axis=-1)
    with np.errstate(invalid="ignore"):
        ex = np.exp(a - m[..., None])
    ex[np.isnan(ex)] = 0.0
    s = np.sum(ex, axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(s > 0.0, m + np.log(s), -np.inf)


_EVOLVE_CHUNK_ELEMS = 1 << 23


def evolve(indptr, indices, logp_in, logw0, t0, nsteps, beta, lam, seed,
           replicas, keys, fam, values, cumprobs, record_trace):
    """n steps of the log-domain partition DP for a batch of replicas.

    logw0 has shape (R, V) holding log Z-masses at absolute time t0; step
    k computes time t0+k+1 using disorder omega(t, key) per replica. lam
    is subtracted each step (pass 0.0 for raw Z masses). Returns
    (logw_n, trace) where trace is (R, nsteps) of per-step total logZ
    when record_trace, else a (R, 0) array.
    """
    R, V = logw0.shape
    pidx, plog = _pad_csr(indptr, indices, logp_in, -np.inf)
    D = pidx.shape[1]
    logw = logw0.astype(np.float64, copy=True)
    trace = np.empty((R, nsteps if record_trace else 0), dtype=np.float64)
    chunk = max(1, _EVOLVE_CHUNK_ELEMS // ((D + 2) * V))
    for k in range(nsteps):
        t = t0 + k + 1
        om = omega_block(seed, replicas, t, keys, fam, values, cumprobs)
        for r0 in range(0, R, chunk):
            r1 = min(R, r0 + chunk)
            agg = _lse_step(pidx, plog, logw[r0:r1])
            logw[r0:r1] = beta * om[r0:r1] - lam + agg
        if record_trace:
            trace[:, k] = _row_lse(logw)
    return logw, trace


def evolve_masked(indptr, indices, logp_in, logw0, t0, nsteps, beta, lam,
                  seed, replicas, keys, fam, values, cumprobs, mask):
    """Same DP with an absorbing mask applied after every step."""
    R, V = logw0.shape
    pidx, plog = _pad_csr(indptr, indices, logp_in, -np.inf)
    keep = mask.astype(bool)
    logw = logw0.astype(np.float64, copy=True)
    for k in range(nsteps):
        t = t0 + k + 1
        om = omega_block(seed, replicas, t, keys, fam, values, cumprobs)
        agg = _lse_step(pidx, plog, logw)
        logw = beta * om - lam + agg
        logw[:, ~keep] = -np.inf
    return logw


# ---------------------------------------------------------------------------
# product-chain pair walk

def pair_iterate(indptr, indices, p_in, f0, nsteps, diag_factor):
    """n steps of two independent copies with a coincidence reweight.

    f0 is the (V, V) joint mass; each step applies the kernel to both
    coordinates and then multiplies the diagonal by diag_factor.
    """
    pidx, pw = _pad_csr(indptr, indices, p_in, 0.0)
    D = pidx.shape[1]
    f = f0.astype(np.float64, copy=True)
    V = f.shape[0]
    idx = np.arange(V)
    for _ in range(nsteps):
        tmp = pw[:, 0, None] * f[pidx[:, 0], :]
        for d in range(1, D):
            tmp += pw[:, d, None] * f[pidx[:, d], :]
        f = tmp[:, pidx[:, 0]] * pw[:, 0]
        for d in range(1, D):
            f += tmp[:, pidx[:, d]] * pw[:, d]
        f[idx, idx] *= diag_factor
    return f


# ---------------------------------------------------------------------------
# oriented site percolation on the coarse-grained lattice

def perc_survival(seed, rho, horizon, nruns):
    """Survival flags for nruns independent configurations.

    Sites (I, J) with 0 <= J <= I, I-J even, are open independently with
    probability rho, keyed by the counter hash of (run, I, J). Survival
    means an open oriented path from (0,0) reaches row `horizon`.
    """
    runs = np.arange(nruns, dtype=np.uint64)
    u = counter_uniforms(seed, runs, np.uint64(0), np.uint64(0))
    reach = np.zeros((nruns, horizon + 2), dtype=bool)
    reach[:, 0] = u < rho
    for I in range(1, horizon + 1):
        new = np.zeros_like(reach)
        for J in range(I % 2, I + 1, 2):
            u = counter_uniforms(seed, runs, np.uint64(I), np.uint64(J))
            openj = u < rho
            ok = np.zeros(nruns, dtype=bool)
            if J - 1 >= 0:
                ok |= reach[:, J - 1]
            if J + 1 <= I - 1:
                ok |= reach[:, J + 1]
            new[:, J] = openj & ok
        reach = new
    return reach.any(axis=1).astype(np.uint8)


def perc_sites(seed, run, rho, horizon):
    """Open/closed flags for one run, rows 0..horizon, lattice order."""
    I_list = []
    J_list = []
    for I in range(horizon + 1):
        for J in range(I % 2, I + 1, 2):
            I_list.append(I)
            J_list.append(J)
    I_arr = np.array(I_list, dtype=np.uint64)
    J_arr = np.array(J_list, dtype=np.uint64)
    u = counter_uniforms(seed, np.uint64(run), I_arr, J_arr)
    return I_arr.astype(np.int64), J_arr.astype(np.int64), (u < rho)
