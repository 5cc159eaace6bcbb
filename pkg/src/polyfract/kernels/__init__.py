"""Kernel backend selection and the uniform kernel API.

Backend is chosen once at import from the POLYFRACT_BACKEND environment
variable: "numpy" forces the pure-numpy path, "numba" requires numba and
fails loudly without it, anything else (or unset) tries numba and falls
back to numpy. Both backends implement the same math with the same
per-element operation order; the numba path additionally restricts inner
loops to the reachable-vertex prefix, which does not change results.

Callers pass CSR triples (indptr, indices, p_in/logp_in) where row y
lists the neighbours x and p_in[k] is the probability of stepping from
indices[k] to y.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _numpy_impl as numpy_impl

logger = logging.getLogger(__name__)

FAM_GAUSSIAN = numpy_impl.FAM_GAUSSIAN
FAM_RADEMACHER = numpy_impl.FAM_RADEMACHER
FAM_DISCRETE = numpy_impl.FAM_DISCRETE

_choice = os.environ.get("POLYFRACT_BACKEND", "auto").strip().lower()

numba_impl = None
if _choice == "numpy":
    BACKEND = "numpy"
elif _choice == "numba":
    from . import _numba_impl as numba_impl  # hard requirement by request
    BACKEND = "numba"
else:
    try:
        from . import _numba_impl as numba_impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on the host env
        logger.info("numba unavailable, using the numpy backend")
        BACKEND = "numpy"

HAVE_NUMBA = numba_impl is not None
_impl = numba_impl if BACKEND == "numba" else numpy_impl


def backend_name() -> str:
    return BACKEND


def set_num_threads(n: int) -> None:
    """Clamp numba's thread pool; a no-op on the numpy backend."""
    if BACKEND == "numba":
        import numba

        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)


def _prefix(dist, nsteps, r0, V):
    """Active-prefix (order, counts) for supports growing one hop per step."""
    if dist is None:
        order = np.arange(V, dtype=np.int64)
        counts = np.full(nsteps, V, dtype=np.int64)
        return order, counts
    order = np.argsort(dist, kind="stable").astype(np.int64)
    sd = dist[order]
    radii = np.minimum(r0 + 1 + np.arange(nsteps, dtype=np.int64), sd[-1])
    counts = np.searchsorted(sd, radii, side="right").astype(np.int64)
    return order, counts


def _u64(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.uint64))


def omega_values(seed, replica, t_arr, key_arr, fam, values, cumprobs):
    t_arr = _u64(t_arr)
    key_arr = _u64(key_arr)
    if BACKEND == "numba":
        return numba_impl.omega_values(np.uint64(seed), np.uint64(replica),
                                       t_arr, key_arr, fam, values, cumprobs)
    return numpy_impl.omega_values(seed, replica, t_arr, key_arr, fam,
                                   values, cumprobs)


def omega_block(seed, replicas, t, keys, fam, values, cumprobs):
    replicas = _u64(replicas)
    keys = _u64(keys)
    if BACKEND == "numba":
        return numba_impl.omega_block(np.uint64(seed), replicas, np.uint64(t),
                                      keys, fam, values, cumprobs)
    return numpy_impl.omega_block(seed, replicas, t, keys, fam, values, cumprobs)


def counter_uniforms(seed, a, b, c):
    a, b, c = np.broadcast_arrays(_u64(a), _u64(b), _u64(c))
    shape = a.shape
    if BACKEND == "numba":
        out = numba_impl.counter_uniforms(np.uint64(seed),
                                          _u64(a.ravel()), _u64(b.ravel()),
                                          _u64(c.ravel()))
        return out.reshape(shape)
    return numpy_impl.counter_uniforms(seed, a, b, c)


def bfs_distances(indptr, indices, source, rmax=-1):
    return _impl.bfs_distances(indptr, indices, np.int64(source), np.int64(rmax))


def hk_iterate(indptr, indices, p_in, v0, nsteps, dist=None, r0=0):
    if BACKEND == "numba":
        order, counts = _prefix(dist, nsteps, r0, indptr.shape[0] - 1)
        return numba_impl.hk_iterate(indptr, indices, p_in,
                                     np.asarray(v0, dtype=np.float64),
                                     nsteps, order, counts)
    return numpy_impl.hk_iterate(indptr, indices, p_in, v0, nsteps)


def hk_profile(indptr, indices, p_in, x, nmax, dist=None):
    if BACKEND == "numba":
        order, counts = _prefix(dist, nmax + 2, 0, indptr.shape[0] - 1)
        return numba_impl.hk_profile(indptr, indices, p_in, np.int64(x),
                                     np.int64(nmax), order, counts)
    return numpy_impl.hk_profile(indptr, indices, p_in, x, nmax)


def hk_masked_survival(indptr, indices, p_in, x, nsteps, mask):
    return _impl.hk_masked_survival(indptr, indices, p_in, np.int64(x),
                                    np.int64(nsteps), mask)


def hk_masked_iterate(indptr, indices, p_in, v0, nsteps, mask):
    return _impl.hk_masked_iterate(indptr, indices, p_in,
                                   np.asarray(v0, dtype=np.float64),
                                   np.int64(nsteps), mask)


def hk_batch_penalized(indptr, indices, p_in, v0, nsteps, pen_mask,
                       pen_factor, dist=None, r0=0):
    v0 = np.asarray(v0, dtype=np.float64)
    if BACKEND == "numba":
        order, counts = _prefix(dist, nsteps, r0, indptr.shape[0] - 1)
        return numba_impl.hk_batch_penalized(indptr, indices, p_in, v0,
                                             np.int64(nsteps), pen_mask,
                                             np.float64(pen_factor),
                                             order, counts)
    return numpy_impl.hk_batch_penalized(indptr, indices, p_in, v0, nsteps,
                                         pen_mask, pen_factor)


def evolve(indptr, indices, logp_in, logw0, t0, nsteps, beta, lam, seed,
           replicas, keys, fam, values, cumprobs, record_trace=False,
           dist=None, r0=0):
    replicas = _u64(replicas)
    keys = _u64(keys)
    logw0 = np.ascontiguousarray(logw0, dtype=np.float64)
    if BACKEND == "numba":
        order, counts = _prefix(dist, nsteps, r0, indptr.shape[0] - 1)
        return numba_impl.evolve(indptr, indices, logp_in, logw0,
                                 np.int64(t0), np.int64(nsteps),
                                 np.float64(beta), np.float64(lam),
                                 np.uint64(seed), replicas, keys,
                                 np.int64(fam), values, cumprobs,
                                 order, counts, record_trace)
    return numpy_impl.evolve(indptr, indices, logp_in, logw0, t0, nsteps,
                             beta, lam, seed, replicas, keys, fam, values,
                             cumprobs, record_trace)


def evolve_masked(indptr, indices, logp_in, logw0, t0, nsteps, beta, lam,
                  seed, replicas, keys, fam, values, cumprobs, mask):
    replicas = _u64(replicas)
    keys = _u64(keys)
    logw0 = np.ascontiguousarray(logw0, dtype=np.float64)
    if BACKEND == "numba":
        return numba_impl.evolve_masked(indptr, indices, logp_in, logw0,
                                        np.int64(t0), np.int64(nsteps),
                                        np.float64(beta), np.float64(lam),
                                        np.uint64(seed), replicas, keys,
                                        np.int64(fam), values, cumprobs, mask)
    return numpy_impl.evolve_masked(indptr, indices, logp_in, logw0, t0,
                                    nsteps, beta, lam, seed, replicas, keys,
                                    fam, values, cumprobs, mask)


def pair_iterate(indptr, indices, p_in, f0, nsteps, diag_factor):
    f0 = np.ascontiguousarray(f0, dtype=np.float64)
    return _impl.pair_iterate(indptr, indices, p_in, f0, np.int64(nsteps),
                              np.float64(diag_factor))


def perc_survival(seed, rho, horizon, nruns):
    if BACKEND == "numba":
        return numba_impl.perc_survival(np.uint64(seed), np.float64(rho),
                                        np.int64(horizon), np.int64(nruns))
    return numpy_impl.perc_survival(seed, rho, horizon, nruns)


def perc_sites(seed, run, rho, horizon):
    # integer hashing is backend-identical; one implementation suffices
    return numpy_impl.perc_sites(seed, run, rho, horizon)
