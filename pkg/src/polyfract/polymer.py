"""Partition functions of the disordered polymer by transfer DP.

Free-endpoint, point-to-point, and tube-restricted variants over a
fixed disorder realization, plus the exact pair-walk second moment.
All weight arithmetic stays in log domain with logsumexp reductions;
raw mode carries log Z masses and normalized mode subtracts
lambda(beta) every step, so the linear-domain total is the mean-one
weight W_n.

Batched entry points (log_partition_batch, restricted_log_weights)
evaluate many replicas in one kernel pass and are what the free-energy
and block-state layers drive; the object API (PolymerFront, evolve)
wraps single replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (ConfigError, DomainError, SizeLimitError,
                     TubeStarvationError)
from .graphs import induced_csr
from .walk import _require_untruncated, _resolve_dw

RAW = "raw"
NORMALIZED = "normalized"

# (ball size)^2 product states; second_moment_pairwalk refuses beyond this
PAIR_STATE_CAP = 1 << 24


def _logsumexp(a, axis=None):
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis)
    if axis is None:
        if np.isneginf(m):
            return -np.inf
        return float(m + np.log(np.sum(np.exp(a - m))))
    with np.errstate(invalid="ignore"):
        s = np.sum(np.exp(a - np.expand_dims(m, axis)), axis=axis)
    return np.where(np.isneginf(m), -np.inf, m + np.log(s))


def _spec_args(spec):
    return spec.fam_code, spec.values, spec.cumprobs


def _as_mask(g, mask):
    """uint8 vertex mask from a boolean array or a list of vertex ids."""
    arr = np.asarray(mask)
    if arr.dtype in (np.bool_, np.uint8):
        if arr.shape != (g.V,):
            raise ConfigError(f"mask must cover all {g.V} vertices")
        return arr.astype(np.uint8)
    ids = arr.astype(np.int64, copy=False).reshape(-1)
    if ids.size == 0:
        raise ConfigError("mask vertex set is empty")
    if ids.min() < 0 or ids.max() >= g.V:
        raise ConfigError("mask vertex id out of range")
    out = np.zeros(g.V, dtype=np.uint8)
    out[ids] = 1
    return out


# ---------------------------------------------------------------------------
# sparse front objects

@dataclass(frozen=True)
class PolymerFront:
    """Sparse log-weight table of an evolving polymer at one time.

    log_weights maps vertex -> log weight and stores finite entries
    only; absent vertices carry weight zero. In raw mode the total is
    Z_n, in normalized mode it is W_n = Z_n e^{-n lambda(beta)}.
    """

    n: int
    x: int
    beta: float
    mode: str
    log_weights: dict

    def __post_init__(self):
        if self.mode not in (RAW, NORMALIZED):
            raise ConfigError(f"unknown front mode {self.mode!r}")
        if self.n < 0:
            raise DomainError("front time must be >= 0")
        if not self.log_weights:
            raise DomainError("front support is empty")
        if not all(math.isfinite(v) for v in self.log_weights.values()):
            raise DomainError("front log weights must be finite")

    def as_log_array(self, n_vertices):
        v = np.full(int(n_vertices), -np.inf, dtype=np.float64)
        for y, lw in self.log_weights.items():
            v[y] = lw
        return v

    def log_total(self):
        return _logsumexp(np.fromiter(self.log_weights.values(),
                                      dtype=np.float64))

    def support(self):
        return np.array(sorted(self.log_weights), dtype=np.int64)


def start_front(g, x, beta, mode=RAW):
    """Time-0 front: unit mass at the start vertex."""
    x = int(x)
    if not (0 <= x < g.V):
        raise DomainError(f"vertex {x} out of range")
    return PolymerFront(0, x, float(beta), mode, {x: 0.0})


def _sparse_row(row):
    nz = np.flatnonzero(np.isfinite(row))
    return {int(y): float(row[y]) for y in nz}


def evolve(g, front, field, mask=None):
    """One DP time step; a mask drops weight landing off the mask.

    log w_{n+1}(y) = beta omega(n+1, y) [- lambda in normalized mode]
    + logsumexp_x(log w_n(x) + log p_{x,y}). Raises when a mask removes
    the entire support.
    """
    beta = float(front.beta)
    lam = field.spec.log_mgf(beta) if front.mode == NORMALIZED else 0.0
    logw0 = front.as_log_array(g.V)[None, :]
    reps = np.array([field.replica], dtype=np.uint64)
    t0 = field.time_offset + front.n
    fam, values, cumprobs = _spec_args(field.spec)
    if mask is None:
        logw, _ = kernels.evolve(g.indptr, g.indices, g.logp_in, logw0, t0,
                                 1, beta, lam, field.seed, reps, g.site_key,
                                 fam, values, cumprobs, False)
    else:
        logw = kernels.evolve_masked(g.indptr, g.indices, g.logp_in, logw0,
                                     t0, 1, beta, lam, field.seed, reps,
                                     g.site_key, fam, values, cumprobs,
                                     _as_mask(g, mask))
    weights = _sparse_row(logw[0])
    if not weights:
        raise TubeStarvationError(
            f"mask removed the whole front at time {front.n + 1}")
    out = PolymerFront(front.n + 1, front.x, beta, front.mode, weights)
    dist = g.dist_from(front.x)
    assert max(int(dist[y]) for y in weights) <= out.n, \
        "support escaped B(x, n)"
    return out


# ---------------------------------------------------------------------------
# free-endpoint and point-to-point values

def _free_logw(g, spec, seed, x, n, beta, replicas, time_offset,
               record_trace, check_boundary):
    """(R, V) raw log-weight table after n steps from x, plus the trace."""
    x = int(x)
    n = int(n)
    if not (0 <= x < g.V):
        raise DomainError(f"vertex {x} out of range")
    if n < 0:
        raise DomainError("step count must be >= 0")
    reps = np.asarray(replicas, dtype=np.uint64).reshape(-1)
    if reps.size == 0:
        raise ConfigError("need at least one replica id")
    _require_untruncated(g, x, n, check_boundary, f"{n}-step polymer")
    logw0 = np.full((reps.size, g.V), -np.inf, dtype=np.float64)
    logw0[:, x] = 0.0
    if n == 0:
        return logw0, np.empty((reps.size, 0), dtype=np.float64)
    fam, values, cumprobs = _spec_args(spec)
    return kernels.evolve(g.indptr, g.indices, g.logp_in, logw0,
                          int(time_offset), n, float(beta), 0.0, seed, reps,
                          g.site_key, fam, values, cumprobs, record_trace,
                          dist=g.dist_from(x), r0=0)


def log_partition_batch(g, spec, seed, x, n, beta, replicas, time_offset=0,
                        record_trace=False, check_boundary=True):
    """log Z_n^x per replica; with record_trace also the (R, n) per-step
    log Z table (column k holds time k+1)."""
    logw, trace = _free_logw(g, spec, seed, x, n, beta, replicas,
                             time_offset, record_trace, check_boundary)
    logz = np.asarray(_logsumexp(logw, axis=1), dtype=np.float64)
    if record_trace:
        return logz, trace
    return logz


def partition_function(g, field, x, n, beta, check_boundary=True):
    """log Z_n^x for one replica by exact transfer DP."""
    x = int(x)
    n = int(n)
    if not (0 <= x < g.V):
        raise DomainError(f"vertex {x} out of range")
    if n < 0:
        raise DomainError("step count must be >= 0")
    _require_untruncated(g, x, n, check_boundary, f"{n}-step polymer")
    if float(beta) == 0.0 or n == 0:
        # weights degenerate to walk probabilities with total exactly 1
        return 0.0
    logz = log_partition_batch(g, field.spec, field.seed, x, n, beta,
                               [field.replica],
                               time_offset=field.time_offset,
                               check_boundary=check_boundary)
    return float(logz[0])


def endpoint_log_weights(g, field, x, n, beta, check_boundary=True):
    """log Z_n^{x,y} for every endpoint y; -inf marks unreachable ones."""
    logw, _ = _free_logw(g, field.spec, field.seed, x, n, beta,
                         [field.replica], field.time_offset, False,
                         check_boundary)
    return logw[0]


@dataclass(frozen=True)
class PointToPointValue:
    log_z: float
    reachable: bool


def point_to_point(g, field, x, y, n, beta, check_boundary=True):
    """log Z_n^{x,y}; endpoints with no n-step path get the -inf
    sentinel and reachable=False instead of an error."""
    y = int(y)
    if not (0 <= y < g.V):
        raise DomainError(f"vertex {y} out of range")
    logw = endpoint_log_weights(g, field, x, n, beta,
                                check_boundary=check_boundary)
    lz = float(logw[y])
    return PointToPointValue(lz, math.isfinite(lz))


@dataclass(frozen=True)
class ConcatenationSample:
    """Pieces of log Z_{2n}^{x,x} >= log Z_n^{x,y} + log Z_n^{y,x} o theta_n.

    Splitting the 2n-step loop at its midpoint makes the inequality
    exact draw by draw (the right side is one term of a positive sum).
    Averaged over replicas, reversibility trades the shifted leg for a
    second x-to-y leg at the cost of log(mu_x / mu_y).
    """

    log_z2n_xx: float
    log_zn_xy: float
    log_zn_yx_shifted: float
    log_mu_ratio: float


def concatenation_sample(g, field, x, y, n, beta, check_boundary=True):
    z2 = point_to_point(g, field, x, x, 2 * n, beta,
                        check_boundary=check_boundary)
    zxy = point_to_point(g, field, x, y, n, beta,
                         check_boundary=check_boundary)
    zyx = point_to_point(g, field.shifted(n), y, x, n, beta,
                         check_boundary=check_boundary)
    if not (z2.reachable and zxy.reachable and zyx.reachable):
        raise DomainError(f"no {n}-step paths joining {x} and {y}")
    return ConcatenationSample(z2.log_z, zxy.log_z, zyx.log_z,
                               math.log(g.mu[int(x)] / g.mu[int(y)]))


# ---------------------------------------------------------------------------
# tube-restricted partition functions

class TubeConstraint:
    """Block-path constraint along a geodesic ray.

    gammas = (gamma_0, ..., gamma_I) lists ball indices with gamma_0 = 0
    and unit steps. Block L confines times Ln+1 .. (L+1)n-1 to the
    dilated ball of radius floor(C7 n_w) around ray vertex
    gamma_L * n_w, and time (L+1)n additionally to the radius-n_w ball
    of gamma_{L+1}; time 0 is the fixed start and is never masked.
    n_w = floor(n^{1/d_w}).
    """

    def __init__(self, ray, n, C7, gammas, d_w=None):
        self.ray = ray
        self.n = int(n)
        self.C7 = float(C7)
        self.gammas = tuple(int(gv) for gv in gammas)
        if self.n < 1:
            raise ConfigError("block length must be >= 1")
        if not (self.C7 >= 1.0):
            raise ConfigError("C7 must be >= 1")
        if len(self.gammas) < 2:
            raise ConfigError("need at least one block step")
        if self.gammas[0] != 0:
            raise ConfigError("block path must start at index 0")
        if min(self.gammas) < 0:
            raise ConfigError("block indices must be >= 0")
        if any(abs(b - a) != 1 for a, b in zip(self.gammas,
                                               self.gammas[1:])):
            raise ConfigError("block path must move by one ball per block")
        g = ray.graph
        d_w = _resolve_dw(g, d_w)
        self.n_w = int(math.floor(self.n ** (1.0 / d_w)))
        if self.n_w < 1:
            raise DomainError(f"n = {self.n} gives a sub-lattice block scale")
        need = max(self.gammas) * self.n_w
        if need > len(ray):
            raise DomainError(f"ray of length {len(ray)} is too short "
                              f"(block path needs {need})")
        self.r_tube = int(math.floor(self.C7 * self.n_w))
        self._masks = {}

    @property
    def blocks(self):
        return len(self.gammas) - 1

    def center(self, j):
        return self.ray[int(j) * self.n_w]

    def block_mask(self, j):
        """uint8 mask of the radius-n_w ball around center j."""
        key = ("b", int(j))
        m = self._masks.get(key)
        if m is None:
            dist = self.ray.graph.dist_from(self.center(j))
            m = (dist <= self.n_w).astype(np.uint8)
            self._masks[key] = m
        return m

    def tube_mask(self, j):
        """uint8 mask of the dilated radius-floor(C7 n_w) ball."""
        key = ("t", int(j))
        m = self._masks.get(key)
        if m is None:
            dist = self.ray.graph.dist_from(self.center(j))
            m = (dist <= self.r_tube).astype(np.uint8)
            self._masks[key] = m
        return m

    def end_mask(self, L):
        """Mask at the boundary time of block L: the target unit ball,
        inside the union of the two adjacent dilated balls."""
        a, b = self.gammas[L], self.gammas[L + 1]
        both = self.tube_mask(a) | self.tube_mask(b)
        return (self.block_mask(b) & both).astype(np.uint8)


def masked_block_steps(g, spec, seed, replicas, logw, t0, n, beta, lam,
                       interior_mask, final_mask):
    """One tube block: n-1 steps under interior_mask, one under final_mask."""
    reps = np.asarray(replicas, dtype=np.uint64).reshape(-1)
    fam, values, cumprobs = _spec_args(spec)
    args = (g.indptr, g.indices, g.logp_in)
    if n >= 2:
        logw = kernels.evolve_masked(*args, logw, int(t0), n - 1,
                                     float(beta), float(lam), seed, reps,
                                     g.site_key, fam, values, cumprobs,
                                     interior_mask)
    return kernels.evolve_masked(*args, logw, int(t0) + n - 1, 1,
                                 float(beta), float(lam), seed, reps,
                                 g.site_key, fam, values, cumprobs,
                                 final_mask)


def _check_tube_truncation(g, tube, check_boundary):
    for j in sorted(set(tube.gammas)):
        _require_untruncated(g, tube.center(j), tube.r_tube, check_boundary,
                             f"radius-{tube.r_tube} tube block {j}")


def restricted_log_weights(g, spec, seed, replicas, tube, beta,
                           time_offset=0, check_boundary=True,
                           keep_tables=False):
    """Batched tube-restricted DP in normalized mode.

    Returns (block_log_w, logw, tables): block_log_w[r, L] is the log
    of the restricted weight at time (L+1) n for replica r (-inf when
    that replica lost all mass, no error raised here), logw the final
    (R, V) table, and tables the per-boundary tables when requested.
    """
    reps = np.asarray(replicas, dtype=np.uint64).reshape(-1)
    if reps.size == 0:
        raise ConfigError("need at least one replica id")
    _check_tube_truncation(g, tube, check_boundary)
    lam = spec.log_mgf(beta)
    start = tube.ray[0]
    logw = np.full((reps.size, g.V), -np.inf, dtype=np.float64)
    logw[:, start] = 0.0
    out = np.empty((reps.size, tube.blocks), dtype=np.float64)
    tables = [] if keep_tables else None
    for L in range(tube.blocks):
        logw = masked_block_steps(g, spec, seed, reps, logw,
                                  int(time_offset) + L * tube.n, tube.n,
                                  beta, lam,
                                  tube.tube_mask(tube.gammas[L]),
                                  tube.end_mask(L))
        out[:, L] = _logsumexp(logw, axis=1)
        if keep_tables:
            tables.append(logw)
    return out, logw, tables


def restricted_partition(g, field, tube, beta, check_boundary=True,
                         return_fronts=False):
    """Per-block restricted log W values for one replica.

    Entry L is log W at time (L+1) n of the walk confined to the tube
    blocks of `tube`; normalized mode. With return_fronts the sparse
    front at each block boundary comes back too.
    """
    block_log_w, _, tables = restricted_log_weights(
        g, field.spec, field.seed, [field.replica], tube, beta,
        time_offset=field.time_offset, check_boundary=check_boundary,
        keep_tables=True)
    values = []
    fronts = []
    start = tube.ray[0]
    for L in range(tube.blocks):
        v = float(block_log_w[0, L])
        if not math.isfinite(v):
            raise TubeStarvationError(
                f"tube block {L} absorbed the whole front")
        values.append(v)
        if return_fronts:
            fronts.append(PolymerFront((L + 1) * tube.n, start, float(beta),
                                       NORMALIZED, _sparse_row(tables[L][0])))
    if return_fronts:
        return values, fronts
    return values


# ---------------------------------------------------------------------------
# pair-walk second moments

def second_moment_pairwalk(g, spec, x, n, beta, max_states=PAIR_STATE_CAP,
                           check_boundary=True):
    """Q[(W_n^x)^2] as the exact pair-walk value E^{x,x}[e^{gamma L_n}].

    L_n counts coincidences of two independent walks; gamma(beta) =
    lambda(2 beta) - 2 lambda(beta). The chain is induced on B(x, n),
    so the dense product state is (ball size)^2; larger requests fail.
    """
    x = int(x)
    n = int(n)
    if not (0 <= x < g.V):
        raise DomainError(f"vertex {x} out of range")
    if n < 0:
        raise DomainError("step count must be >= 0")
    _require_untruncated(g, x, n, check_boundary, f"{n}-step pair walk")
    ball = g.ball(x, n)
    if ball.size ** 2 > max_states:
        raise SizeLimitError(
            f"pair walk needs {ball.size}^2 product states, cap is "
            f"{max_states}")
    indptr, indices, p_in, _, verts = induced_csr(g, ball)
    x_loc = int(np.searchsorted(verts, x))
    f0 = np.zeros((verts.size, verts.size), dtype=np.float64)
    f0[x_loc, x_loc] = 1.0
    gam = spec.overlap_rate(beta)
    f = kernels.pair_iterate(indptr, indices, p_in, f0, n, math.exp(gam))
    return float(f.sum())


def pair_restricted_moment(g, spec, beta, start_probs, tube_vertices,
                           end_vertices, n, max_states=PAIR_STATE_CAP):
    """Disorder mean and second moment of a one-block restricted weight.

    start_probs maps vertex -> probability (a normalized front); the
    walk must stay inside tube_vertices for n steps and finish in
    end_vertices. Returns (mean, second_moment): the mean is the plain
    walk probability of that event, the second moment the pair-chain
    value started from the product measure.
    """
    n = int(n)
    if n < 1:
        raise DomainError("block length must be >= 1")
    tube = np.unique(np.asarray(tube_vertices, dtype=np.int64))
    end = np.unique(np.asarray(end_vertices, dtype=np.int64))
    if tube.size ** 2 > max_states:
        raise SizeLimitError(
            f"pair walk needs {tube.size}^2 product states, cap is "
            f"{max_states}")
    if not np.all(np.isin(end, tube)):
        raise ConfigError("end vertices must lie inside the tube")
    indptr, indices, p_in, _, verts = induced_csr(g, tube)
    loc = np.full(g.V, -1, dtype=np.int64)
    loc[verts] = np.arange(verts.size, dtype=np.int64)
    nu = np.zeros(verts.size, dtype=np.float64)
    total = 0.0
    for v, p in start_probs.items():
        if loc[int(v)] < 0:
            raise ConfigError(f"start vertex {v} is outside the tube")
        nu[loc[int(v)]] = float(p)
        total += float(p)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"start measure sums to {total!r}, expected 1")
    end_loc = loc[end]
    no_pen = np.zeros(verts.size, dtype=np.uint8)
    v1 = kernels.hk_batch_penalized(indptr, indices, p_in, nu[None, :], n,
                                    no_pen, 1.0)[0]
    mean = float(v1[end_loc].sum())
    gam = spec.overlap_rate(beta)
    f = kernels.pair_iterate(indptr, indices, p_in, np.outer(nu, nu), n,
                             math.exp(gam))
    second = float(f[np.ix_(end_loc, end_loc)].sum())
    return mean, second


# ---------------------------------------------------------------------------
# trace emission

def trace_rows(g, spec, seed, x, n, beta, replicas, time_offset=0,
               check_boundary=True):
    """Rows (replica, n, logZ, logW) for every step of every replica."""
    _, trace = log_partition_batch(g, spec, seed, x, n, beta, replicas,
                                   time_offset=time_offset,
                                   record_trace=True,
                                   check_boundary=check_boundary)
    lam = spec.log_mgf(beta)
    rows = []
    for i, rep in enumerate(np.asarray(replicas, dtype=np.uint64)):
        for k in range(1, int(n) + 1):
            lz = float(trace[i, k - 1])
            rows.append((int(rep), k, lz, lz - k * lam))
    return rows
