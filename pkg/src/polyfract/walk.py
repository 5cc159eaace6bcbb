"""Exact heat kernels, exit tails, and walk-dimension estimation.

Everything here is computed by sparse kernel iteration, never Monte
Carlo: the downstream moment identities and tube probabilities need
values that are exact up to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BoundaryError, DegenerateFitError, DomainError
from .graphs import induced_csr, nominal_dimensions, volume_growth

MASS_TOL = 1e-12


def _require_untruncated(g, x, radius, check_boundary, what):
    """Radius-`radius` neighborhoods of x must look like the infinite graph."""
    if not check_boundary or not g.boundary.size:
        return
    horizon = g.safe_horizon(x)
    if radius > horizon:
        raise BoundaryError(
            f"{what} from vertex {x} needs radius {radius} but the truncation "
            f"boundary sits at distance {horizon + 1}; enlarge the graph or "
            f"pass check_boundary=False")


def _assert_conserved(sums):
    bad = np.abs(np.asarray(sums) - 1.0) > MASS_TOL
    assert not bad.any(), (
        f"heat kernel mass drifted by {np.abs(sums - 1.0).max():.3e}")


@dataclass(frozen=True)
class HeatKernelSlice:
    """Distribution of S_n under P^x, as a sparse vertex -> prob map."""

    n: int
    x: int
    probs: dict

    def as_array(self, n_vertices):
        v = np.zeros(int(n_vertices), dtype=np.float64)
        for y, p in self.probs.items():
            v[y] = p
        return v

    def mass(self):
        return float(sum(self.probs.values()))


def heat_kernel(g, x, n, check_boundary=True):
    """Exact n-step distribution from x via sparse kernel iteration."""
    x = int(x)
    n = int(n)
    if n < 0:
        raise DomainError("step count must be >= 0")
    if not (0 <= x < g.V):
        raise DomainError(f"vertex {x} out of range")
    _require_untruncated(g, x, n, check_boundary, f"{n}-step walk")
    dist = g.dist_from(x)
    if n == 0:
        return HeatKernelSlice(0, x, {x: 1.0})
    v0 = np.zeros(g.V, dtype=np.float64)
    v0[x] = 1.0
    v, sums = kernels.hk_iterate(g.indptr, g.indices, g.p_in, v0, n,
                                 dist=dist, r0=0)
    _assert_conserved(sums)
    nz = np.flatnonzero(v > 0.0)
    assert int(dist[nz].max()) <= n, "support escaped B(x, n)"
    return HeatKernelSlice(n, x, {int(y): float(v[y]) for y in nz})


def return_profile(g, x, n_max, check_boundary=True):
    """Two-step return sums p_n(x,x) + p_{n+1}(x,x) for n = 0..n_max.

    The two-step sum sidesteps bipartite parity. Returns (ns, values).
    """
    x = int(x)
    n_max = int(n_max)
    if n_max < 0:
        raise DomainError("n_max must be >= 0")
    _require_untruncated(g, x, n_max + 1, check_boundary,
                         f"{n_max + 1}-step return profile")
    diag, _, sums = kernels.hk_profile(g.indptr, g.indices, g.p_in, x, n_max,
                                       dist=g.dist_from(x))
    _assert_conserved(sums)
    ns = np.arange(n_max + 1, dtype=np.int64)
    return ns, diag[:-1] + diag[1:]


def pair_overlap_profile(g, x, n_max, check_boundary=True):
    """Cumulative expected pair overlaps sum_{i<=n} sum_y p_i(x,y)^2.

    Returns (ns, overlaps) for n = 1..n_max; overlaps[k] is the exact
    expected collision count of two independent n-step walks from x.
    """
    x = int(x)
    n_max = int(n_max)
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    _require_untruncated(g, x, n_max, check_boundary,
                         f"{n_max}-step overlap profile")
    _, sumsq, sums = kernels.hk_profile(g.indptr, g.indices, g.p_in, x,
                                        n_max - 1, dist=g.dist_from(x))
    _assert_conserved(sums)
    ns = np.arange(1, n_max + 1, dtype=np.int64)
    return ns, np.cumsum(sumsq[1:n_max + 1])


def pair_overlap_sum(g, x, n, check_boundary=True):
    """sum_{i=1}^n sum_y p_i(x,y)^2; zero for n = 0."""
    if int(n) == 0:
        return 0.0
    _, overlaps = pair_overlap_profile(g, x, n, check_boundary=check_boundary)
    return float(overlaps[-1])


def _resolve_dw(g, d_w):
    if d_w is not None:
        if not (d_w > 1.0):
            raise DomainError("d_w must exceed 1")
        return float(d_w)
    dims = nominal_dimensions(g.family)
    if dims is None:
        raise DomainError(
            "graph family has no nominal walk dimension; pass d_w explicitly")
    return dims["d_w"]


def exit_tail(g, x, n, t_grid, d_w=None, check_boundary=True):
    """P_x(tau(x, 2 t n^{1/d_w}) < n) on a grid of t >= 1.

    tau(x, r) is the first time the walk leaves B(x, r). Probabilities
    are exact, from the absorbing-boundary kernel. Returns (t, probs).
    """
    x = int(x)
    n = int(n)
    if n < 1:
        raise DomainError("n must be >= 1")
    t_arr = np.asarray(t_grid, dtype=np.float64)
    if t_arr.ndim != 1 or t_arr.size == 0:
        raise DomainError("t_grid must be a non-empty 1-d list")
    if (t_arr < 1.0).any():
        raise DomainError("t values must be >= 1")
    d_w = _resolve_dw(g, d_w)
    scale = n ** (1.0 / d_w)
    dist = g.dist_from(x)
    probs = np.zeros(t_arr.size, dtype=np.float64)
    cache = {}
    for i, t in enumerate(t_arr):
        r = int(math.floor(2.0 * t * scale))
        if r >= n:
            continue  # n steps cannot leave a radius >= n ball
        if r not in cache:
            _require_untruncated(g, x, r, check_boundary,
                                 f"radius-{r} exit ball")
            mask = (dist <= r).astype(np.uint8)
            masses = kernels.hk_masked_survival(g.indptr, g.indices, g.p_in,
                                                x, n - 1, mask)
            cache[r] = 1.0 - float(masses[n - 1])
        probs[i] = cache[r]
    return t_arr, probs


def fit_exit_decay(t_arr, probs, d_w):
    """Stretched-exponential fit log P = log a - c t^{d_w/(d_w-1)}.

    Returns (c_hat, a_hat, rms residual) over the strictly positive
    entries; the residual is reported, not asserted anywhere.
    """
    t_arr = np.asarray(t_arr, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    pos = probs > 0.0
    if int(pos.sum()) < 3:
        raise DegenerateFitError("exit-decay fit needs at least 3 points")
    u = t_arr[pos] ** (d_w / (d_w - 1.0))
    ly = np.log(probs[pos])
    slope, intercept = np.polyfit(u, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * u + intercept)) ** 2)))
    return float(-slope), float(math.exp(intercept)), resid


# ---------------------------------------------------------------------------
# dimension estimation

def _loglog_fit(xs, ys, lo, hi, what):
    """Slope of log ys on log xs over the window [lo, hi].

    Returns (slope, slope stderr, rms residual, n points). Fewer than 4
    usable points is a degenerate regression.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    keep = (xs >= lo) & (xs <= hi) & (ys > 0.0)
    if int(keep.sum()) < 4:
        raise DegenerateFitError(
            f"{what}: {int(keep.sum())} usable points in [{lo}, {hi}], need 4")
    lx = np.log(xs[keep])
    ly = np.log(ys[keep])
    npts = lx.size
    slope, intercept = np.polyfit(lx, ly, 1)
    r = ly - (slope * lx + intercept)
    rms = float(np.sqrt(np.mean(r * r)))
    sxx = float(((lx - lx.mean()) ** 2).sum())
    se = math.sqrt((float(r @ r) / (npts - 2)) / sxx) if npts > 2 else math.inf
    return float(slope), float(se), rms, int(npts)


@dataclass(frozen=True)
class EnvelopeFit:
    """Fitted on-diagonal/off-diagonal decay envelope constants."""

    c1_hat: float
    c2_hat: float
    n_points: int


@dataclass(frozen=True)
class DimensionFit:
    """Fitted dimensions with their windows and residuals.

    d_w_hat is defined as 2 d_f_hat / d_s_hat and d_s_hat is re-derived
    from it, so the identity d_s = 2 d_f / d_w holds bitwise.
    """

    d_f_hat: float
    d_w_hat: float
    d_s_hat: float
    d_f_stderr: float
    d_s_stderr: float
    d_w_stderr: float
    volume_window: tuple
    return_window: tuple
    volume_residual: float
    return_residual: float
    envelope: EnvelopeFit | None = None

    @property
    def strongly_recurrent(self):
        return self.d_s_hat < 2.0

    def fit_rows(self):
        """Rows (quantity, estimate, stderr, window_lo, window_hi)."""
        vw, rw = self.volume_window, self.return_window
        return [
            ("d_f", self.d_f_hat, self.d_f_stderr, vw[0], vw[1]),
            ("d_s", self.d_s_hat, self.d_s_stderr, rw[0], rw[1]),
            ("d_w", self.d_w_hat, self.d_w_stderr, rw[0], rw[1]),
        ]


def estimate_dimensions(g, n_max, volume_window=None, return_window=None,
                        fit_envelope=False):
    """Fit (d_f, d_w, d_s) from volume growth and return decay.

    d_f comes from the mu-volume regression on exact (untruncated) ball
    radii; d_s from the two-step return profile, whose default window
    [16, 0.9 n_max] drops the pre-asymptotic head and the truncation
    shadow, so the profile itself may run past the safe horizon.
    d_w := 2 d_f / d_s is the estimator's definition, not a third fit.
    """
    n_max = int(n_max)
    x = g.origin
    r_exact = g.safe_horizon(x) if g.boundary.size else g.dist_from(x).max()
    if volume_window is None:
        volume_window = (min(16, max(2, r_exact // 8)), r_exact)
    rows = volume_growth(g, x, int(volume_window[1]))
    radii = np.array([r[0] for r in rows], dtype=np.float64)
    vols = np.array([r[1] for r in rows], dtype=np.float64)
    d_f, d_f_se, vol_rms, _ = _loglog_fit(
        radii, vols, volume_window[0], volume_window[1], "volume regression")

    if return_window is None:
        return_window = (16, int(math.floor(0.9 * n_max)))
    ns, rets = return_profile(g, x, n_max, check_boundary=False)
    slope, slope_se, ret_rms, _ = _loglog_fit(
        ns, rets, return_window[0], return_window[1], "return regression")
    d_s_fit = -2.0 * slope
    if d_s_fit <= 0.0:
        raise DegenerateFitError("return profile is not decaying")
    d_s_se = 2.0 * slope_se

    d_w = 2.0 * d_f / d_s_fit
    d_s = 2.0 * d_f / d_w  # re-derived so the identity holds bitwise
    d_w_se = d_w * math.sqrt((d_f_se / d_f) ** 2 + (d_s_se / d_s_fit) ** 2)

    env = None
    if fit_envelope:
        top = min(n_max, r_exact)
        if top < 4:
            raise DegenerateFitError("graph too small for an envelope fit")
        n_grid = np.unique(np.geomspace(4, top, 8).astype(np.int64))
        env = fit_uhk_envelope(g, x, n_grid, d_f, d_w)
    return DimensionFit(
        d_f_hat=float(d_f), d_w_hat=float(d_w), d_s_hat=float(d_s),
        d_f_stderr=float(d_f_se), d_s_stderr=float(d_s_se),
        d_w_stderr=float(d_w_se),
        volume_window=(int(volume_window[0]), int(volume_window[1])),
        return_window=(int(return_window[0]), int(return_window[1])),
        volume_residual=vol_rms, return_residual=ret_rms, envelope=env)


def fit_uhk_envelope(g, x, n_grid, d_f, d_w):
    """Fit (c1, c2) with p_n(x,y) <= c1 n^{-d_f/d_w} exp(-c2 s(x,y,n)).

    s = (d(x,y)^{d_w} / n)^{1/(d_w-1)}. The pair is an envelope by
    construction: a least-squares slope on the log scale, then the
    prefactor shifted up until no grid point violates the bound.
    """
    x = int(x)
    dist = g.dist_from(x)
    ss, la = [], []
    for n in n_grid:
        n = int(n)
        _require_untruncated(g, x, n, True, f"{n}-step envelope slice")
        v = heat_kernel(g, x, n).as_array(g.V)
        nz = np.flatnonzero(v > 0.0)
        s = (dist[nz].astype(np.float64) ** d_w / n) ** (1.0 / (d_w - 1.0))
        ss.append(s)
        la.append(np.log(v[nz]) + (d_f / d_w) * math.log(n))
    if not ss:
        raise DegenerateFitError("envelope fit got an empty n grid")
    s = np.concatenate(ss)
    a = np.concatenate(la)
    # For each candidate decay rate the tightest prefactor is forced by
    # the worst point; keep the pair with the smallest mean slack, which
    # binds the envelope at the typical scale instead of degenerating
    # toward a flat bound or a runaway prefactor.
    s_bar = float(s.mean())
    best = (math.inf, 1e-6, 0.0)
    for c2 in np.geomspace(1e-3, 16.0, 120):
        lc1 = float(np.max(a + c2 * s))
        score = lc1 - c2 * s_bar
        if score < best[0]:
            best = (score, float(c2), lc1)
    return EnvelopeFit(c1_hat=float(math.exp(best[2])), c2_hat=best[1],
                       n_points=int(s.size))


def reversibility_defect(g, n_max, n_triples=100, seed=20240801):
    """Max |mu_x p_n(x,y) - mu_y p_n(y,x)| over random (x, y, n) triples.

    Detailed balance holds exactly on any finite weighted graph, so the
    defect is pure float noise; callers assert it below 1e-12.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(int(n_triples)):
        x = int(rng.integers(0, g.V))
        y = int(rng.integers(0, g.V))
        n = int(rng.integers(0, n_max + 1))
        vx = heat_kernel(g, x, n, check_boundary=False).probs.get(y, 0.0)
        vy = heat_kernel(g, y, n, check_boundary=False).probs.get(x, 0.0)
        worst = max(worst, abs(g.mu[x] * vx - g.mu[y] * vy))
    return float(worst)


# ---------------------------------------------------------------------------
# tube transition probabilities on a geodesic ray

def _tube_geometry(g, ray, J, n, C7, direction, d_w):
    """Resolve (n_w, block center, target center, tube radius) or fail."""
    J = int(J)
    n = int(n)
    direction = int(direction)
    if direction not in (-1, 1):
        raise DomainError("direction must be +1 or -1")
    if J < 0:
        raise DomainError("block index must be >= 0")
    if J == 0 and direction == -1:
        raise DomainError("block 0 has no minus-direction neighbor")
    if not (C7 >= 1.0):
        raise DomainError("C7 must be >= 1")
    d_w = _resolve_dw(g, d_w)
    n_w = int(math.floor(n ** (1.0 / d_w)))
    if n_w < 1:
        raise DomainError(f"n = {n} gives a sub-lattice block scale")
    top = max(J, J + direction) * n_w
    if top > len(ray):
        raise DomainError(
            f"ray of length {len(ray)} is too short for block {J} "
            f"(needs {top})")
    return n_w, ray[J * n_w], ray[(J + direction) * n_w]


def _tube_run(g, ray, J, n, C7, direction, d_w, check_boundary, xs):
    """Batched absorbing DP inside a tube block.

    Returns (values, stay) per start vertex: the probability of staying
    in B(x_{J n_w}, C7 n_w) for all n steps and ending in the radius-n_w
    target block, and the plain n-step stay probability.
    """
    n = int(n)
    if n < 1:
        raise DomainError("n must be >= 1")
    n_w, c_blk, c_tgt = _tube_geometry(g, ray, J, n, C7, direction, d_w)
    r_tube = int(math.floor(C7 * n_w))
    dist_blk = g.dist_from(c_blk)
    xs = np.asarray(xs, dtype=np.int64)
    far = xs[dist_blk[xs] > r_tube]
    if far.size:
        raise DomainError(
            f"start vertex {int(far[0])} sits outside the tube block "
            f"(distance {int(dist_blk[far[0]])} > {r_tube})")
    _require_untruncated(g, c_blk, r_tube, check_boundary,
                         f"radius-{r_tube} tube block")
    tube = np.flatnonzero(dist_blk <= r_tube)
    indptr, indices, p_in, _, verts = induced_csr(g, tube)
    loc = np.full(g.V, -1, dtype=np.int64)
    loc[verts] = np.arange(verts.size, dtype=np.int64)
    v0 = np.zeros((xs.size, verts.size), dtype=np.float64)
    v0[np.arange(xs.size), loc[xs]] = 1.0
    no_pen = np.zeros(verts.size, dtype=np.uint8)
    v = kernels.hk_batch_penalized(indptr, indices, p_in, v0, n, no_pen, 1.0)
    in_target = g.dist_from(c_tgt)[verts] <= n_w
    values = v[:, in_target].sum(axis=1)
    stay = v.sum(axis=1)
    return values, stay


def tube_transition_prob(g, x, ray, J, n, C7, direction, d_w=None,
                         check_boundary=True):
    """Exact P^x(walk stays in the radius-C7 n_w tube block for n steps
    and lands in the next radius-n_w block).

    Blocks sit on the ray: B_J = B(x_{J n_w}, n_w) and the tube block is
    B(x_{J n_w}, C7 n_w), with n_w = floor(n^{1/d_w}).
    """
    values, _ = _tube_run(g, ray, J, n, C7, direction, d_w, check_boundary,
                          [int(x)])
    return float(values[0])


def tube_transition_decomposition(g, x, ray, J, n, C7, direction, d_w=None,
                                  check_boundary=True):
    """(tube value, free target probability, tube exit probability).

    value >= free - exit by inclusion-exclusion; the two bound terms are
    computed independently of the joint value so tests can check it.
    """
    x = int(x)
    n = int(n)
    values, stay = _tube_run(g, ray, J, n, C7, direction, d_w,
                             check_boundary, [x])
    exit_prob = 1.0 - float(stay[0])

    # free-walk target probability, independent of the masked run
    n_w, _, c_tgt = _tube_geometry(g, ray, J, n, C7, direction, d_w)
    _require_untruncated(g, x, n, check_boundary, f"{n}-step walk")
    f0 = np.zeros(g.V, dtype=np.float64)
    f0[x] = 1.0
    vf, fsums = kernels.hk_iterate(g.indptr, g.indices, g.p_in, f0, n,
                                   dist=g.dist_from(x), r0=0)
    _assert_conserved(fsums)
    free = float(vf[g.dist_from(c_tgt) <= n_w].sum())
    return float(values[0]), free, exit_prob


def tube_min_constant(g, ray, I_max, n, C7, d_w=None, check_boundary=True):
    """Min tube transition probability over blocks J <= I_max, starts in
    B_J, and valid directions. This is the lattice-coupling constant the
    coarse-grained comparison uses.
    """
    I_max = int(I_max)
    if I_max < 0:
        raise DomainError("I_max must be >= 0")
    d_w = _resolve_dw(g, d_w)
    n_w = int(math.floor(int(n) ** (1.0 / d_w)))
    if n_w < 1:
        raise DomainError(f"n = {n} gives a sub-lattice block scale")
    best = math.inf
    for J in range(I_max + 1):
        starts = np.flatnonzero(g.dist_from(ray[J * n_w]) <= n_w)
        dirs = (1,) if J == 0 else (-1, 1)
        for direction in dirs:
            values, _ = _tube_run(g, ray, J, n, C7, direction, d_w,
                                  check_boundary, starts)
            best = min(best, float(values.min()))
    return float(best)


# ---------------------------------------------------------------------------
# row emitters for the CLI

def profile_rows(ns, values):
    """Rows (n, value) for the `n,value` CSV contract."""
    return [(int(n), float(v)) for n, v in zip(ns, values)]
