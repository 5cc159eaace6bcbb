"""Coarse-grained diagnostics for both halves of the gap bound.

Upper-bound side: the change-of-measure contraction sum over a ball
cover, split into a far tail (endpoint probabilities only) and a near
core carrying the visit-count penalty exp(-C4*beta*delta_n*visits).

Lower-bound side: the block lattice along a geodesic ray, inductive
site states driven by tube-restricted weight ratios, their comparison
with oriented site percolation, and the Bernoulli domination check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import graphs, kernels, polymer, walk
from .environment import derive_seed
from .errors import ConfigError, DegenerateFitError, DomainError

__all__ = [
    "CGLattice",
    "SiteStateField",
    "PercolationRun",
    "FractionalMomentReport",
    "ConditionalDensityReport",
    "DominationReport",
    "delta_n",
    "fit_c4",
    "volume_constant",
    "fractional_moment_sum",
    "build_cg_lattice",
    "default_c_tilde",
    "assign_site_states",
    "conditional_density_check",
    "percolation_simulate",
    "survival_probability",
    "domination_check",
    "wilson_interval",
    "site_state_rows",
    "SITE_HEADER",
    "SURVIVAL_HEADER",
    "FM_HEADER",
    "fm_row",
]

# domain tag for Bernoulli thinning draws
_TAG_THIN = 0xD06E


def wilson_interval(successes, trials, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ConfigError("need at least one trial")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials
                         + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# upper bound: tilt magnitude, fitted penalty constant, contraction sum

def delta_n(n, n_w, C2, C_Vp, d_f):
    """Tilt magnitude (C_Vp * n * (C2 n_w)^d_f)^(-1/2)."""
    vals = {"n": n, "n_w": n_w, "C2": C2, "C_Vp": C_Vp, "d_f": d_f}
    for name, v in vals.items():
        if not float(v) > 0:
            raise ConfigError(f"{name} must be positive, got {v!r}")
    return float((C_Vp * n * (C2 * n_w) ** d_f) ** -0.5)


def fit_c4(spec, beta, deltas=None):
    """Largest safe constant in lam(b-d) - lam(b) - lam(-d) <= -C4*b*d.

    Taken as the minimum of the ratio over the delta grid, so the penalty
    bound holds at every grid point.  Gaussian disorder gives exactly 1.
    The default grid spans [beta/1000, beta/2]; smaller deltas only add
    cancellation noise to the ratio.
    """
    beta = float(beta)
    if beta <= 0:
        raise ConfigError("beta must be positive")
    if deltas is None:
        deltas = np.geomspace(beta * 1e-3, beta / 2, 25)
    best = math.inf
    for d in np.asarray(deltas, dtype=np.float64):
        d = float(d)
        if d <= 0:
            raise ConfigError("deltas must be positive")
        drop = spec.log_mgf(beta - d) - spec.log_mgf(beta) - spec.log_mgf(-d)
        best = min(best, -drop / (beta * d))
    if not best > 0:
        raise DegenerateFitError(
            f"no positive penalty constant at beta={beta:g}: the cumulant "
            f"drop ratio bottomed out at {best:.3e}")
    return float(best)


def volume_constant(g, d_f, radii, centers=None):
    """Smallest C with weighted ball volume <= C * r^d_f on the samples."""
    if centers is None:
        centers = [g.origin]
    best = 0.0
    for x in centers:
        dist = g.dist_from(int(x))
        for r in radii:
            r = int(r)
            if r < 1:
                raise ConfigError("radii must be >= 1")
            vol = float(g.mu[dist <= r].sum())
            best = max(best, vol / r ** d_f)
    return best


@dataclass(frozen=True)
class FractionalMomentReport:
    n: int
    beta: float
    C1: float
    C2: float
    C4_hat: float
    R_split: float
    n_w: int
    delta: float
    C_Vp: float
    tail: float          # worst-center far sum
    core: float          # worst-center near sum
    total: float
    center: int          # cover center attaining the worst total
    per_center: tuple    # (center, tail, core) rows


def fractional_moment_sum(g, cover, n, beta, C1, C2, R_split, C4_hat=None,
                          spec=None, C_Vp=None, d_w=None, d_f=None,
                          centers=None, delta=None, check_boundary=True):
    """Contraction sum split at ball distance R_split * n_w.

    For each evaluated cover center y the far part sums
    max_x P_x(S_n in B(z,5n_w))^(1/2) over centers z with
    d(B(y,5n_w), B(z,5n_w)) >= R_split*n_w, and the near part the same
    with the per-visit penalty exp(-C4_hat*beta*delta_n) on B(y,C2*n_w).
    The report carries the worst center (the sup over evaluated y).
    Passing delta pins the tilt instead of recomputing it from C2, so a
    C2 sweep can hold everything else fixed.
    """
    n = int(n)
    beta = float(beta)
    if n < 1:
        raise ConfigError("n must be >= 1")
    if beta < 0:
        raise ConfigError("beta must be >= 0")
    if not float(R_split) > 0:
        raise ConfigError("R_split must be positive")
    d_w = walk._resolve_dw(g, d_w)
    if d_f is None:
        d_f = graphs.nominal_dimensions(g.family)["d_f"]
    d_f = float(d_f)
    d_s = 2.0 * d_f / d_w
    n_w = int(math.floor(n ** (1.0 / d_w)))
    if n_w < 1:
        raise DomainError(f"n = {n} gives a sub-lattice block scale")
    if cover.graph is not g:
        raise ConfigError("cover was built on a different graph")
    if cover.n_w != n_w:
        raise ConfigError(
            f"cover scale n_w={cover.n_w} does not match n={n} "
            f"(needs {n_w})")
    if beta > 0 and n < C1 * beta ** (-4.0 / (2.0 - d_s)) - 1e-9:
        raise ConfigError(
            f"n={n} sits below the coarse-graining scale "
            f"{C1 * beta ** (-4.0 / (2.0 - d_s)):.1f} at beta={beta:g}")
    if C_Vp is None:
        C_Vp = volume_constant(
            g, d_f, radii=[n_w, max(1, int(C2 * n_w))],
            centers=cover.centers[:32])
    dn = delta_n(n, n_w, C2, C_Vp, d_f) if delta is None else float(delta)
    if not dn > 0:
        raise ConfigError("delta must be positive")
    if C4_hat is None:
        if beta == 0.0:
            C4_hat = 0.0
        else:
            if spec is None:
                raise ConfigError("pass C4_hat or a disorder spec to fit it")
            # include the operative tilt so the penalty bound holds there
            C4_hat = fit_c4(spec, beta, deltas=np.append(
                np.geomspace(beta * 1e-3, beta / 2, 25), dn))
    pen_factor = math.exp(-float(C4_hat) * beta * dn)

    all_centers = cover.centers
    if centers is None:
        eval_idx = range(all_centers.size)
    else:
        eval_idx = [int(i) for i in centers]
        if any(i < 0 or i >= all_centers.size for i in eval_idx):
            raise ConfigError("center index out of cover range")
    reach = 5 * n_w + n
    rows = []
    worst = None
    for i in eval_idx:
        y = int(all_centers[i])
        walk._require_untruncated(g, y, reach, check_boundary,
                                  f"radius-{reach} contraction sum")
        dist_y = g.dist_from(y)
        starts = np.flatnonzero(dist_y <= 5 * n_w)
        v0 = np.zeros((starts.size, g.V), dtype=np.float64)
        v0[np.arange(starts.size), starts] = 1.0
        pen_mask = (dist_y <= int(C2 * n_w)).astype(np.uint8)
        plain = kernels.hk_batch_penalized(g.indptr, g.indices, g.p_in, v0,
                                           n, pen_mask, 1.0)
        if pen_factor == 1.0:
            pen = plain
        else:
            pen = kernels.hk_batch_penalized(g.indptr, g.indices, g.p_in, v0,
                                             n, pen_mask, pen_factor)
        tail = 0.0
        core = 0.0
        for z in all_centers:
            z = int(z)
            gap = max(0, int(g.dist_from(z)[y]) - 10 * n_w)
            target = g.dist_from(z) <= 5 * n_w
            if gap >= R_split * n_w:
                tail += math.sqrt(float(plain[:, target].sum(axis=1).max()))
            else:
                core += math.sqrt(float(pen[:, target].sum(axis=1).max()))
        rows.append((y, tail, core))
        if worst is None or tail + core > worst[1] + worst[2]:
            worst = (y, tail, core)
    if worst is None:
        raise ConfigError("no cover centers were evaluated")
    return FractionalMomentReport(
        n, beta, float(C1), float(C2), float(C4_hat), float(R_split), n_w,
        dn, float(C_Vp), worst[1], worst[2], worst[1] + worst[2], worst[0],
        tuple(rows))


# ---------------------------------------------------------------------------
# lower bound: block lattice along a ray

class CGLattice:
    """Sites (I, J) with 0 <= J <= I and I - J even, blocks on a ray.

    B_J is the radius-n_w ball around ray vertex J*n_w, the dilated ball
    uses radius floor(C7*n_w).  Built through build_cg_lattice, which
    verifies the ball invariants.
    """

    def __init__(self, g, ray, n, n_w, C7, I_max, d_w):
        self.graph = g
        self.ray = ray
        self.n = int(n)
        self.n_w = int(n_w)
        self.C7 = float(C7)
        self.I_max = int(I_max)
        self.d_w = float(d_w)
        self.r_tube = int(math.floor(self.C7 * self.n_w))
        self.sites = tuple((I, J) for I in range(self.I_max + 1)
                           for J in range(I % 2, I + 1, 2))
        self._masks = {}

    def center(self, J):
        return int(self.ray[int(J) * self.n_w])

    def block_mask(self, J):
        key = ("b", int(J))
        m = self._masks.get(key)
        if m is None:
            d = self.graph.dist_from(self.center(J))
            m = (d <= self.n_w).astype(np.uint8)
            self._masks[key] = m
        return m

    def tube_mask(self, J):
        key = ("t", int(J))
        m = self._masks.get(key)
        if m is None:
            d = self.graph.dist_from(self.center(J))
            m = (d <= self.r_tube).astype(np.uint8)
            self._masks[key] = m
        return m

    def end_mask(self, J, K):
        """Boundary-time mask for a block-J to block-K transition."""
        if abs(int(K) - int(J)) != 1:
            raise ConfigError("blocks must be adjacent")
        both = self.tube_mask(J) | self.tube_mask(K)
        return (self.block_mask(K) & both).astype(np.uint8)

    def up_neighbors(self, site):
        I, J = site
        out = []
        for K in (J + 1, J - 1):
            if 0 <= K <= I + 1 and I + 1 <= self.I_max:
                out.append((I + 1, K))
        return tuple(out)


def build_cg_lattice(g, ray, n, C7, I_max, d_w=None, check_boundary=True):
    """Build the lattice and verify its ball invariants exhaustively."""
    n = int(n)
    I_max = int(I_max)
    C7 = float(C7)
    if n < 1:
        raise ConfigError("block length must be >= 1")
    if I_max < 0:
        raise ConfigError("I_max must be >= 0")
    if not C7 >= 5.0:
        raise ConfigError(f"C7 must be >= 5, got {C7:g}")
    d_w = walk._resolve_dw(g, d_w)
    n_w = int(math.floor(n ** (1.0 / d_w)))
    if n_w < 1:
        raise DomainError(f"n = {n} gives a sub-lattice block scale")
    top = I_max + 1
    if top * n_w > len(ray):
        raise DomainError(
            f"ray of length {len(ray)} is too short: row {I_max} extensions "
            f"need {top * n_w} edges")
    lat = CGLattice(g, ray, n, n_w, C7, I_max, d_w)
    for J in range(top + 1):
        walk._require_untruncated(g, lat.center(J), lat.r_tube,
                                  check_boundary,
                                  f"radius-{lat.r_tube} block {J}")
    # B_J subset of the dilated ball of every neighbor within one step
    for J in range(top + 1):
        ball = np.flatnonzero(lat.block_mask(J))
        for K in range(max(0, J - 1), min(top, J + 1) + 1):
            far = int(g.dist_from(lat.center(K))[ball].max())
            if far > lat.r_tube:
                raise DomainError(
                    f"ball invariant broken: B_{J} reaches distance {far} "
                    f"from center {K} (> {lat.r_tube})")
    # dilated balls with a 2*C7+2 index gap never intersect
    gap = int(math.ceil(2 * C7 + 2))
    for J in range(top + 1):
        for K in range(J + gap, top + 1):
            if np.any(lat.tube_mask(J) & lat.tube_mask(K)):
                raise DomainError(
                    f"dilated balls {J} and {K} intersect despite index "
                    f"gap {K - J} >= {gap}")
    return lat


# ---------------------------------------------------------------------------
# site states

@dataclass
class SiteStateField:
    """Inductive 1-0 states with their ratio evidence.

    X, wtilde, gamma_opt, and nu are keyed by site; wtilde holds the
    (plus, minus) ratios with minus None on the J=0 column; starved
    sites kept X=0 because a tube lost all weight.
    """

    lattice: CGLattice
    beta: float
    c_tilde: float
    replica: int
    X: dict = dc_field(default_factory=dict)
    wtilde: dict = dc_field(default_factory=dict)
    gamma_opt: dict = dc_field(default_factory=dict)
    nu: dict = dc_field(default_factory=dict)
    starved: frozenset = frozenset()


def default_c_tilde(lattice, check_boundary=True):
    """Half the minimum tube transition probability over the lattice."""
    c = walk.tube_min_constant(lattice.graph, lattice.ray, lattice.I_max,
                               lattice.n, lattice.C7, d_w=lattice.d_w,
                               check_boundary=check_boundary)
    return 0.5 * c


def _optimal_row(lattice, prev, X):
    """Extend the per-column (count, path) table by one row.

    prev maps J -> (open count over rows < I-1, lex-smallest path tuple);
    the new table scores paths by open count over rows < I, ties broken
    by the lexicographically smallest column sequence.
    """
    out = {}
    for J, (cnt, path) in prev.items():
        I_prev = len(path) - 1
        step = cnt + int(X[(I_prev, J)])
        for K in (J - 1, J + 1):
            if K < 0:
                continue
            cand = (step, path + (K,))
            cur = out.get(K)
            if cur is None or cand[0] > cur[0] or (
                    cand[0] == cur[0] and cand[1] < cur[1]):
                out[K] = cand
    return out


def assign_site_states(lattice, field, beta, c_tilde):
    """Assign 1-0 states row by row from tube-restricted weight ratios.

    A site opens when the one-block extension ratios of its optimal
    path's restricted weight clear c_tilde (only the +1 direction exists
    at J=0).  A tube that loses every path gives ratio 0, closes the
    site, and flags it as starved.
    """
    beta = float(beta)
    c_tilde = float(c_tilde)
    if not (0.0 < c_tilde < 1.0):
        raise ConfigError(f"c_tilde must sit in (0,1), got {c_tilde:g}")
    g = lattice.graph
    spec = field.spec
    lam = spec.log_mgf(beta)
    reps = np.asarray([field.replica], dtype=np.uint64)
    start = int(lattice.ray[0])

    logw0 = np.full((1, g.V), -np.inf)
    logw0[0, start] = 0.0
    fronts = {(0,): logw0}   # path tuple -> (1, V) log table at time I*n

    def extend(path, K):
        key = path + (K,)
        got = fronts.get(key)
        if got is not None:
            return got
        base = fronts[path]
        I = len(path) - 1
        J = path[-1]
        t0 = field.time_offset + I * lattice.n
        out = polymer.masked_block_steps(
            g, spec, field.seed, reps, base, t0, lattice.n, beta, lam,
            lattice.tube_mask(J), lattice.end_mask(J, K))
        fronts[key] = out
        return out

    ssf = SiteStateField(lattice, beta, c_tilde, int(field.replica))
    starved = set()
    table = {0: (0, (0,))}
    for I in range(lattice.I_max + 1):
        if I > 0:
            table = _optimal_row(lattice, table, ssf.X)
        for J in range(I % 2, I + 1, 2):
            _, path = table[J]
            ssf.gamma_opt[(I, J)] = path
            base = fronts[path]
            log_prefix = polymer._logsumexp(base[0])
            if not math.isfinite(log_prefix):
                starved.add((I, J))
                ssf.X[(I, J)] = 0
                ssf.wtilde[(I, J)] = (0.0, 0.0 if J > 0 else None)
                ssf.nu[(I, J)] = {}
                continue
            probs = np.exp(base[0] - log_prefix)
            s = probs.sum()
            if abs(s - 1.0) > 1e-12:
                probs = probs / s
            sup = np.flatnonzero(probs)
            if np.any(lattice.block_mask(J)[sup] == 0):
                raise DomainError(
                    f"front support leaked out of block {J} at row {I}")
            ssf.nu[(I, J)] = {int(v): float(probs[v]) for v in sup}
            ratios = []
            dirs = (1,) if J == 0 else (1, -1)
            for d in dirs:
                ext = extend(path, J + d)
                tot = polymer._logsumexp(ext[0])
                if math.isfinite(tot):
                    ratios.append(math.exp(tot - log_prefix))
                else:
                    ratios.append(0.0)
                    starved.add((I, J))
            plus = ratios[0]
            minus = ratios[1] if J > 0 else None
            ssf.wtilde[(I, J)] = (plus, minus)
            ok = plus >= c_tilde and (J == 0 or minus >= c_tilde)
            ssf.X[(I, J)] = int(ok)
    ssf.starved = frozenset(starved)
    return ssf


# ---------------------------------------------------------------------------
# conditional density of open sites

@dataclass(frozen=True)
class SiteDensityRow:
    I: int
    J: int
    freq: float            # empirical P(X=1)
    ci_lo: float
    ci_hi: float
    freq_plus: float       # empirical P(wtilde_+ >= c_tilde)
    freq_minus: float      # same for -, nan at J=0
    mean_plus: float       # worst sampled conditional mean, + direction
    mean_minus: float
    var_ratio_plus: float  # worst sampled variance/mean^2, + direction
    var_ratio_minus: float
    chebyshev_plus: bool   # var ratio < eps/8 and mean >= 2*c_tilde
    chebyshev_minus: bool


@dataclass(frozen=True)
class ConditionalDensityReport:
    beta: float
    c_tilde: float
    epsilon: float
    samples: int
    variance_samples: int
    rows: tuple

    def min_freq(self):
        return min(r.freq for r in self.rows)


def conditional_density_check(lattice, spec, beta, c_tilde, samples, seed=0,
                              epsilon=0.2, variance_samples=4):
    """Empirical per-site open frequencies against the Chebyshev route.

    Runs `samples` disorder replicas through assign_site_states; for the
    first `variance_samples` replicas also computes the exact conditional
    mean and second moment of each ratio from the sampled nu, recording
    the worst variance/mean^2 against epsilon/8 and the conditional mean
    against 2*c_tilde.
    """
    from .environment import OmegaField

    samples = int(samples)
    if samples < 1:
        raise ConfigError("need at least one sample")
    if lattice.I_max > 6:
        raise ConfigError("conditional density check caps I_max at 6")
    if not (0 < epsilon < 1):
        raise ConfigError("epsilon must sit in (0,1)")
    g = lattice.graph
    counts = {s: 0 for s in lattice.sites}
    counts_plus = {s: 0 for s in lattice.sites}
    counts_minus = {s: 0 for s in lattice.sites}
    # per site: [max var ratio +, max var ratio -, min mean +, min mean -]
    worst = {s: [0.0, 0.0, math.inf, math.inf] for s in lattice.sites}
    n_var = 0
    for r in range(samples):
        fld = OmegaField(spec, seed, replica=r)
        ssf = assign_site_states(lattice, fld, beta, c_tilde)
        do_var = r < variance_samples
        if do_var:
            n_var += 1
        for s in lattice.sites:
            plus, minus = ssf.wtilde[s]
            counts[s] += ssf.X[s]
            counts_plus[s] += int(plus >= c_tilde)
            if minus is not None:
                counts_minus[s] += int(minus >= c_tilde)
            if do_var and ssf.nu[s]:
                w = worst[s]
                for k, d in ((0, 1), (1, -1)):
                    if d == -1 and s[1] == 0:
                        continue
                    m1, m2 = _ratio_moments(lattice, spec, beta, ssf.nu[s],
                                            s[1], s[1] + d)
                    ratio = m2 / (m1 * m1) - 1.0 if m1 > 0 else math.inf
                    w[k] = max(w[k], ratio)
                    w[2 + k] = min(w[2 + k], m1)
    rows = []
    for s in lattice.sites:
        I, J = s
        lo, hi = wilson_interval(counts[s], samples)
        vr_p, vr_m, m_p, m_m = (worst[s][0], worst[s][1], worst[s][2],
                                worst[s][3])
        if n_var == 0:
            vr_p = vr_m = math.nan
            m_p = m_m = math.nan
        if J == 0:
            vr_m = math.nan
            m_m = math.nan
        che_p = (m_p >= 2 * c_tilde and vr_p < epsilon / 8) \
            if n_var else False
        che_m = (J > 0 and m_m >= 2 * c_tilde and vr_m < epsilon / 8) \
            if n_var else False
        rows.append(SiteDensityRow(
            I, J, counts[s] / samples, lo, hi,
            counts_plus[s] / samples,
            counts_minus[s] / samples if J > 0 else math.nan,
            m_p, m_m, vr_p, vr_m, che_p, che_m))
    return ConditionalDensityReport(float(beta), float(c_tilde),
                                    float(epsilon), samples, n_var,
                                    tuple(rows))


def _ratio_moments(lattice, spec, beta, nu, J, K):
    """Conditional mean and second moment of a one-block ratio given nu."""
    tube = np.flatnonzero(lattice.tube_mask(J))
    end = np.flatnonzero(lattice.end_mask(J, K))
    return polymer.pair_restricted_moment(lattice.graph, spec, beta, nu,
                                          tube, end, lattice.n)


# ---------------------------------------------------------------------------
# oriented site percolation

@dataclass(frozen=True)
class PercolationRun:
    rho: float
    horizon: int
    seed: int
    run: int
    I: tuple
    J: tuple
    open_flags: tuple
    survival: bool


def percolation_simulate(rho, horizon, seed, run=0):
    """One percolation configuration plus its survival flag."""
    rho = float(rho)
    horizon = int(horizon)
    if not (0.0 <= rho <= 1.0):
        raise ConfigError("rho must sit in [0,1]")
    if horizon < 0:
        raise ConfigError("horizon must be >= 0")
    I, J, flags = kernels.perc_sites(seed, int(run), rho, horizon)
    open_map = {(int(a), int(b)): bool(f) for a, b, f in zip(I, J, flags)}
    reach = {(0, 0)} if open_map[(0, 0)] else set()
    frontier = reach
    for row in range(1, horizon + 1):
        nxt = set()
        for (i, j) in frontier:
            for K in (j - 1, j + 1):
                if 0 <= K <= row and open_map.get((row, K)):
                    nxt.add((row, K))
        frontier = nxt
        if not frontier:
            break
    survival = bool(frontier) if horizon > 0 else bool(open_map[(0, 0)])
    return PercolationRun(rho, horizon, int(seed), int(run), tuple(int(v)
                          for v in I), tuple(int(v) for v in J),
                          tuple(bool(f) for f in flags), survival)


def survival_probability(rho_grid, horizon, runs, seed=0):
    """Empirical survival per density with Wilson intervals."""
    horizon = int(horizon)
    runs = int(runs)
    if runs < 1:
        raise ConfigError("need at least one run")
    rows = []
    for rho in rho_grid:
        rho = float(rho)
        if not (0.0 <= rho <= 1.0):
            raise ConfigError("rho must sit in [0,1]")
        flags = kernels.perc_survival(seed, rho, horizon, runs)
        k = int(flags.sum())
        lo, hi = wilson_interval(k, runs)
        rows.append((rho, horizon, runs, k / runs, lo, hi))
    return rows


# ---------------------------------------------------------------------------
# Bernoulli domination check

@dataclass(frozen=True)
class DominationSiteRow:
    I: int
    J: int
    buckets: int          # histories with enough samples
    thin_buckets: int     # histories skipped as too small
    min_freq: float       # worst conditional frequency among kept buckets
    ci_lo: float
    ci_hi: float
    violation: bool       # CI upper bound below alpha*r


@dataclass(frozen=True)
class DominationReport:
    alpha: float
    r: float
    bound: float          # alpha * r
    epsilon: float        # measured or supplied
    constraint_r: bool    # (1-alpha)(1-r)^5 >= epsilon
    constraint_alpha: bool  # (1-alpha)alpha^5 >= epsilon
    feasible: bool
    samples: int
    rows: tuple

    def violations(self):
        return tuple(r for r in self.rows if r.violation)


def domination_check(lattice, spec, beta, c_tilde, r, alpha, samples,
                     seed=0, epsilon=None, force_x=None, min_bucket=25):
    """Check the thinned field Z = X*Y against the alpha*r floor.

    Y is an independent Bernoulli(r) field.  Histories are the exact Z
    values at all earlier sites in the row-major total order; buckets
    with fewer than min_bucket samples are reported but not tested.
    force_x replaces the sampled X field by the constant 0 or 1 for the
    degenerate calibration cases.
    """
    from .environment import OmegaField

    r = float(r)
    alpha = float(alpha)
    samples = int(samples)
    if not (0.0 <= r <= 1.0) or not (0.0 <= alpha <= 1.0):
        raise ConfigError("alpha and r must sit in [0,1]")
    if samples < 1:
        raise ConfigError("need at least one sample")
    if force_x not in (None, 0, 1):
        raise ConfigError("force_x must be None, 0, or 1")
    sites = sorted(lattice.sites)   # row-major total order
    z_tables = []
    x_open = {s: 0 for s in sites}
    for m in range(samples):
        if force_x is None:
            fld = OmegaField(spec, seed, replica=m)
            ssf = assign_site_states(lattice, fld, beta, c_tilde)
            xv = ssf.X
        else:
            xv = {s: int(force_x) for s in sites}
        rng = np.random.default_rng(derive_seed(seed, _TAG_THIN, m))
        y = rng.random(len(sites)) < r
        z = {}
        for k, s in enumerate(sites):
            x_open[s] += xv[s]
            z[s] = int(xv[s] and y[k])
        z_tables.append(z)
    if epsilon is None:
        epsilon = 1.0 - min(x_open[s] / samples for s in sites)
    epsilon = float(epsilon)
    c_r = (1 - alpha) * (1 - r) ** 5 >= epsilon
    c_a = (1 - alpha) * alpha ** 5 >= epsilon
    bound = alpha * r
    rows = []
    for k, s in enumerate(sites):
        buckets = {}
        for z in z_tables:
            hist = tuple(z[t] for t in sites[:k])
            cnt = buckets.setdefault(hist, [0, 0])
            cnt[0] += 1
            cnt[1] += z[s]
        kept = {h: c for h, c in buckets.items() if c[0] >= min_bucket}
        thin = len(buckets) - len(kept)
        if not kept:
            rows.append(DominationSiteRow(s[0], s[1], 0, thin, math.nan,
                                          math.nan, math.nan, False))
            continue
        worst_h = min(kept, key=lambda h: kept[h][1] / kept[h][0])
        tot, ones = kept[worst_h]
        lo, hi = wilson_interval(ones, tot)
        rows.append(DominationSiteRow(s[0], s[1], len(kept), thin,
                                      ones / tot, lo, hi, hi < bound))
    return DominationReport(alpha, r, bound, epsilon, c_r, c_a,
                            c_r and c_a, samples, tuple(rows))


# ---------------------------------------------------------------------------
# row emitters

SITE_HEADER = ("I", "J", "X", "wtilde_plus", "wtilde_minus")
SURVIVAL_HEADER = ("rho", "horizon", "runs", "survival", "ci_lo", "ci_hi")
FM_HEADER = ("n", "beta", "C1", "C2", "R", "tail", "core", "total")


def site_state_rows(ssf):
    rows = []
    for s in sorted(ssf.X):
        plus, minus = ssf.wtilde[s]
        rows.append((s[0], s[1], ssf.X[s], plus,
                     math.nan if minus is None else minus))
    return rows


def fm_row(report):
    return (report.n, report.beta, report.C1, report.C2, report.R_split,
            report.tail, report.core, report.total)
