"""Quenched/annealed free energies, concentration diagnostics, gap scaling.

The quenched free energy is estimated as the replica average of
``(1/n) log Z_n`` at a single large ``n``; the annealed side is the
cumulant generating function of the disorder law and carries no
statistical error.  ``gap_scan`` runs a grid of such estimates with the
step count tied to the coarse-graining scale ``C1 * beta**(-4/(2-d_s))``
and fits the slope of ``log gap`` against ``log beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import graphs, polymer
from .environment import DisorderSpec, derive_seed
from .errors import ConfigError, DegenerateFitError

__all__ = [
    "FreeEnergyEstimate",
    "ConcentrationCheck",
    "GapScan",
    "estimate_free_energy",
    "concentration_check",
    "schedule_steps",
    "default_beta_grid",
    "gap_scan",
    "fit_exponent",
    "scan_rows",
    "scan_summary",
    "SCAN_HEADER",
]

# significance multiplier for including a gap estimate in the log-log fit
NOISE_SIGMA = 3.0

_DEFAULT_WINDOWS = {"line": (0.4, 1.2), "gasket": (0.6, 1.4)}

# domain tags for the job-to-seed map
_TAG_POINT = 0x46455054


@dataclass(frozen=True)
class FreeEnergyEstimate:
    """Replica-averaged quenched free energy against the exact annealed one."""

    beta: float
    n: int
    replicas: int
    f_q_hat: float
    stderr: float
    f_a: float
    gap_hat: float
    gap_stderr: float

    def __post_init__(self):
        if self.replicas < 2:
            raise ConfigError("need at least 2 replicas for a standard error")
        if not math.isfinite(self.f_q_hat) or not math.isfinite(self.f_a):
            raise ConfigError("free-energy fields must be finite")


@dataclass(frozen=True)
class ConcentrationCheck:
    """Sample variance of log Z per step count, with a linear-in-n fit."""

    beta: float
    replicas: int
    rows: tuple          # (n, variance) pairs
    k_hat: float         # fitted slope of variance vs n
    intercept: float
    residuals: tuple
    ratio_bound: float   # max over the grid of variance / n


@dataclass(frozen=True)
class GapScan:
    graph: str
    d_s: float
    estimates: tuple     # FreeEnergyEstimate per grid point
    used: tuple          # parallel bools: included in the exponent fit
    slope: float
    ci: tuple            # (lo, hi)
    theoretical_exponent: float

    def __post_init__(self):
        betas = [e.beta for e in self.estimates]
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ConfigError("beta grid must be strictly increasing")
        if len(self.used) != len(self.estimates):
            raise ConfigError("used mask must match the estimate list")
        for e, u in zip(self.estimates, self.used):
            if u and not e.gap_hat > 0:
                raise ConfigError("fit may only use points with positive gap")

    def excluded(self):
        return tuple(e.beta for e, u in zip(self.estimates, self.used) if not u)


def _beta_bits(beta):
    return int(np.float64(beta).view(np.uint64))


def estimate_free_energy(g, spec, beta, n, R, seed, *, x=None,
                         check_boundary=True):
    """Estimate f_q at one (beta, n) from R independent replicas.

    f_a = log_mgf(beta) is exact, so the gap inherits the quenched
    standard error unchanged.
    """
    n = int(n)
    R = int(R)
    if R < 2:
        raise ConfigError(f"need at least 2 replicas, got {R}")
    if n < 1:
        raise ConfigError("step count must be >= 1")
    x = g.origin if x is None else int(x)
    beta = float(beta)
    if beta == 0.0:
        # weights are walk probabilities; log Z = 0 for every replica
        polymer.partition_function(g, _probe_field(spec, seed), x, n, 0.0,
                                   check_boundary=check_boundary)
        return FreeEnergyEstimate(0.0, n, R, 0.0, 0.0, 0.0, 0.0, 0.0)
    logz = polymer.log_partition_batch(
        g, spec, seed, x, n, beta, np.arange(R, dtype=np.uint64),
        check_boundary=check_boundary)
    per_step = logz / n
    f_q = float(per_step.mean())
    stderr = float(per_step.std(ddof=1) / math.sqrt(R))
    f_a = spec.log_mgf(beta)
    return FreeEnergyEstimate(beta, n, R, f_q, stderr, f_a, f_a - f_q, stderr)


def _probe_field(spec, seed):
    from .environment import OmegaField
    return OmegaField(spec, seed, replica=0)


def concentration_check(g, spec, beta, n_grid, R, seed, *, x=None,
                        check_boundary=True):
    """Variance of log Z at each n in n_grid, from one shared trace run.

    One batch evolves to max(n_grid) with per-step totals recorded, so the
    variance table is consistent across n.  At beta=0 every replica's log Z
    coincides bit for bit and the table is exactly zero.
    """
    R = int(R)
    if R < 2:
        raise ConfigError(f"need at least 2 replicas, got {R}")
    n_grid = [int(v) for v in n_grid]
    if not n_grid or any(v < 1 for v in n_grid):
        raise ConfigError("n grid entries must be >= 1")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("n grid must be strictly increasing")
    x = g.origin if x is None else int(x)
    n_max = n_grid[-1]
    _, trace = polymer.log_partition_batch(
        g, spec, seed, x, n_max, float(beta),
        np.arange(R, dtype=np.uint64), check_boundary=check_boundary,
        record_trace=True)
    rows = []
    for n in n_grid:
        var = float(trace[:, n - 1].var(ddof=1))
        rows.append((n, var))
    ns = np.array([r[0] for r in rows], dtype=np.float64)
    vs = np.array([r[1] for r in rows], dtype=np.float64)
    if len(rows) >= 2:
        k_hat, intercept = np.polyfit(ns, vs, 1)
    else:
        k_hat, intercept = (vs[0] / ns[0], 0.0)
    resid = vs - (k_hat * ns + intercept)
    return ConcentrationCheck(float(beta), R, tuple(rows), float(k_hat),
                              float(intercept), tuple(float(r) for r in resid),
                              float(np.max(vs / ns)))


def schedule_steps(beta, d_s, *, C1=32.0, n_min=64, n_max=12288):
    """Step count for a scan point: at least C1 * beta**(-4/(2-d_s))."""
    beta = float(beta)
    if beta <= 0:
        raise ConfigError("beta must be positive")
    scale = C1 * beta ** (-4.0 / (2.0 - d_s))
    n = max(int(n_min), int(math.ceil(scale)))
    if n > n_max:
        raise ConfigError(
            f"beta={beta:g} needs n >= {n} > n_max={n_max}; raise n_max or "
            f"shrink the window")
    return n


def default_beta_grid(family, points=9):
    if family not in _DEFAULT_WINDOWS:
        raise ConfigError(f"no default beta window for graph family "
                          f"{family!r}")
    lo, hi = _DEFAULT_WINDOWS[family]
    return np.linspace(lo, hi, int(points))


def gap_scan(g, spec, beta_grid, R, seed, *, d_s=None, schedule=None,
             C1=32.0, n_min=64, n_max=12288, x=None, check_boundary=True):
    """Free-energy gap over a beta grid plus the fitted log-log slope.

    Points whose gap sits below NOISE_SIGMA standard errors are excluded
    from the fit and reported via GapScan.excluded().
    """
    betas = [float(b) for b in beta_grid]
    if len(betas) < 1 or any(b <= 0 for b in betas):
        raise ConfigError("beta grid must contain positive values")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ConfigError("beta grid must be strictly increasing")
    if d_s is None:
        d_s = graphs.nominal_dimensions(g.family)["d_s"]
    d_s = float(d_s)
    exponent = 4.0 / (2.0 - d_s)
    estimates = []
    for beta in betas:
        n = int(schedule(beta)) if schedule is not None else schedule_steps(
            beta, d_s, C1=C1, n_min=n_min, n_max=n_max)
        if n < C1 * beta ** (-exponent) - 1e-9:
            raise ConfigError(
                f"schedule gives n={n} below the coarse-graining scale "
                f"{C1 * beta ** (-exponent):.1f} at beta={beta:g}")
        point_seed = derive_seed(seed, _TAG_POINT, _beta_bits(beta), n)
        estimates.append(estimate_free_energy(
            g, spec, beta, n, R, point_seed, x=x,
            check_boundary=check_boundary))
    used = tuple(e.gap_hat > NOISE_SIGMA * e.gap_stderr for e in estimates)
    if not any(used):
        lines = ", ".join(
            f"beta={e.beta:g}: gap={e.gap_hat:.3e} stderr={e.gap_stderr:.3e}"
            for e in estimates)
        raise DegenerateFitError(
            f"every gap estimate is below the {NOISE_SIGMA:g}-sigma noise "
            f"floor; raise R or beta ({lines})")
    slope, lo, hi = _fit_loglog(
        [e.beta for e, u in zip(estimates, used) if u],
        [e.gap_hat for e, u in zip(estimates, used) if u],
        [e.gap_stderr for e, u in zip(estimates, used) if u])
    return GapScan(g.family, d_s, tuple(estimates), used, slope, (lo, hi),
                   exponent)


def fit_exponent(scan):
    """Refit the scan's log-log slope; returns (slope, ci_lo, ci_hi)."""
    pts = [(e.beta, e.gap_hat, e.gap_stderr)
           for e, u in zip(scan.estimates, scan.used) if u]
    return _fit_loglog([p[0] for p in pts], [p[1] for p in pts],
                       [p[2] for p in pts])


def _fit_loglog(betas, gaps, stderrs):
    """Weighted least squares of log gap on log beta.

    The response variance comes from the delta method,
    var(log gap) = (stderr/gap)^2.  A zero stderr marks the point as
    exact: with two or more exact points the slope comes from them alone
    (they must be collinear), with one the line is constrained through it.
    The CI is the known-variance normal interval from the same weights.
    """
    if len(betas) < 3:
        raise DegenerateFitError(
            f"exponent fit needs at least 3 usable points, got {len(betas)}")
    if any(not g > 0 for g in gaps):
        raise DegenerateFitError("exponent fit needs positive gaps")
    x = np.log(np.asarray(betas, dtype=np.float64))
    y = np.log(np.asarray(gaps, dtype=np.float64))
    sig = np.asarray(stderrs, dtype=np.float64) / np.asarray(gaps)
    exact = sig == 0.0
    if exact.all():
        slope, _ = np.polyfit(x, y, 1)
        resid = y - (slope * x + (y - slope * x).mean())
        if np.max(np.abs(resid)) > 1e-7:
            raise DegenerateFitError("exact points are not collinear")
        return float(slope), float(slope), float(slope)
    if exact.sum() >= 2:
        xe, ye = x[exact], y[exact]
        slope, _ = np.polyfit(xe, ye, 1)
        resid = ye - (slope * xe + (ye - slope * xe).mean())
        if np.max(np.abs(resid)) > 1e-7:
            raise DegenerateFitError("exact points are not collinear")
        return float(slope), float(slope), float(slope)
    w = 1.0 / sig[~exact] ** 2
    if exact.sum() == 1:
        # regression constrained through the exact point
        x0, y0 = float(x[exact][0]), float(y[exact][0])
        dx, dy = x[~exact] - x0, y[~exact] - y0
        denom = float(np.sum(w * dx * dx))
        if denom == 0.0:
            raise DegenerateFitError("no spread in beta among noisy points")
        slope = float(np.sum(w * dx * dy) / denom)
        se = math.sqrt(1.0 / denom)
        return slope, slope - 1.96 * se, slope + 1.96 * se
    xbar = float(np.sum(w * x) / np.sum(w))
    dx = x - xbar
    denom = float(np.sum(w * dx * dx))
    if denom == 0.0:
        raise DegenerateFitError("no spread in beta among usable points")
    slope = float(np.sum(w * dx * y) / denom)
    se = math.sqrt(1.0 / denom)
    return slope, slope - 1.96 * se, slope + 1.96 * se


SCAN_HEADER = ("beta", "n", "replicas", "fq_hat", "fq_stderr", "fa", "gap",
               "gap_stderr", "used_in_fit")


def scan_rows(scan):
    """Rows for the scan CSV, one per grid point, in SCAN_HEADER order."""
    rows = []
    for e, u in zip(scan.estimates, scan.used):
        rows.append((e.beta, e.n, e.replicas, e.f_q_hat, e.stderr, e.f_a,
                     e.gap_hat, e.gap_stderr, int(u)))
    return rows


def scan_summary(scan):
    return {
        "graph": scan.graph,
        "ds": scan.d_s,
        "slope": scan.slope,
        "ci": [scan.ci[0], scan.ci[1]],
        "theoretical_exponent": scan.theoretical_exponent,
    }
