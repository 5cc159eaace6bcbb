"""Experiment runner: subcommands over config files, CSV/JSON artifacts.

Every run resolves its config (defaults + flag overrides), derives all
randomness from the single run.seed, and stamps version, config hash,
seed, and the resolved config itself into each output header, so any
artifact can be replayed byte-for-byte from what it carries.

Exit codes: 0 success, 2 config/validation error, 3 numeric-domain
error (truncation too small, degenerate fit, starved tube).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import __version__, coarse_grain, config, free_energy, graphs, walk
from .environment import OmegaField
from .errors import ConfigError, DomainError

SUBCOMMANDS = ("graph", "heatkernel", "freeenergy", "gapscan", "cgupper",
               "cglower", "percolation")


# ---------------------------------------------------------------------------
# handlers: resolved config -> [(table_name, header, rows), ...]

def _run_graph(cfg):
    g = config.build_graph(cfg, "graph")
    out_dir = config.get(cfg, "output.dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    dump = os.path.join(out_dir, "graph.txt")
    graphs.save_graph(g, dump)
    header = ("family", "size", "vertices", "edges", "origin")
    rows = [(g.family, g.level, g.V, g.E, g.origin)]
    return [("graph", header, rows)]


def _run_heatkernel(cfg):
    g = config.build_graph(cfg, "heatkernel")
    n_max = config.require(cfg, "run.n", "heatkernel")
    fit = walk.estimate_dimensions(g, n_max)
    nominal = graphs.nominal_dimensions(g.family)
    rows = [
        ("df_hat", fit.d_f_hat), ("dw_hat", fit.d_w_hat),
        ("ds_hat", fit.d_s_hat),
        ("df_stderr", fit.d_f_stderr), ("dw_stderr", fit.d_w_stderr),
        ("ds_stderr", fit.d_s_stderr),
        ("df_nominal", nominal["d_f"]), ("dw_nominal", nominal["d_w"]),
        ("ds_nominal", nominal["d_s"]),
        ("volume_window_lo", fit.volume_window[0]),
        ("volume_window_hi", fit.volume_window[1]),
        ("return_window_lo", fit.return_window[0]),
        ("return_window_hi", fit.return_window[1]),
        ("volume_residual", fit.volume_residual),
        ("return_residual", fit.return_residual),
    ]
    return [("heatkernel", ("key", "value"), rows)]


def _run_freeenergy(cfg):
    g = config.build_graph(cfg, "freeenergy")
    spec = config.build_spec(cfg, "freeenergy")
    beta = config.require(cfg, "run.beta", "freeenergy")
    n = config.require(cfg, "run.n", "freeenergy")
    est = free_energy.estimate_free_energy(
        g, spec, beta, n, config.get(cfg, "run.replicas"),
        config.get(cfg, "run.seed"))
    header = free_energy.SCAN_HEADER[:-1]
    rows = [(est.beta, est.n, est.replicas, est.f_q_hat, est.stderr,
             est.f_a, est.gap_hat, est.gap_stderr)]
    return [("freeenergy", header, rows)]


def _fixture_scan(cfg):
    p = float(config.get(cfg, "run.fixture_exponent", 4.0))
    if not p > 0:
        raise ConfigError("run.fixture_exponent must be positive")
    grid = config.get(cfg, "run.beta_grid")
    if grid is None:
        grid = [0.4 + 0.1 * k for k in range(9)]
    ests = tuple(
        free_energy.FreeEnergyEstimate(
            beta=float(b), n=2, replicas=2, f_q_hat=0.0, stderr=0.0,
            f_a=float(b) ** p, gap_hat=float(b) ** p, gap_stderr=0.0)
        for b in grid)
    scan = free_energy.GapScan(
        graph="fixture", d_s=2.0 - 4.0 / p, estimates=ests,
        used=(True,) * len(ests), slope=math.nan, ci=(math.nan, math.nan),
        theoretical_exponent=p)
    slope, lo, hi = free_energy.fit_exponent(scan)
    return dataclasses.replace(scan, slope=slope, ci=(lo, hi))


def _run_gapscan(cfg):
    if config.get(cfg, "run.fixture") == "beta_power":
        scan = _fixture_scan(cfg)
    else:
        g = config.build_graph(cfg, "gapscan")
        spec = config.build_spec(cfg, "gapscan")
        grid = config.get(cfg, "run.beta_grid")
        if grid is None:
            grid = free_energy.default_beta_grid(g.family)
        kw = {}
        for src, dst in (("run.schedule.C1", "C1"),
                         ("run.schedule.n_min", "n_min"),
                         ("run.schedule.n_max", "n_max")):
            v = config.get(cfg, src)
            if v is not None:
                kw[dst] = v
        scan = free_energy.gap_scan(
            g, spec, grid, config.get(cfg, "run.replicas"),
            config.get(cfg, "run.seed"), **kw)
    summary = free_energy.scan_summary(scan)
    sum_header = ("graph", "ds", "slope", "ci_lo", "ci_hi",
                  "theoretical_exponent")
    sum_rows = [(summary["graph"], summary["ds"], summary["slope"],
                 summary["ci"][0], summary["ci"][1],
                 summary["theoretical_exponent"])]
    return [("gapscan", free_energy.SCAN_HEADER, free_energy.scan_rows(scan)),
            ("gapscan_summary", sum_header, sum_rows)]


def _run_cgupper(cfg):
    g = config.build_graph(cfg, "cgupper")
    beta = float(config.require(cfg, "run.beta", "cgupper"))
    n = config.require(cfg, "coarse_grain.n", "cgupper")
    C1 = config.require(cfg, "coarse_grain.C1", "cgupper")
    C2s = config.require(cfg, "coarse_grain.C2", "cgupper")
    if not isinstance(C2s, list):
        C2s = [C2s]
    R_split = config.require(cfg, "coarse_grain.R_split", "cgupper")
    d_w = graphs.nominal_dimensions(g.family)["d_w"]
    n_w = int(math.floor(n ** (1.0 / d_w)))
    reach = 5 * n_w + n
    rr = config.get(cfg, "coarse_grain.region_radius")
    safe = g.boundary_dist() > reach
    if rr is None:
        region = np.flatnonzero(safe)
    else:
        region = np.flatnonzero(safe
                                & (g.dist_from(g.origin) <= int(rr)))
    if region.size == 0:
        raise DomainError(
            f"no vertex clears the radius-{reach} reach; use a larger graph")
    cover = graphs.vitali_cover(g, region, n_w)
    spec = None
    c4 = config.get(cfg, "coarse_grain.C4_hat")
    if c4 is None and beta > 0:
        spec = config.build_spec(cfg, "cgupper")
    rows = []
    for C2 in C2s:
        rep = coarse_grain.fractional_moment_sum(
            g, cover, n, beta, C1, float(C2), R_split, C4_hat=c4, spec=spec,
            delta=config.get(cfg, "coarse_grain.delta"))
        rows.append(coarse_grain.fm_row(rep))
    return [("cgupper", coarse_grain.FM_HEADER, rows)]


def _run_cglower(cfg):
    g = config.build_graph(cfg, "cglower")
    spec = config.build_spec(cfg, "cglower")
    beta = float(config.require(cfg, "run.beta", "cglower"))
    n = config.require(cfg, "coarse_grain.n", "cglower")
    C7 = config.require(cfg, "coarse_grain.C7", "cglower")
    I_max = config.require(cfg, "coarse_grain.I_max", "cglower")
    d_w = graphs.nominal_dimensions(g.family)["d_w"]
    n_w = int(math.floor(n ** (1.0 / d_w)))
    length = config.get(cfg, "coarse_grain.ray_length",
                        (I_max + 1) * n_w)
    ray = graphs.geodesic_ray(g, length)
    lattice = coarse_grain.build_cg_lattice(g, ray, n, C7, I_max)
    ct = config.get(cfg, "coarse_grain.c_tilde", "auto")
    ct = coarse_grain.default_c_tilde(lattice) if ct == "auto" else float(ct)
    seed = config.get(cfg, "run.seed")
    ssf = coarse_grain.assign_site_states(
        lattice, OmegaField(spec, seed, replica=0), beta, ct)
    tables = [("cglower", coarse_grain.SITE_HEADER,
               coarse_grain.site_state_rows(ssf))]
    samples = config.get(cfg, "coarse_grain.samples")
    if samples:
        rep = coarse_grain.conditional_density_check(
            lattice, spec, beta, ct, samples, seed=seed)
        header = ("I", "J", "freq", "ci_lo", "ci_hi", "freq_plus",
                  "freq_minus", "mean_plus", "mean_minus",
                  "var_ratio_plus", "var_ratio_minus")
        rows = [(r.I, r.J, r.freq, r.ci_lo, r.ci_hi, r.freq_plus,
                 r.freq_minus, r.mean_plus, r.mean_minus,
                 r.var_ratio_plus, r.var_ratio_minus) for r in rep.rows]
        tables.append(("cglower_density", header, rows))
    return tables


def _run_percolation(cfg):
    rho_grid = config.require(cfg, "run.rho_grid", "percolation")
    horizon = config.require(cfg, "run.horizon", "percolation")
    rows = coarse_grain.survival_probability(
        rho_grid, horizon, config.get(cfg, "run.replicas"),
        seed=config.get(cfg, "run.seed"))
    return [("percolation", coarse_grain.SURVIVAL_HEADER, rows)]


_HANDLERS = {
    "graph": _run_graph,
    "heatkernel": _run_heatkernel,
    "freeenergy": _run_freeenergy,
    "gapscan": _run_gapscan,
    "cgupper": _run_cgupper,
    "cglower": _run_cglower,
    "percolation": _run_percolation,
}


# ---------------------------------------------------------------------------
# artifact writing

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def write_tables(tables, cfg, out_dir, fmt):
    os.makedirs(out_dir, exist_ok=True)
    view = config.experiment_view(cfg)
    meta = {
        "version": __version__,
        "config_hash": config.config_hash(cfg),
        "seed": config.get(cfg, "run.seed"),
        "config": view,
    }
    paths = []
    for name, header, rows in tables:
        rows = [[_cell(v) for v in row] for row in rows]
        path = os.path.join(out_dir, f"{name}.{fmt}")
        if fmt == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(f"# polyfract {meta['version']}\n")
                fh.write(f"# config_hash: {meta['config_hash']}\n")
                fh.write(f"# seed: {meta['seed']}\n")
                fh.write(f"# config: {config.canonical(view)}\n")
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        else:
            doc = dict(meta, table=name, header=list(header), rows=rows)
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
                fh.write("\n")
        paths.append((path, len(rows)))
    return paths


def _typed_cell(s):
    """int where the text is an integer literal, float where it parses,
    the raw string otherwise; keeps CSV and JSON reads interchangeable."""
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_table(path):
    """Parse one artifact back into (meta, header, rows).

    Cells come back typed (int/float/str) for both formats, so a replay
    comparison can hold integer fields to exact equality and real fields
    to a tolerance.
    """
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return doc, doc["header"], doc["rows"]
    meta = {}
    rows = []
    header = None
    with open(path, encoding="utf-8") as fh:
        plain = []
        for line in fh:
            if line.startswith("# "):
                body = line[2:].rstrip("\n")
                if ": " in body:
                    k, v = body.split(": ", 1)
                    meta[k] = v
                elif body.startswith("polyfract "):
                    meta["version"] = body.split(" ", 1)[1]
                continue
            plain.append(line)
        for rec in csv.reader(plain):
            if not rec:
                continue
            if header is None:
                header = rec
            else:
                rows.append([_typed_cell(c) for c in rec])
    if "config" in meta:
        meta["config"] = json.loads(meta["config"])
    if "seed" in meta:
        meta["seed"] = int(meta["seed"])
    return meta, header or [], rows


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(
        prog="polyfract",
        description="Polymer-in-disorder experiments on fractal graphs.")
    parser.add_argument("--version", action="version",
                        version=f"polyfract {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.seed")
        p.add_argument("--workers", type=int,
                       default=os.cpu_count() or 1,
                       help="worker count (results are identical for any "
                            "value; reductions are fixed-order)")
        p.add_argument("--out", default=None, help="override output.dir")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="override output.format")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers is not None and args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = config.load_config(args.config)
        resolved = config.resolve(cfg, seed=args.seed, out=args.out,
                                  fmt=args.format)
        tables = _HANDLERS[args.command](resolved)
        paths = write_tables(tables, resolved,
                             config.get(resolved, "output.dir"),
                             config.get(resolved, "output.format"))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DomainError as e:
        print(f"domain error: {e}", file=sys.stderr)
        return 3
    for path, nrows in paths:
        print(f"wrote {path} ({nrows} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
