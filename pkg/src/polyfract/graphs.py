"""Graph construction for the walk and polymer models.

Two built-in families plus an escape hatch:

* ``gasket``: the level-L Sierpinski gasket graph in skewed integer
  coordinates (p, q).  Level 0 is a single triangle; level k+1 glues
  three level-k copies at their corners.  Vertices carry the encoded
  key (p << 32) | q, which does not depend on the level, so disorder
  fields evaluated through these keys agree between a graph and any
  larger graph containing it.
* ``line``: the integer segment {-radius, ..., radius} with
  nearest-neighbour edges.  Keys are x + 2**31.
* ``custom``: explicit vertex/edge lists with optional positive edge
  weights; keys equal vertex ids.

The walk moves from x to neighbour y with probability mu_xy / mu_x,
mu_x = sum_y mu_xy; built-in families use unit weights, which makes
this the simple random walk.  Adjacency is stored in CSR form where
row y lists the neighbours x of y, and p_in[e] is the probability of
stepping from indices[e] into y.  Kernels consume that layout
directly.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, SizeLimitError

MAX_GASKET_LEVEL = 12
MAX_LINE_RADIUS = 1 << 22

_KEY_MASK = (1 << 32) - 1


class WeightedGraph:
    """Immutable graph with CSR adjacency and cached BFS distances."""

    def __init__(self, family, level, indptr, indices, weights, site_key,
                 origin, boundary, coords=None):
        self.family = family
        self.level = int(level)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.site_key = np.ascontiguousarray(site_key, dtype=np.uint64)
        self.origin = int(origin)
        self.boundary = np.ascontiguousarray(boundary, dtype=np.int64)
        self.coords = coords
        self.V = self.indptr.shape[0] - 1
        self.E = self.indices.shape[0] // 2
        self.deg = np.diff(self.indptr).astype(np.int64)
        self.mu = np.add.reduceat(self.weights, self.indptr[:-1])
        # row y holds in-neighbours x; the step probability x -> y is
        # mu_xy / mu_x, and mu_xy is the stored weight of this entry
        self.p_in = self.weights / self.mu[self.indices]
        self.logp_in = np.log(self.p_in)
        self._dist = {}
        self._bdist = None

    def neighbors(self, x):
        return self.indices[self.indptr[x]:self.indptr[x + 1]]

    def dist_from(self, source):
        """Full BFS distance array from one vertex, cached."""
        source = int(source)
        d = self._dist.get(source)
        if d is None:
            d = kernels.bfs_distances(self.indptr, self.indices, source, -1)
            self._dist[source] = d
        return d

    def distance(self, x, y):
        d = int(self.dist_from(x)[y])
        assert d >= 0, "graph must be connected"
        return d

    def ball(self, x, r):
        """Ids of vertices within graph distance r of x."""
        return np.flatnonzero(self.dist_from(x) <= r)

    def boundary_dist(self):
        """Distance of every vertex to the nearest boundary vertex."""
        if self._bdist is None:
            if self.boundary.size == 0:
                self._bdist = np.full(self.V, np.iinfo(np.int64).max // 2,
                                      dtype=np.int64)
            else:
                self._bdist = multi_source_distances(self, self.boundary)
        return self._bdist

    def safe_horizon(self, x):
        """Largest n with B(x, n) free of boundary vertices."""
        return int(self.boundary_dist()[x]) - 1

    def report_constants(self):
        """Weight and degree bounds the model assumes."""
        wmax = float(self.weights.max())
        wmin = float(self.weights.min())
        return {"C_mu": max(wmax, 1.0 / wmin), "max_degree": int(self.deg.max())}


def multi_source_distances(g, sources):
    """BFS distances to the nearest vertex of `sources`; -1 if unreached."""
    dist = np.full(g.V, -1, dtype=np.int64)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    dist[frontier] = 0
    d = 0
    while frontier.size:
        starts = g.indptr[frontier]
        counts = g.indptr[frontier + 1] - starts
        total = int(counts.sum())
        offs = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])),
                         counts)
        nbrs = g.indices[np.arange(total, dtype=np.int64) + offs]
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        if nbrs.size == 0:
            break
        d += 1
        dist[nbrs] = d
        frontier = nbrs
    return dist


def _csr_from_edges(V, edges, weights):
    """CSR adjacency, both directions, rows and columns ascending."""
    edges = np.asarray(edges, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    both = np.concatenate([edges, edges[:, ::-1]], axis=0)
    wboth = np.concatenate([weights, weights])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    wboth = wboth[order]
    indptr = np.zeros(V + 1, dtype=np.int64)
    np.add.at(indptr, both[:, 0] + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, np.ascontiguousarray(both[:, 1]), wboth


def _gasket_edges(level):
    # vertices encoded as (p << 32) | q; translation preserves tuple order
    edges = {(0, 1), (0, 1 << 32), (1, 1 << 32)}
    for k in range(level):
        sp = (1 << k) << 32
        sq = 1 << k
        edges |= {(a + sp, b + sp) for a, b in edges} \
            | {(a + sq, b + sq) for a, b in edges}
    return edges


def build_gasket(level):
    """Level-L gasket graph, origin at the corner (0, 0), unit weights.

    The boundary is the pair of far corners (2**L, 0) and (0, 2**L).
    """
    level = int(level)
    if level < 0:
        raise ConfigError("gasket level must be >= 0")
    if level > MAX_GASKET_LEVEL:
        raise SizeLimitError(
            f"gasket level {level} exceeds the cap {MAX_GASKET_LEVEL}")
    edges = _gasket_edges(level)
    enc = sorted({a for e in edges for a in e})
    V = len(enc)
    assert V == (3 ** (level + 1) + 3) // 2
    assert len(edges) == 3 ** (level + 1)
    idx = {c: i for i, c in enumerate(enc)}
    earr = np.array([(idx[a], idx[b]) for a, b in edges], dtype=np.int64)
    indptr, indices, w = _csr_from_edges(V, earr, np.ones(len(edges)))
    keys = np.array(enc, dtype=np.uint64)
    enc_arr = np.array(enc, dtype=np.int64)
    coords = np.stack([enc_arr >> 32, enc_arr & _KEY_MASK], axis=1)
    side = 1 << level
    boundary = np.sort(np.array([idx[side << 32], idx[side]], dtype=np.int64))
    return WeightedGraph("gasket", level, indptr, indices, w, keys, idx[0],
                         boundary, coords)


def build_line(radius):
    """Path graph on {-radius, ..., radius}, origin at 0, unit weights."""
    radius = int(radius)
    if radius < 1:
        raise ConfigError("line radius must be >= 1")
    if radius > MAX_LINE_RADIUS:
        raise SizeLimitError(
            f"line radius {radius} exceeds the cap {MAX_LINE_RADIUS}")
    V = 2 * radius + 1
    xs = np.arange(-radius, radius + 1, dtype=np.int64)
    earr = np.stack([np.arange(V - 1), np.arange(1, V)], axis=1)
    indptr, indices, w = _csr_from_edges(V, earr, np.ones(V - 1))
    keys = (xs + (1 << 31)).astype(np.uint64)
    boundary = np.array([0, V - 1], dtype=np.int64)
    return WeightedGraph("line", radius, indptr, indices, w, keys, radius,
                         boundary, coords=xs)


def build_custom(n_vertices, edges, weights=None, origin=0, boundary=(),
                 site_key=None):
    """Graph from an explicit edge list; keys default to vertex ids."""
    V = int(n_vertices)
    if V <= 0:
        raise ConfigError("custom graph needs at least one vertex")
    earr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if earr.shape[0] == 0:
        raise ConfigError("custom graph needs at least one edge")
    if np.any(earr < 0) or np.any(earr >= V):
        raise ConfigError("edge endpoint out of range")
    if np.any(earr[:, 0] == earr[:, 1]):
        raise ConfigError("self loops are not allowed")
    canon = np.sort(earr, axis=1)
    if np.unique(canon, axis=0).shape[0] != canon.shape[0]:
        raise ConfigError("duplicate edges are not allowed")
    if weights is None:
        w = np.ones(canon.shape[0], dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (canon.shape[0],):
            raise ConfigError("need one weight per edge")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ConfigError("edge weights must be positive and finite")
    indptr, indices, wcsr = _csr_from_edges(V, canon, w)
    if np.any(np.diff(indptr) == 0):
        raise ConfigError("isolated vertices are not allowed")
    if site_key is None:
        keys = np.arange(V, dtype=np.uint64)
    else:
        keys = np.asarray(site_key, dtype=np.uint64)
        if keys.shape != (V,) or np.unique(keys).size != V:
            raise ConfigError("site keys must be one distinct key per vertex")
    boundary = np.asarray(sorted(int(b) for b in boundary), dtype=np.int64)
    if boundary.size and (boundary[0] < 0 or boundary[-1] >= V):
        raise ConfigError("boundary vertex out of range")
    origin = int(origin)
    if origin < 0 or origin >= V:
        raise ConfigError("origin out of range")
    g = WeightedGraph("custom", 0, indptr, indices, wcsr, keys, origin,
                      boundary)
    if np.any(g.dist_from(g.origin) < 0):
        raise ConfigError("custom graph must be connected")
    return g


def build_graph(family, level=None, radius=None, **kwargs):
    if family == "gasket":
        if level is None:
            raise ConfigError("gasket needs a level")
        return build_gasket(level)
    if family == "line":
        if radius is None:
            radius = level
        if radius is None:
            raise ConfigError("line needs a radius")
        return build_line(radius)
    if family == "custom":
        return build_custom(**kwargs)
    raise ConfigError(f"unknown graph family {family!r}")


def nominal_dimensions(family):
    """Exact fractal/walk/spectral dimensions for the built-in families."""
    if family == "gasket":
        d_f = math.log(3.0) / math.log(2.0)
        d_w = math.log(5.0) / math.log(2.0)
        return {"d_f": d_f, "d_w": d_w, "d_s": 2.0 * d_f / d_w}
    if family == "line":
        return {"d_f": 1.0, "d_w": 2.0, "d_s": 1.0}
    return None


def volume_growth(g, x, n_max):
    """Rows (n, V(x,n), card B(x,n)) for n = 0..n_max.

    V is the mu-volume of the ball.  The ball of radius n_max must not
    touch the boundary, otherwise the counts are truncation artifacts.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ConfigError("n_max must be >= 0")
    if g.boundary.size and g.safe_horizon(x) < n_max:
        raise DomainError(
            f"ball of radius {n_max} reaches the truncation boundary")
    d = g.dist_from(x)
    rows = []
    for n in range(n_max + 1):
        inside = d <= n
        rows.append((n, float(g.mu[inside].sum()),
                     int(np.count_nonzero(inside))))
    return rows


def fit_volume_dimension(rows, r_min=1):
    """Log-log slope of card B(x,n) vs n, skipping radii below r_min."""
    pts = [(n, card) for n, _, card in rows if n >= r_min]
    if len(pts) < 4:
        raise DomainError("volume regression needs at least 4 radii")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return float(slope), resid


class GeodesicRay:
    """Vertices x_0 = origin, x_1, ... with d(origin, x_k) = k."""

    def __init__(self, graph, vertices):
        self.graph = graph
        self.vertices = np.asarray(vertices, dtype=np.int64)
        d = graph.dist_from(graph.origin)
        for k, v in enumerate(self.vertices):
            if d[v] != k:
                raise DomainError(f"ray vertex {k} is at distance {d[v]}")

    def __len__(self):
        return self.vertices.shape[0] - 1

    def __getitem__(self, k):
        return int(self.vertices[k])


def geodesic_ray(g, length):
    """The canonical geodesic ray from the origin.

    On the gasket this walks the bottom row (k, 0): each edge changes
    the p coordinate by at most one, so d(O, (k,0)) = k.  On the line
    it walks to the right.
    """
    n = int(length)
    if g.family == "gasket":
        side = 1 << g.level
        if n > side:
            raise DomainError(f"ray length {n} exceeds the side {side}")
        lookup = {int(k): i for i, k in enumerate(g.site_key)}
        ids = [lookup[k << 32] for k in range(n + 1)]
    elif g.family == "line":
        if n > g.level:
            raise DomainError(f"ray length {n} exceeds the radius {g.level}")
        ids = g.origin + np.arange(n + 1, dtype=np.int64)
    else:
        raise DomainError("geodesic ray is defined for gasket and line only")
    return GeodesicRay(g, ids)


class BallCover:
    """Disjoint balls of radius n_w whose 5x dilates cover a region."""

    def __init__(self, graph, n_w, centers, assignment, region):
        self.graph = graph
        self.n_w = int(n_w)
        self.centers = np.asarray(centers, dtype=np.int64)
        self.cover_radius = 5 * self.n_w
        self.assignment = assignment
        self.region = region

    def local_center_counts(self, R):
        """Per center, how many centers sit within R * n_w."""
        rmax = int(R * self.n_w)
        is_center = np.zeros(self.graph.V, dtype=bool)
        is_center[self.centers] = True
        out = np.empty(self.centers.shape[0], dtype=np.int64)
        for i, c in enumerate(self.centers):
            d = kernels.bfs_distances(self.graph.indptr, self.graph.indices,
                                      int(c), rmax)
            out[i] = int(np.count_nonzero(is_center & (d >= 0)))
        return out

    def fit_center_density(self, R_list, d_f):
        """Smallest C with counts <= C * R^d_f over the given R grid."""
        best = 0.0
        for R in R_list:
            counts = self.local_center_counts(R)
            best = max(best, float(counts.max()) / R ** d_f)
        return best


def vitali_cover(g, region, n_w):
    """Greedy maximal (2 n_w + 1)-separated centers and their cover.

    Candidates are scanned in (distance from origin, id) order, so the
    construction is deterministic.  Every region vertex lies within
    2 n_w of some center, hence inside the 5 n_w dilate.
    """
    n_w = int(n_w)
    if n_w < 1:
        raise ConfigError("n_w must be >= 1")
    region = np.unique(np.asarray(region, dtype=np.int64))
    if region.size == 0:
        raise ConfigError("cover region is empty")
    d0 = g.dist_from(g.origin)
    order = np.lexsort((region, d0[region]))
    blocked = np.zeros(g.V, dtype=bool)
    centers = []
    for v in region[order]:
        if blocked[v]:
            continue
        centers.append(int(v))
        near = kernels.bfs_distances(g.indptr, g.indices, int(v), 2 * n_w)
        blocked[near >= 0] = True
    centers = np.asarray(centers, dtype=np.int64)
    bestd = np.full(g.V, np.iinfo(np.int64).max, dtype=np.int64)
    bestc = np.full(g.V, -1, dtype=np.int64)
    for i, c in enumerate(centers):
        d = kernels.bfs_distances(g.indptr, g.indices, int(c), 5 * n_w)
        hit = (d >= 0) & (d < bestd)
        bestd[hit] = d[hit]
        bestc[hit] = i
    if np.any(bestc[region] < 0):
        raise DomainError("cover failed to reach the whole region")
    return BallCover(g, n_w, centers, bestc, region)


def save_graph(g, path):
    """Plain-text edge-list dump that round-trips through load_graph."""
    with open(path, "w", encoding="ascii") as f:
        f.write(f"#polyfract-graph v1 family={g.family} level={g.level} "
                f"origin={g.origin}\n")
        if g.boundary.size:
            f.write("#boundary " + " ".join(str(int(b)) for b in g.boundary)
                    + "\n")
        for i in range(g.V):
            if g.coords is None:
                f.write(f"vertex {i}\n")
            elif g.coords.ndim == 1:
                f.write(f"vertex {i} {int(g.coords[i])} 0\n")
            else:
                f.write(f"vertex {i} {int(g.coords[i, 0])} "
                        f"{int(g.coords[i, 1])}\n")
        for y in range(g.V):
            row = slice(g.indptr[y], g.indptr[y + 1])
            for x, w in zip(g.indices[row], g.weights[row]):
                if y < x:
                    f.write(f"edge {y} {int(x)} {float(w)!r}\n")


def load_graph(path):
    with open(path, "r", encoding="ascii") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("#polyfract-graph v1 "):
        raise ConfigError(f"{path}: not a graph file")
    meta = dict(tok.split("=", 1) for tok in lines[0].split() if "=" in tok)
    boundary = []
    coords = {}
    edges = []
    weights = []
    nverts = 0
    try:
        family = meta["family"]
        level = int(meta["level"])
        origin = int(meta["origin"])
        for ln in lines[1:]:
            toks = ln.split()
            if toks[0] == "#boundary":
                boundary = [int(t) for t in toks[1:]]
            elif toks[0] == "vertex":
                vid = int(toks[1])
                if vid != nverts:
                    raise ConfigError("vertex ids must be consecutive")
                if len(toks) == 4:
                    coords[vid] = (int(toks[2]), int(toks[3]))
                nverts += 1
            elif toks[0] == "edge":
                edges.append((int(toks[1]), int(toks[2])))
                weights.append(float(toks[3]))
            else:
                raise ConfigError(f"unknown record {toks[0]!r}")
    except (KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed graph file: {exc}") from exc
    carr = None
    if len(coords) == nverts and nverts > 0:
        carr = np.array([coords[i] for i in range(nverts)], dtype=np.int64)
    if family == "gasket":
        if carr is None:
            raise ConfigError("gasket graph file needs vertex coordinates")
        keys = ((carr[:, 0].astype(np.uint64) << np.uint64(32))
                | carr[:, 1].astype(np.uint64))
    elif family == "line":
        if carr is None:
            raise ConfigError("line graph file needs vertex coordinates")
        keys = (carr[:, 0] + (1 << 31)).astype(np.uint64)
        carr = carr[:, 0]
    else:
        keys = None
    g = build_custom(nverts, edges, weights=weights, origin=origin,
                     boundary=boundary, site_key=keys)
    g.family = family
    g.level = level
    g.coords = carr
    return g


def induced_csr(g, vertices):
    """Sub-CSR on a vertex set with the original step probabilities.

    Edges leaving the set are dropped but p_in keeps the full-graph
    mu-normalization, so iterating the sub-kernel computes the absorbing
    walk (mass stepping outside the set is killed).  Returns (indptr,
    indices, p_in, logp_in, verts) with vertices relabeled 0..len-1 in
    ascending original order; verts maps local -> global.
    """
    verts = np.unique(np.asarray(vertices, dtype=np.int64))
    if verts.size == 0:
        raise ConfigError("induced vertex set is empty")
    if verts[0] < 0 or verts[-1] >= g.V:
        raise ConfigError("induced vertex ids out of range")
    loc = np.full(g.V, -1, dtype=np.int64)
    loc[verts] = np.arange(verts.size, dtype=np.int64)
    starts = g.indptr[verts]
    counts = g.indptr[verts + 1] - starts
    total = int(counts.sum())
    offs = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])),
                     counts)
    epos = np.arange(total, dtype=np.int64) + offs
    keep = loc[g.indices[epos]] >= 0
    sub_indices = loc[g.indices[epos[keep]]]
    sub_p = g.p_in[epos[keep]].copy()
    row_of = np.repeat(np.arange(verts.size, dtype=np.int64), counts)[keep]
    sub_counts = np.bincount(row_of, minlength=verts.size)
    sub_indptr = np.concatenate(([0], np.cumsum(sub_counts))).astype(np.int64)
    with np.errstate(divide="ignore"):
        sub_logp = np.log(sub_p)
    return sub_indptr, sub_indices, sub_p, sub_logp, verts
