"""Independent reference computations the tests pin the library against.

Everything here is deliberately naive and shares no code with the
package internals: explicit path enumeration for partition functions,
a full path-pair double sum for second moments, and an exact
reachable-set transfer computation for oriented site percolation.
"""
import math


def brute_log_z(g, field, x, n, beta, endpoint=None):
    """log of the n-step partition sum by exhaustive path enumeration."""
    total = 0.0
    stack = [(int(x), 0, 1.0, 0.0)]  # vertex, time, path prob, hamiltonian
    while stack:
        v, t, pr, h = stack.pop()
        if t == n:
            if endpoint is None or v == endpoint:
                total += pr * math.exp(beta * h)
            continue
        deg = int(g.deg[v])
        for u in g.neighbors(v):
            om = field.omega_at(t + 1, int(g.site_key[u]))
            stack.append((int(u), t + 1, pr / deg, h + om))
    return math.log(total) if total > 0 else -math.inf


def brute_pair_moment(g, x, n, gamma):
    """E[(W_n)^2] as a double sum over all path pairs.

    gamma is the matched-site rate log M(2b) - 2 log M(b); the annealed
    second moment only sees the overlap count, so enumerating vertex
    sequences is enough.
    """
    paths = []

    def rec(v, t, pr, seq):
        if t == n:
            paths.append((pr, seq))
            return
        deg = int(g.deg[v])
        for u in g.neighbors(v):
            rec(int(u), t + 1, pr / deg, seq + (int(u),))

    rec(int(x), 0, 1.0, ())
    total = 0.0
    for pr1, s1 in paths:
        for pr2, s2 in paths:
            overlap = sum(1 for a, b in zip(s1, s2) if a == b)
            total += pr1 * pr2 * math.exp(gamma * overlap)
    return total


def percolation_survival_exact(rho, horizon):
    """Exact survival probability of the oriented site process.

    Sites are (I, J) with 0 <= J <= I and I - J even, each open
    independently with probability rho; paths step (I, J) -> (I+1, J+-1)
    through open sites, and (0, 0) itself must be open.  The state after
    row I is the set of reachable J values; rows are folded in one at a
    time, summing over the open/closed pattern of the candidate sites.
    """
    rho = float(rho)
    horizon = int(horizon)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho outside [0,1]")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    dist = {frozenset((0,)): rho}
    for row in range(1, horizon + 1):
        nxt = {}
        for state, p in dist.items():
            cands = sorted(k for k in range(row % 2, row + 1, 2)
                           if (k - 1 in state or k + 1 in state))
            m = len(cands)
            for pattern in range(1 << m):
                opened = frozenset(cands[i] for i in range(m)
                                   if pattern >> i & 1)
                if not opened:
                    continue
                w = p * rho ** len(opened) * (1.0 - rho) ** (m - len(opened))
                nxt[opened] = nxt.get(opened, 0.0) + w
        dist = nxt
    return math.fsum(dist.values())


def dense_transition_matrix(g):
    """Row-stochastic step matrix T[u, w] = p(u -> w) as a dense array.

    Distributions held as row vectors advance by right multiplication.
    """
    import numpy as np

    T = np.zeros((g.V, g.V))
    for w in range(g.V):
        for k in range(g.indptr[w], g.indptr[w + 1]):
            T[g.indices[k], w] = g.p_in[k]
    if np.abs(T.sum(axis=1) - 1.0).max() > 1e-12:
        raise AssertionError("transition rows must sum to one")
    return T
