"""Exact squared-Wasserstein distance for small weighted point sets.

Successive-shortest-path min-cost flow on the bipartite transport graph.
Masses are scaled to integers (largest-remainder apportionment at scale
1e9) so the flow is exact; squared-distance arc costs are accumulated in
rational arithmetic.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

MAX_SUPPORT = 64
MASS_SCALE = 10 ** 9


def _apportion(weights, total_units):
    """Integer weights summing exactly to ``total_units`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    exact = w / w.sum() * total_units
    base = np.floor(exact).astype(np.int64)
    short = int(total_units - base.sum())
    if short > 0:
        order = np.argsort(-(exact - base))
        base[order[:short]] += 1
    return base


def w2_exact_oracle(mu_points, mu_weights, nu_points, nu_weights):
    """Exact discrete W2^2 between two weighted point sets.

    Supports are limited to :data:`MAX_SUPPORT` points each; total masses
    must agree to within the integer scaling resolution.
    """
    xp = np.atleast_2d(np.asarray(mu_points, dtype=float))
    yp = np.atleast_2d(np.asarray(nu_points, dtype=float))
    wa = np.asarray(mu_weights, dtype=float)
    wb = np.asarray(nu_weights, dtype=float)
    if len(wa) > MAX_SUPPORT or len(wb) > MAX_SUPPORT:
        raise ValueError(f"support too large for the exact oracle (max {MAX_SUPPORT})")
    if np.any(wa <= 0.0) or np.any(wb <= 0.0):
        raise ValueError("weights must be strictly positive")
    total_a, total_b = wa.sum(), wb.sum()
    if abs(total_a - total_b) > 1.0 / MASS_SCALE * max(total_a, 1.0):
        raise ValueError(f"mass mismatch beyond integer scaling: {total_a} vs {total_b}")
    total_units = int(round(total_a * MASS_SCALE))
    supply = _apportion(wa, total_units)
    demand = _apportion(wb, total_units)
    cost = ((xp[:, None, :] - yp[None, :, :]) ** 2).sum(axis=2)
    flow = _min_cost_transport(supply, demand, cost)
    units = Fraction(0)
    for i, j in zip(*np.nonzero(flow)):
        units += int(flow[i, j]) * Fraction(cost[i, j])
    return float(units * Fraction(total_a) / total_units)


def _min_cost_transport(supply, demand, cost):
    """Successive shortest augmenting paths with node potentials.

    Nodes 0..ns-1 are sources, ns..ns+nt-1 sinks.  Reduced costs stay
    nonnegative, so plain Dijkstra applies.
    """
    ns, nt = cost.shape
    n = ns + nt
    flow = np.zeros((ns, nt), dtype=np.int64)
    pot = np.zeros(n)
    excess = supply.astype(np.int64).copy()
    deficit = demand.astype(np.int64).copy()
    while excess.sum() > 0:
        dist = np.full(n, np.inf)
        prev = np.full(n, -1, dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        dist[:ns][excess > 0] = 0.0
        while True:
            cand = np.where(done, np.inf, dist)
            u = int(cand.argmin())
            if not np.isfinite(cand[u]):
                raise RuntimeError("disconnected transport instance")
            done[u] = True
            if u >= ns and deficit[u - ns] > 0:
                sink = u
                break
            if u < ns:
                # roundoff can push reduced costs a hair below zero; clamp
                # so settled nodes are never reopened and prev stays acyclic
                rc = np.maximum(cost[u] + pot[u] - pot[ns:], 0.0)
                nd = dist[u] + rc
                better = (nd < dist[ns:]) & ~done[ns:]
                dist[ns:][better] = nd[better]
                prev[ns:][better] = u
            else:
                j = u - ns
                idx = np.where(flow[:, j] > 0)[0]
                rc = np.maximum(-cost[idx, j] + pot[u] - pot[idx], 0.0)
                nd = dist[u] + rc
                better = (nd < dist[idx]) & ~done[idx]
                dist[idx[better]] = nd[better]
                prev[idx[better]] = u
        # retrace the augmenting path and find the bottleneck
        path = []
        v = sink
        while prev[v] >= 0:
            path.append((int(prev[v]), int(v)))
            v = int(prev[v])
            if len(path) > n:
                raise RuntimeError("corrupt shortest-path tree")
        source = v
        delta = min(int(excess[source]), int(deficit[sink - ns]))
        for a, b in path:
            if a >= ns:  # backward arc, limited by existing flow
                delta = min(delta, int(flow[b, a - ns]))
        for a, b in path:
            if a < ns:
                flow[a, b - ns] += delta
            else:
                flow[b, a - ns] -= delta
        excess[source] -= delta
        deficit[sink - ns] -= delta
        # potential update keeps reduced costs nonnegative
        pot += np.minimum(np.where(np.isfinite(dist), dist, dist[sink]), dist[sink])
    return flow
