"""Independent brute-force and high-precision reference implementations."""
import math

import mpmath as mp
import numpy as np


def brute_knn(points, k):
    """k nearest neighbours by full sort, ties by (distance, coordinates, index)."""
    n = len(points)
    out = []
    for i in range(n):
        d2 = ((points - points[i]) ** 2).sum(axis=1)
        keys = [(d2[j], *points[j], j) for j in range(n) if j != i]
        out.append([key[-1] for key in sorted(keys)[:k]])
    return out


def brute_scores(points, k, directed):
    n = len(points)
    nbr = brute_knn(points, k)
    sets = [set(s) for s in nbr]
    scores = np.zeros(n)
    for i in range(n):
        edges = [math.dist(points[i], points[j]) for j in nbr[i]]
        for j in range(n):
            if i in sets[j] and (directed or j not in sets[i]):
                edges.append(math.dist(points[i], points[j]))
        scores[i] = 0.5 * sum(sorted(edges))
    return scores


def brute_statistic(points, inside, k, directed):
    if len(points) == 0:
        return 0.0
    return math.fsum(brute_scores(points, k, directed)[inside])


def brute_forest(points, species, noise, r, intercept=1.0, slope=0.2, crowding=0.1, eta_max=5.0):
    n = len(points)
    out = np.zeros(n)
    for i in range(n):
        cnt = sum(1 for j in range(n) if j != i and math.dist(points[i], points[j]) < r)
        eta = min(max(intercept + slope * species[i] - crowding * cnt, 0.0), eta_max)
        out[i] = max(eta + noise[i], 0.0)
    return out


def mp_dpp(k, c1, c2, c3, pa, pb, dist):
    with mp.workdps(50):
        k, c1, c2, c3, pa, pb, dist = map(mp.mpf, (k, c1, c2, c3, pa, pb, dist))
        omega = c1 * mp.exp(-c2 * mp.exp(c3 * dist))
        return 2 * pa * pb * (1 + 2 * pa * k) * (1 + 2 * pb * k) * mp.exp(2 * (pa + pb) * k) * omega ** 2


def mp_boolean(lam, c1, c2, ra, rb, sep, d):
    with mp.workdps(40):
        lam, c1, c2, sep = map(mp.mpf, (lam, c1, c2, sep))
        vol = lambda r: mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2 + 1) * r ** d
        dvol = lambda r: d * mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2 + 1) * r ** (d - 1)
        total = mp.mpf(0)
        for r in (mp.mpf(ra), mp.mpf(rb)):
            a = r + sep / 4
            tail = mp.quad(lambda u: mp.exp(-c2 * (u - r)) * dvol(u), [a, a + 10 / c2, mp.inf])
            total += c1 * lam * mp.exp(-c2 * sep / 4) * vol(a) + c1 * lam * tail
        return total


def dense_scores(points, k, directed):
    """Same scores as :func:`brute_scores` from a full distance matrix.

    Each row of incident edge lengths is sorted and summed left to right.
    """
    n = len(points)
    if n < 2:
        return np.zeros(n)
    diff = points[:, None, :] - points[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    np.fill_diagonal(d2, np.inf)
    idx = np.broadcast_to(np.arange(n), (n, n))
    xs = np.broadcast_to(points[:, 0], (n, n))
    ys = np.broadcast_to(points[:, 1], (n, n))
    order = np.lexsort((idx, ys, xs, d2), axis=-1)[:, : min(k, n - 1)]
    adj = np.zeros((n, n), bool)
    adj[np.arange(n)[:, None], order] = True
    length = np.sqrt(d2)
    if directed:
        edges = np.hstack([np.where(adj, length, np.inf), np.where(adj.T, length, np.inf)])
    else:
        edges = np.where(adj | adj.T, length, np.inf)
    edges = np.sort(edges, axis=1)
    edges[~np.isfinite(edges)] = 0.0
    return 0.5 * np.cumsum(edges, axis=1)[:, -1]
