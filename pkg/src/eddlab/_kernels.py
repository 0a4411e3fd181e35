"""Numba kernels behind the uniform-grid index.

All kernels take points padded to three columns (unused axes are zero) and a
CSR layout of the grid: ``order`` lists point indices sorted by cell and
``cell_start[c]:cell_start[c + 1]`` is the slice belonging to cell ``c``.
Cells are numbered row-major over ``shape`` (three entries, 1 for unused axes).
"""
import math

import numpy as np
from numba import njit

SECTOR_ANGLE = math.pi / 3.0
TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _before(p, a, da, b, db):
    # strict order: squared distance, then lexicographic coordinates, then index
    if da != db:
        return da < db
    for ax in range(p.shape[1]):
        if p[a, ax] != p[b, ax]:
            return p[a, ax] < p[b, ax]
    return a < b


@njit(cache=True)
def _cell_of(x, origin, h, shape, out):
    for ax in range(3):
        c = int(math.floor((x[ax] - origin[ax]) / h))
        if c < 0:
            c = 0
        elif c > shape[ax] - 1:
            c = shape[ax] - 1
        out[ax] = c


@njit(cache=True)
def _guaranteed(x, origin, h, shape, c, q):
    """Distance below which every point has been visited after ring ``q``.

    Returns (covers_whole_grid, distance).
    """
    full = True
    gd = np.inf
    for ax in range(3):
        lo = c[ax] - q
        hi = c[ax] + q
        if lo > 0:
            full = False
            v = x[ax] - (origin[ax] + lo * h)
            if v < gd:
                gd = v
        if hi < shape[ax] - 1:
            full = False
            v = origin[ax] + (hi + 1) * h - x[ax]
            if v < gd:
                gd = v
    return full, gd


@njit(cache=True)
def _sqdist(p, j, x):
    s = 0.0
    for ax in range(3):
        dd = p[j, ax] - x[ax]
        s += dd * dd
    return s


@njit(cache=True)
def knn_grid(p, origin, h, shape, cell_start, order, qx, qexclude, k, margin):
    """Exact k nearest neighbours of each query row of ``qx``.

    ``qexclude[i]`` is a point index to skip for query ``i`` (-1 for none).
    Missing neighbours (fewer than k candidates) are reported as index -1.
    """
    nq = qx.shape[0]
    out_idx = np.full((nq, k), -1, np.int64)
    out_d2 = np.full((nq, k), np.inf)
    c = np.empty(3, np.int64)
    for qi in range(nq):
        x = qx[qi]
        _cell_of(x, origin, h, shape, c)
        bi = out_idx[qi]
        bd = out_d2[qi]
        cnt = 0
        q = 0
        while True:
            for i in range(max(0, c[0] - q), min(shape[0] - 1, c[0] + q) + 1):
                for j in range(max(0, c[1] - q), min(shape[1] - 1, c[1] + q) + 1):
                    for l in range(max(0, c[2] - q), min(shape[2] - 1, c[2] + q) + 1):
                        if max(abs(i - c[0]), abs(j - c[1]), abs(l - c[2])) != q:
                            continue
                        cell = (i * shape[1] + j) * shape[2] + l
                        for t in range(cell_start[cell], cell_start[cell + 1]):
                            pj = order[t]
                            if pj == qexclude[qi]:
                                continue
                            d2 = _sqdist(p, pj, x)
                            if cnt < k:
                                pos = cnt
                                cnt += 1
                            elif _before(p, pj, d2, bi[k - 1], bd[k - 1]):
                                pos = k - 1
                            else:
                                continue
                            while pos > 0 and _before(p, pj, d2, bi[pos - 1], bd[pos - 1]):
                                bi[pos] = bi[pos - 1]
                                bd[pos] = bd[pos - 1]
                                pos -= 1
                            bi[pos] = pj
                            bd[pos] = d2
            full, gd = _guaranteed(x, origin, h, shape, c, q)
            if full:
                break
            g = gd - margin
            if cnt == k and g > 0.0 and bd[k - 1] < g * g:
                break
            q += 1
    return out_idx, out_d2


@njit(cache=True)
def _pairs_scan(p, origin, h, shape, cell_start, order, r, fill, pairs, d2s):
    n = p.shape[0]
    r2 = r * r
    reach = int(math.ceil(r / h)) + 1
    c = np.empty(3, np.int64)
    pos = 0
    for i in range(n):
        x = p[i]
        _cell_of(x, origin, h, shape, c)
        for a in range(max(0, c[0] - reach), min(shape[0] - 1, c[0] + reach) + 1):
            for b in range(max(0, c[1] - reach), min(shape[1] - 1, c[1] + reach) + 1):
                for e in range(max(0, c[2] - reach), min(shape[2] - 1, c[2] + reach) + 1):
                    cell = (a * shape[1] + b) * shape[2] + e
                    for t in range(cell_start[cell], cell_start[cell + 1]):
                        j = order[t]
                        if j <= i:
                            continue
                        d2 = _sqdist(p, j, x)
                        if d2 <= r2:
                            if fill:
                                pairs[pos, 0] = i
                                pairs[pos, 1] = j
                                d2s[pos] = d2
                            pos += 1
    return pos


@njit(cache=True)
def pairs_within(p, origin, h, shape, cell_start, order, r):
    """All index pairs (i < j) with squared distance <= r**2."""
    pairs = np.empty((0, 2), np.int64)
    d2s = np.empty(0)
    total = _pairs_scan(p, origin, h, shape, cell_start, order, r, False, pairs, d2s)
    pairs = np.empty((total, 2), np.int64)
    d2s = np.empty(total)
    _pairs_scan(p, origin, h, shape, cell_start, order, r, True, pairs, d2s)
    return pairs, d2s


@njit(cache=True)
def knn_point_scores(p, nbr, directed):
    """Half the sum of incident edge lengths in the k-NN graph, per point.

    Lengths are sorted before summation so a point's score depends only on
    the multiset of its incident edges, not on point numbering.
    """
    n, k = nbr.shape
    indeg = np.zeros(n + 1, np.int64)
    for i in range(n):
        for t in range(k):
            j = nbr[i, t]
            if j >= 0:
                indeg[j + 1] += 1
    for i in range(n):
        indeg[i + 1] += indeg[i]
    rev = np.empty(indeg[n], np.int64)
    fill = indeg[:n].copy()
    for i in range(n):
        for t in range(k):
            j = nbr[i, t]
            if j >= 0:
                rev[fill[j]] = i
                fill[j] += 1
    scores = np.zeros(n)
    maxin = 0
    for i in range(n):
        if indeg[i + 1] - indeg[i] > maxin:
            maxin = indeg[i + 1] - indeg[i]
    buf = np.empty(k + maxin)
    for i in range(n):
        m = 0
        for t in range(k):
            j = nbr[i, t]
            if j < 0:
                continue
            buf[m] = math.sqrt(_sqdist(p, j, p[i]))
            m += 1
        for s in range(indeg[i], indeg[i + 1]):
            j = rev[s]
            if not directed:
                dup = False
                for t in range(k):
                    if nbr[i, t] == j:
                        dup = True
                if dup:
                    continue
            buf[m] = math.sqrt(_sqdist(p, j, p[i]))
            m += 1
        vals = np.sort(buf[:m])
        acc = 0.0
        for v in vals:
            acc += v
        scores[i] = 0.5 * acc
    return scores


@njit(cache=True)
def sector_reach(x0, y0, lo0, lo1, hi0, hi1, a0):
    """Farthest distance from (x0, y0) within the sector starting at angle a0
    and the rectangle [lo0, hi0] x [lo1, hi1]."""
    best = 0.0
    for ang in (a0, a0 + SECTOR_ANGLE):
        dx = math.cos(ang)
        dy = math.sin(ang)
        s = np.inf
        if dx > 1e-15:
            s = min(s, (hi0 - x0) / dx)
        elif dx < -1e-15:
            s = min(s, (lo0 - x0) / dx)
        if dy > 1e-15:
            s = min(s, (hi1 - y0) / dy)
        elif dy < -1e-15:
            s = min(s, (lo1 - y0) / dy)
        if s > best:
            best = s
    for cx in (lo0, hi0):
        for cy in (lo1, hi1):
            vx = cx - x0
            vy = cy - y0
            if vx == 0.0 and vy == 0.0:
                continue
            rel = (math.atan2(vy, vx) - a0) % TWO_PI
            if rel <= SECTOR_ANGLE:
                dist = math.sqrt(vx * vx + vy * vy)
                if dist > best:
                    best = dist
    return best


@njit(cache=True)
def sector_index(dx, dy, rot):
    j = int(((math.atan2(dy, dx) - rot) % TWO_PI) / SECTOR_ANGLE)
    return min(j, 5)


@njit(cache=True)
def sector_t(p, origin, h, shape, cell_start, order, qx, qexclude, k, lo, hi, rot, margin):
    """Six-sector stabilization time t for each query (2-D only).

    t is the smallest radius at which each sector either holds k + 1 points
    or has exhausted its intersection with the rectangle [lo, hi].
    """
    nq = qx.shape[0]
    out = np.empty(nq)
    c = np.empty(3, np.int64)
    best = np.empty((6, k + 1))
    cnt = np.empty(6, np.int64)
    reach = np.empty(6)
    for qi in range(nq):
        x = qx[qi]
        for s in range(6):
            cnt[s] = 0
            reach[s] = sector_reach(x[0], x[1], lo[0], lo[1], hi[0], hi[1], rot + s * SECTOR_ANGLE)
        if p.shape[0] == 0:
            tmax = 0.0
            for s in range(6):
                tmax = max(tmax, reach[s])
            out[qi] = tmax
            continue
        _cell_of(x, origin, h, shape, c)
        q = 0
        while True:
            for i in range(max(0, c[0] - q), min(shape[0] - 1, c[0] + q) + 1):
                for j in range(max(0, c[1] - q), min(shape[1] - 1, c[1] + q) + 1):
                    for l in range(max(0, c[2] - q), min(shape[2] - 1, c[2] + q) + 1):
                        if max(abs(i - c[0]), abs(j - c[1]), abs(l - c[2])) != q:
                            continue
                        cell = (i * shape[1] + j) * shape[2] + l
                        for t in range(cell_start[cell], cell_start[cell + 1]):
                            pj = order[t]
                            if pj == qexclude[qi]:
                                continue
                            dx = p[pj, 0] - x[0]
                            dy = p[pj, 1] - x[1]
                            d2 = _sqdist(p, pj, x)
                            s = sector_index(dx, dy, rot)
                            m = cnt[s]
                            if m < k + 1:
                                pos = m
                                cnt[s] = m + 1
                            elif d2 < best[s, k]:
                                pos = k
                            else:
                                continue
                            while pos > 0 and d2 < best[s, pos - 1]:
                                best[s, pos] = best[s, pos - 1]
                                pos -= 1
                            best[s, pos] = d2
            full, gd = _guaranteed(x, origin, h, shape, c, q)
            g = gd - margin
            tmax = 0.0
            done = True
            for s in range(6):
                ts = reach[s]
                if cnt[s] >= k + 1:
                    ts = min(ts, math.sqrt(best[s, k]))
                if ts > tmax:
                    tmax = ts
                if not ts <= g:
                    done = False
            if done or full:
                out[qi] = tmax
                break
            q += 1
    return out
