"""Hot numeric kernels: axis-aligned ray casting, polygon containment, and
batch social-force evaluation.

Each kernel has a numba ``@njit`` implementation and a vectorized pure-numpy
twin. The numba path is used when available; set ``PROXILAB_DISABLE_NUMBA=1``
before import to force the numpy path (``benchmarks/bench_kernels.py`` times
both). Both paths implement identical math; per-path results are fully
deterministic.
"""

from __future__ import annotations

import os

import numpy as np

_EPS = 1e-12

USING_NUMBA = os.environ.get("PROXILAB_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")
if USING_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False

if not USING_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _ray_distances_loop(px, py, vx, vy):
    npts = px.shape[0]
    m = vx.shape[0]
    out = np.full((npts, 4), np.inf)
    for i in range(npts):
        x0 = px[i]
        y0 = py[i]
        dn = np.inf
        ds = np.inf
        dw = np.inf
        de = np.inf
        for j in range(m):
            ax = vx[j]
            ay = vy[j]
            k = j + 1
            if k == m:
                k = 0
            bx = vx[k]
            by = vy[k]
            # east/west rays: crossings of the horizontal line y = y0
            if (ay > y0) != (by > y0):
                t = (y0 - ay) / (by - ay)
                xi = ax + t * (bx - ax)
                d = xi - x0
                if d >= -_EPS and d < de:
                    de = max(d, 0.0)
                if -d >= -_EPS and -d < dw:
                    dw = max(-d, 0.0)
            elif ay == y0 and by == y0:
                lo = min(ax, bx)
                hi = max(ax, bx)
                if lo - x0 >= -_EPS:
                    d = max(lo - x0, 0.0)
                    if d < de:
                        de = d
                if x0 - hi >= -_EPS:
                    d = max(x0 - hi, 0.0)
                    if d < dw:
                        dw = d
            # north/south rays: crossings of the vertical line x = x0
            if (ax > x0) != (bx > x0):
                t = (x0 - ax) / (bx - ax)
                yi = ay + t * (by - ay)
                d = yi - y0
                if d >= -_EPS and d < dn:
                    dn = max(d, 0.0)
                if -d >= -_EPS and -d < ds:
                    ds = max(-d, 0.0)
            elif ax == x0 and bx == x0:
                lo = min(ay, by)
                hi = max(ay, by)
                if lo - y0 >= -_EPS:
                    d = max(lo - y0, 0.0)
                    if d < dn:
                        dn = d
                if y0 - hi >= -_EPS:
                    d = max(y0 - hi, 0.0)
                    if d < ds:
                        ds = d
        out[i, 0] = dn
        out[i, 1] = ds
        out[i, 2] = dw
        out[i, 3] = de
    return out


def _ray_distances_numpy(px, py, vx, vy):
    ax, ay = vx, vy
    bx, by = np.roll(vx, -1), np.roll(vy, -1)
    x0 = px[:, None]
    y0 = py[:, None]

    out = np.full((px.shape[0], 4), np.inf)

    # east/west: intersections with the horizontal line through each point
    cross = (ay > y0) != (by > y0)
    dy = np.where(cross, by - ay, 1.0)
    t = (y0 - ay) / dy
    xi = ax + t * (bx - ax)
    d = xi - x0
    east = np.where(cross & (d >= -_EPS), np.maximum(d, 0.0), np.inf)
    west = np.where(cross & (-d >= -_EPS), np.maximum(-d, 0.0), np.inf)
    flat = (ay == y0) & (by == y0)
    lo = np.minimum(ax, bx)
    hi = np.maximum(ax, bx)
    east = np.minimum(east, np.where(flat & (lo - x0 >= -_EPS), np.maximum(lo - x0, 0.0), np.inf))
    west = np.minimum(west, np.where(flat & (x0 - hi >= -_EPS), np.maximum(x0 - hi, 0.0), np.inf))
    out[:, 3] = east.min(axis=1)
    out[:, 2] = west.min(axis=1)

    # north/south: intersections with the vertical line through each point
    cross = (ax > x0) != (bx > x0)
    dx = np.where(cross, bx - ax, 1.0)
    t = (x0 - ax) / dx
    yi = ay + t * (by - ay)
    d = yi - y0
    north = np.where(cross & (d >= -_EPS), np.maximum(d, 0.0), np.inf)
    south = np.where(cross & (-d >= -_EPS), np.maximum(-d, 0.0), np.inf)
    flat = (ax == x0) & (bx == x0)
    lo = np.minimum(ay, by)
    hi = np.maximum(ay, by)
    north = np.minimum(north, np.where(flat & (lo - y0 >= -_EPS), np.maximum(lo - y0, 0.0), np.inf))
    south = np.minimum(south, np.where(flat & (y0 - hi >= -_EPS), np.maximum(y0 - hi, 0.0), np.inf))
    out[:, 0] = north.min(axis=1)
    out[:, 1] = south.min(axis=1)
    return out


@njit(cache=True)
def _contains_loop(px, py, vx, vy):
    npts = px.shape[0]
    m = vx.shape[0]
    out = np.zeros(npts, dtype=np.bool_)
    for i in range(npts):
        x0 = px[i]
        y0 = py[i]
        inside = False
        j = m - 1
        for k in range(m):
            if (vy[k] > y0) != (vy[j] > y0):
                xi = vx[k] + (y0 - vy[k]) * (vx[j] - vx[k]) / (vy[j] - vy[k])
                if x0 < xi:
                    inside = not inside
            j = k
        out[i] = inside
    return out


def _contains_numpy(px, py, vx, vy):
    ax, ay = vx, vy
    bx, by = np.roll(vx, 1), np.roll(vy, 1)
    x0 = px[:, None]
    y0 = py[:, None]
    cross = (ay > y0) != (by > y0)
    dy = np.where(cross, by - ay, 1.0)
    xi = ax + (y0 - ay) * (bx - ax) / dy
    hits = cross & (x0 < xi)
    return (hits.sum(axis=1) % 2).astype(bool)


@njit(cache=True)
def _edge_distance_loop(px, py, vx, vy):
    npts = px.shape[0]
    m = vx.shape[0]
    out = np.empty(npts)
    for i in range(npts):
        best = np.inf
        for j in range(m):
            ax = vx[j]
            ay = vy[j]
            k = j + 1
            if k == m:
                k = 0
            ex = vx[k] - ax
            ey = vy[k] - ay
            wx = px[i] - ax
            wy = py[i] - ay
            seg2 = ex * ex + ey * ey
            if seg2 > 0.0:
                t = (wx * ex + wy * ey) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            dx = wx - t * ex
            dy = wy - t * ey
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        out[i] = np.sqrt(best)
    return out


def _edge_distance_numpy(px, py, vx, vy):
    ax, ay = vx, vy
    ex = np.roll(vx, -1) - ax
    ey = np.roll(vy, -1) - ay
    wx = px[:, None] - ax
    wy = py[:, None] - ay
    seg2 = np.where(ex * ex + ey * ey > 0.0, ex * ex + ey * ey, 1.0)
    t = np.clip((wx * ex + wy * ey) / seg2, 0.0, 1.0)
    dx = wx - t * ex
    dy = wy - t * ey
    return np.sqrt((dx * dx + dy * dy).min(axis=1))


@njit(cache=True)
def _banded_filter_loop(Q, weights, starts, widths):
    n, k = Q.shape
    out = np.zeros((n, k))
    for i in range(n):
        for j in range(k):
            acc = 0.0
            s = starts[j]
            for m in range(widths[j]):
                acc += weights[j, m] * Q[i, s + m]
            out[i, j] = acc
    return out


def _banded_filter_numpy(Q, weights, starts, widths):
    n, k = Q.shape
    band = weights.shape[1]
    half = (band - 1) // 2
    # align every row's weights into a fixed window centered on its output
    # bin, then contract against a zero-copy sliding-window view
    aligned = np.zeros((k, band))
    for j in range(k):
        offset = starts[j] - (j - half)
        aligned[j, offset : offset + widths[j]] = weights[j, : widths[j]]
    padded = np.zeros((n, k + band - 1))
    padded[:, half : half + k] = Q
    windows = np.lib.stride_tricks.sliding_window_view(padded, band, axis=1)
    return np.einsum("nkw,kw->nk", windows, aligned)


@njit(cache=True)
def _sf_scores_loop(amp, rng_b, offset, lam, hr_dist, hr_cos):
    n = hr_dist.shape[0]
    out = np.empty(n)
    for i in range(n):
        w = lam + (1.0 - lam) * (1.0 + hr_cos[i]) * 0.5
        s = amp * np.exp((offset - hr_dist[i]) / rng_b) * w
        out[i] = min(s, 100.0)
    return out


def _sf_scores_numpy(amp, rng_b, offset, lam, hr_dist, hr_cos):
    w = lam + (1.0 - lam) * (1.0 + hr_cos) * 0.5
    return np.minimum(amp * np.exp((offset - hr_dist) / rng_b) * w, 100.0)


if USING_NUMBA:
    ray_distances = _ray_distances_loop
    contains = _contains_loop
    edge_distance = _edge_distance_loop
    sf_scores = _sf_scores_loop
    banded_filter = _banded_filter_loop
else:
    ray_distances = _ray_distances_numpy
    contains = _contains_numpy
    edge_distance = _edge_distance_numpy
    sf_scores = _sf_scores_numpy
    banded_filter = _banded_filter_numpy
