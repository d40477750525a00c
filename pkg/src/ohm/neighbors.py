"""Cell-list neighbor search, optionally on a periodic box."""

from __future__ import annotations

import itertools

import numpy as np


def _half_offsets(dim: int) -> list[tuple[int, ...]]:
    # the zero offset plus one representative of every {o, -o} pair
    offs = []
    for o in itertools.product((-1, 0, 1), repeat=dim):
        if any(o):
            first = next(v for v in o if v != 0)
            if first > 0:
                offs.append(o)
    return [tuple([0] * dim)] + offs


def _brute_pairs(points, radius, period):
    n, dim = points.shape
    if period is None:
        shifts = np.zeros((1, dim))
    else:
        k = int(np.ceil(radius / period))
        shifts = np.array(list(itertools.product(range(-k, k + 1), repeat=dim)), dtype=float) * period
    ii, jj, dd = [], [], []
    for s in shifts:
        disp = points[None, :, :] + s[None, None, :] - points[:, None, :]
        dist = np.sqrt((disp**2).sum(axis=2))
        ok = dist <= radius
        i, j = np.nonzero(ok)
        if np.any(s):
            # self-images and both orientations appear; keep one per unordered edge
            first = s[np.nonzero(s)[0][0]]
            keep = (i < j) | ((i == j) & (first > 0))
        else:
            keep = (i < j) & (dist[i, j] > 0)
        ii.append(i[keep])
        jj.append(j[keep])
        dd.append(disp[i[keep], j[keep]])
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    d = np.concatenate(dd) if dd else np.zeros((0, dim))
    return i.astype(np.int64), j.astype(np.int64), d.reshape(-1, dim)


def neighbor_pairs(points: np.ndarray, radius: float, period: float | None = None):
    """All unordered pairs of points at distance at most ``radius``.

    Parameters
    ----------
    points : (n, d) array
    radius : positive cutoff radius
    period : if given, points live on the torus ``[0, period)^d`` and every
        periodic image within ``radius`` is reported as its own edge.

    Returns
    -------
    i, j : int arrays of endpoint indices
    disp : (m, d) array of displacements ``y - x`` from ``i`` to ``j``
        (on the torus: the image actually connected)
    """
    points = np.asarray(points, dtype=float)
    n, dim = points.shape
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, dim))
    if period is not None:
        ncell = int(np.floor(period / radius))
        if ncell < 3:
            return _brute_pairs(points, radius, period)
        side = period / ncell
        lo = np.zeros(dim)
        shape = np.full(dim, ncell, dtype=np.int64)
    else:
        lo = points.min(axis=0)
        side = radius
        shape = np.floor((points.max(axis=0) - lo) / side).astype(np.int64) + 1
    cell = np.floor((points - lo) / side).astype(np.int64)
    cell = np.minimum(np.maximum(cell, 0), shape - 1)
    strides = np.cumprod(np.concatenate(([1], shape[:-1])))
    lin = cell @ strides
    order = np.argsort(lin, kind="stable")
    lin_sorted = lin[order]
    ncells = int(np.prod(shape))
    counts = np.bincount(lin_sorted, minlength=ncells)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))

    ii, jj = [], []
    for off in _half_offsets(dim):
        nb = cell + np.asarray(off)
        if period is not None:
            nb %= shape
            valid = np.ones(n, dtype=bool)
        else:
            valid = np.all((nb >= 0) & (nb < shape), axis=1)
        src = np.nonzero(valid)[0]
        nlin = nb[src] @ strides
        cnt = counts[nlin]
        total = int(cnt.sum())
        if total == 0:
            continue
        rep_src = np.repeat(src, cnt)
        base = np.repeat(starts[nlin], cnt)
        within = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        tgt = order[base + within]
        if not any(off):
            keep = rep_src < tgt
            rep_src, tgt = rep_src[keep], tgt[keep]
        ii.append(rep_src)
        jj.append(tgt)
    i = np.concatenate(ii) if ii else np.zeros(0, np.int64)
    j = np.concatenate(jj) if jj else np.zeros(0, np.int64)
    disp = points[j] - points[i]
    if period is not None:
        disp -= period * np.round(disp / period)
    dist = np.sqrt((disp**2).sum(axis=1))
    keep = (dist <= radius) & (dist > 0)
    return i[keep].astype(np.int64), j[keep].astype(np.int64), disp[keep]
