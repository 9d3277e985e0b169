"""Voxel traversal for line segments through the imaged-volume grid.

Incremental grid marching in the Amanatides-Woo style: clip the segment to
the box, then walk cell to cell along the parametric axis crossings so every
pierced cell is visited exactly once.
"""

from __future__ import annotations

import numpy as np

from .scene import SceneGrid

_T_NUDGE = 1e-9  # fractional offset of the entry point off the box face


def _clip_to_box(origin, size, a, d):
    """Slab-clip rays a + t*d to the box, restricted to t in [0, 1].

    Returns (t0, t1); a ray misses the box where t0 >= t1.
    """
    n = a.shape[0]
    t0 = np.zeros(n)
    t1 = np.ones(n)
    for axis in range(3):
        lo = origin[axis]
        hi = origin[axis] + size[axis]
        da = d[:, axis]
        aa = a[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - aa) / da
            tb = (hi - aa) / da
        near = np.minimum(ta, tb)
        far = np.maximum(ta, tb)
        par = da == 0.0
        if np.any(par):
            inside = (aa >= lo) & (aa <= hi)
            near = np.where(par, np.where(inside, -np.inf, np.inf), near)
            far = np.where(par, np.where(inside, np.inf, -np.inf), far)
        t0 = np.maximum(t0, near)
        t1 = np.minimum(t1, far)
    return t0, t1


def segments_blocked(grid: SceneGrid, starts, ends) -> np.ndarray:
    """Whether each segment pierces a cell with positive contrast.

    Parameters
    ----------
    starts, ends : array_like, shape (n, 3)

    Returns
    -------
    ndarray of bool, shape (n,)
    """
    occ = grid.values > 0.0
    if not occ.any():
        return np.zeros(len(np.atleast_2d(starts)), dtype=bool)
    a = np.atleast_2d(np.asarray(starts, dtype=float))
    b = np.atleast_2d(np.asarray(ends, dtype=float))
    d = b - a
    counts = np.asarray(grid.counts)
    cell = grid.cell_size
    t0, t1 = _clip_to_box(grid.origin, grid.size, a, d)

    n = a.shape[0]
    blocked = np.zeros(n, dtype=bool)
    active = np.flatnonzero(t0 < t1)
    if active.size == 0:
        return blocked

    aa = a[active]
    dd = d[active]
    tt1 = t1[active]
    entry = aa + (t0[active] + _T_NUDGE * (tt1 - t0[active]))[:, None] * dd
    idx = np.floor((entry - grid.origin) / cell).astype(np.int64)
    idx = np.clip(idx, 0, counts - 1)

    step = np.sign(dd).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.abs(cell / dd)
        next_bound = grid.origin + (idx + (step > 0)) * cell
        t_next = (next_bound - aa) / dd
    t_delta[dd == 0.0] = np.inf
    t_next[dd == 0.0] = np.inf

    flat = occ.ravel()
    stride = np.array([counts[1] * counts[2], counts[2], 1], dtype=np.int64)
    max_steps = int(counts.sum()) + 3
    alive = np.ones(active.size, dtype=bool)
    for _ in range(max_steps):
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        hit = flat[idx[live] @ stride]
        if hit.any():
            blocked[active[live[hit]]] = True
            alive[live[hit]] = False
            live = live[~hit]
            if live.size == 0:
                break
        axis = np.argmin(t_next[live], axis=1)
        t_cross = t_next[live, axis]
        done = t_cross >= tt1[live]
        alive[live[done]] = False
        move = live[~done]
        if move.size == 0:
            break
        maxis = axis[~done]
        idx[move, maxis] += step[move, maxis]
        t_next[move, maxis] += t_delta[move, maxis]
        out = (idx[move, maxis] < 0) | (idx[move, maxis] >= counts[maxis])
        alive[move[out]] = False
    return blocked


def segment_chords(grid: SceneGrid, start, end):
    """Cells pierced by one segment and the chord length inside each.

    Returns (flat_indices, lengths); indices follow the C-order cell layout
    of `SceneGrid.cell_centers`. Lengths sum to the in-box segment length.
    """
    a = np.asarray(start, dtype=float)[None, :]
    b = np.asarray(end, dtype=float)[None, :]
    d = (b - a)[0]
    t0, t1 = _clip_to_box(grid.origin, grid.size, a, b - a)
    t0, t1 = float(t0[0]), float(t1[0])
    if t0 >= t1:
        return np.empty(0, dtype=np.int64), np.empty(0)

    counts = np.asarray(grid.counts)
    cell = grid.cell_size
    seg_len = np.linalg.norm(d)
    entry = a[0] + (t0 + _T_NUDGE * (t1 - t0)) * d
    idx = np.clip(np.floor((entry - grid.origin) / cell).astype(np.int64),
                  0, counts - 1)
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.abs(cell / d)
        next_bound = grid.origin + (idx + (step > 0)) * cell
        t_next = (next_bound - a[0]) / d
    t_delta[d == 0.0] = np.inf
    t_next[d == 0.0] = np.inf

    stride = np.array([counts[1] * counts[2], counts[2], 1], dtype=np.int64)
    cells, lengths = [], []
    t_cur = t0
    for _ in range(int(counts.sum()) + 3):
        axis = int(np.argmin(t_next))
        t_exit = min(float(t_next[axis]), t1)
        if t_exit > t_cur:
            cells.append(int(idx @ stride))
            lengths.append((t_exit - t_cur) * seg_len)
        if t_next[axis] >= t1:
            break
        t_cur = float(t_next[axis])
        idx[axis] += step[axis]
        t_next[axis] += t_delta[axis]
        if idx[axis] < 0 or idx[axis] >= counts[axis]:
            break
    return np.asarray(cells, dtype=np.int64), np.asarray(lengths)
