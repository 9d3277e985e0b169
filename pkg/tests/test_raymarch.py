"""Voxel traversal: chord lengths and occlusion queries."""

import numpy as np
import pytest

from duoris import Box, Phantom, default_layout, rasterize_phantom
from duoris.raymarch import segment_chords, segments_blocked


@pytest.fixture
def grid():
    return default_layout("desk").soi


def test_axis_aligned_chords(grid):
    # +x ray through cell column (iy, iz) = (10, 10): y = 0.05, z = 1.05
    cells, lengths = segment_chords(grid, (0.0, 0.05, 1.05),
                                    (3.0, 0.05, 1.05))
    want = np.array([ix * 400 + 10 * 20 + 10 for ix in range(10)])
    assert np.array_equal(np.sort(cells), want)
    assert np.allclose(lengths, 0.1)
    assert lengths.sum() == pytest.approx(1.0, abs=1e-9)


def test_chords_sum_to_inbox_length(grid):
    rng = np.random.default_rng(7)
    lo = np.asarray(grid.origin)
    hi = lo + np.asarray(grid.size)
    for _ in range(50):
        a = lo + rng.random(3) * (hi - lo)
        b = lo + rng.random(3) * (hi - lo)
        _, lengths = segment_chords(grid, a, b)
        assert lengths.sum() == pytest.approx(np.linalg.norm(b - a),
                                              abs=1e-9)


def test_chords_match_dense_sampling(grid):
    """Per-cell chord lengths agree with a brute-force sampled estimate."""
    rng = np.random.default_rng(3)
    counts = np.asarray(grid.counts)
    stride = np.array([counts[1] * counts[2], counts[2], 1])
    for _ in range(5):
        a = np.array([-0.5, -1.5, 0.2]) + rng.random(3) * 0.4
        b = np.array([3.2, 1.2, 1.6]) + rng.random(3) * 0.4
        cells, lengths = segment_chords(grid, a, b)
        n = 400_001
        t = (np.arange(n) + 0.5) / n
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        inside = np.all((pts >= grid.origin)
                        & (pts <= grid.origin + grid.size), axis=1)
        idx = np.floor((pts[inside] - grid.origin)
                       / grid.cell_size).astype(np.int64)
        idx = np.clip(idx, 0, counts - 1)
        flat = idx @ stride
        approx = np.bincount(flat, minlength=grid.n_cells) \
            * (np.linalg.norm(b - a) / n)
        exact = np.zeros(grid.n_cells)
        exact[cells] = lengths
        assert np.abs(exact - approx).max() < 2e-3


def test_chords_miss_returns_empty(grid):
    cells, lengths = segment_chords(grid, (0.0, -3.0, 1.0), (3.0, -3.0, 1.0))
    assert cells.size == 0 and lengths.size == 0


def test_chords_unique_cells(grid):
    rng = np.random.default_rng(11)
    for _ in range(30):
        a = rng.uniform((-1, -2, -0.5), (0.5, 2, 2.5))
        b = rng.uniform((2.5, -2, -0.5), (4, 2, 2.5))
        cells, lengths = segment_chords(grid, a, b)
        assert len(np.unique(cells)) == len(cells)
        assert np.all(lengths > 0)


def test_blocked_empty_grid(grid):
    out = segments_blocked(grid, [(0, 0, 1)], [(3, 0, 1)])
    assert out.shape == (1,) and not out[0]


def occupied_cell_grid(grid, ix, iy, iz):
    values = np.zeros(grid.counts)
    values[ix, iy, iz] = 1.0
    return grid.with_values(values)


def test_blocked_single_cell(grid):
    # occupy the cell centered at (1.55, 0.05, 1.05)
    occ = occupied_cell_grid(grid, 5, 10, 10)
    starts = [(0.0, 0.05, 1.05), (0.0, 0.35, 1.05), (0.0, 0.05, 1.05)]
    ends = [(3.0, 0.05, 1.05), (3.0, 0.35, 1.05), (1.2, 0.05, 1.05)]
    out = segments_blocked(occ, starts, ends)
    # through the cell; parallel miss; stops short of the cell
    assert out.tolist() == [True, False, False]


def test_blocked_segment_semantics(grid):
    """The query is about the segment, not the infinite line."""
    occ = occupied_cell_grid(grid, 5, 10, 10)
    before = segments_blocked(occ, [(0.0, 0.05, 1.05)], [(1.45, 0.05, 1.05)])
    through = segments_blocked(occ, [(0.0, 0.05, 1.05)], [(1.65, 0.05, 1.05)])
    assert not before[0]
    assert through[0]


def test_blocked_matches_chord_membership(grid):
    """A segment is blocked iff one of its chord cells is occupied."""
    phantom = Phantom(parts=(Box(lo=(1.3, -0.4, 0.0),
                                 hi=(1.8, 0.4, 1.7)),), chi=1.0)
    occ = rasterize_phantom(phantom, grid)
    occ_mask = occ.values.ravel() > 0
    rng = np.random.default_rng(19)
    starts = rng.uniform((-1, -2, 0), (0.5, 2, 2), size=(64, 3))
    ends = rng.uniform((2.5, -2, 0), (4.5, 2, 2), size=(64, 3))
    got = segments_blocked(occ, starts, ends)
    for i in range(64):
        cells, _ = segment_chords(grid, starts[i], ends[i])
        assert got[i] == bool(occ_mask[cells].any())


def test_blocked_batch_matches_scalar(grid):
    occ = occupied_cell_grid(grid, 2, 4, 15)
    rng = np.random.default_rng(23)
    starts = rng.uniform((-1, -2, 0), (0, 2, 2), size=(20, 3))
    ends = rng.uniform((3.5, -2, 0), (5, 2, 2), size=(20, 3))
    batch = segments_blocked(occ, starts, ends)
    single = [segments_blocked(occ, starts[i:i + 1], ends[i:i + 1])[0]
              for i in range(20)]
    assert batch.tolist() == single
