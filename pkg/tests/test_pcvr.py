import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial.distance import pdist, squareform

from mvtda.array_core import ImageStack
from mvtda.pcvr import (CloudTooLargeError, PointCloud, RipsFeature, binarize,
                        match_by_persistence, rips_persistence, run_pcvr)
from oracles import filtration_diagram


def ring_frame():
    f = np.full((5, 5), 10.0)
    f[1:4, 1:4] = 2.0
    return f


def brute_rips(points, max_scale, q):
    """Rips H_q diagram by dense linear algebra over all simplices up to triangles."""
    n = len(points)
    D = squareform(pdist(points))
    verts = [(i,) for i in range(n)]
    edges = [e for e in itertools.combinations(range(n), 2) if D[e] <= max_scale]
    es = set(edges)
    tris = [t for t in itertools.combinations(range(n), 3)
            if all(p in es for p in itertools.combinations(t, 2))]
    vals = [[0.0] * n, [D[e] for e in edges], [max(D[a, b], D[a, c], D[b, c]) for a, b, c in tris]]
    pairs = filtration_diagram([verts, edges, tris], vals, q)
    out = []
    for b, d in pairs:
        d = max_scale if d is None else d
        if d > b:
            out.append((round(b, 9), round(d, 9)))
    return sorted(out)


def diagram(points, max_scale, q):
    pd = rips_persistence(PointCloud(np.asarray(points, float)), max_scale)
    return sorted((round(p.birth, 9), round(p.death, 9)) for p in pd.in_dim(q))


def test_binarize_threshold_cases():
    f = ring_frame()
    assert len(binarize(f, 11.0)) == 0
    assert len(binarize(f, f.min())) == 25
    pts = binarize(f, 10.0).points
    assert len(pts) == 16
    assert all(r in (1, 5) or c in (1, 5) for r, c in pts)


def test_binarize_uses_one_based_centres():
    f = np.zeros((3, 4))
    f[2, 3] = 1.0
    np.testing.assert_array_equal(binarize(f, 1.0).points, [[3.0, 4.0]])


@pytest.mark.parametrize("seed", range(6))
def test_random_clouds_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(1, 7, size=(9, 2)).astype(float)
    pts = np.unique(pts, axis=0)
    for q in (0, 1):
        assert diagram(pts, 4.0, q) == brute_rips(pts, 4.0, q)


@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), min_size=2, max_size=12,
                unique=True))
def test_components_die_at_spanning_tree_weights(pts):
    pts = np.array(pts, float)
    big = 100.0
    deaths = sorted(p.death for p in rips_persistence(PointCloud(pts), big).in_dim(0)
                    if not p.essential)
    mst = minimum_spanning_tree(squareform(pdist(pts))).data
    np.testing.assert_allclose(deaths, np.sort(mst[mst > 0]), atol=1e-12)


@given(st.floats(0, 2 * np.pi), st.floats(-20, 20), st.floats(-20, 20))
def test_rigid_motion_invariance(angle, dx, dy):
    pts = binarize(ring_frame(), 10.0).points
    R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    moved = pts @ R.T + [dx, dy]
    for q in (0, 1):
        a = np.array(diagram(pts, 6.0, q))
        b = np.array(diagram(moved, 6.0, q))
        np.testing.assert_allclose(a, b, atol=1e-6)


def test_ring_has_one_dominant_loop():
    pd = rips_persistence(binarize(ring_frame(), 10.0), 6.0)
    h1 = sorted((p.persistence for p in pd.in_dim(1)), reverse=True)
    assert len(h1) >= 1
    assert h1[0] > 1.0
    assert all(p < h1[0] / 2 for p in h1[1:])


def test_equilateral_triangle_has_no_loop():
    s = 2.0
    pts = [[0.0, 0.0], [s, 0.0], [s / 2, s * np.sqrt(3) / 2]]
    # the triangle enters together with its last edge, so the loop never lives
    assert diagram(pts, 10.0, 1) == brute_rips(pts, 10.0, 1) == []
    assert diagram(pts, 10.0, 0) == [(0.0, 2.0), (0.0, 2.0), (0.0, 10.0)]


def test_square_loop():
    pts = [[0, 0], [0, 1], [1, 1], [1, 0]]
    assert diagram(pts, 5.0, 1) == brute_rips(pts, 5.0, 1) == [(1.0, round(np.sqrt(2), 9))]


def test_two_points():
    pd = rips_persistence(PointCloud(np.array([[0.0, 0.0], [3.0, 4.0]])), 10.0)
    assert sorted((p.birth, p.death, p.essential) for p in pd.in_dim(0)) == \
        [(0.0, 5.0, False), (0.0, 10.0, True)]
    assert pd.in_dim(1) == []


def test_loop_beyond_max_scale_is_essential():
    pts = [[0, 0], [0, 2], [2, 2], [2, 0]]
    pd, feats = rips_persistence(PointCloud(np.array(pts, float)), 2.5, return_features=True)
    assert [(p.birth, p.death, p.essential) for p in pd.in_dim(1)] == [(2.0, 2.5, True)]
    assert feats[0].essential


def test_cloud_cap():
    with pytest.raises(CloudTooLargeError, match="frame 4"):
        rips_persistence(PointCloud(np.zeros((11, 2)), 4), 1.0, max_points=10)


def feat(p, loc=(0.0, 0.0)):
    return RipsFeature(0.0, p, False, loc)


def test_one_loop_per_frame_gives_one_track():
    t = match_by_persistence([[feat(3.0)], [feat(2.5)], [feat(3.1)]])
    assert set(t.tracks()) == {1} and len(t.rows) == 3


def test_rank_swap_exchanges_identities():
    # loop A (left) outlives loop B (right) in frame 1; the order flips in frame 2
    f1 = [feat(4.0, (5.0, 5.0)), feat(2.0, (5.0, 20.0))]
    f2 = [feat(2.0, (5.0, 5.0)), feat(4.0, (5.0, 20.0))]
    tracks = match_by_persistence([f1, f2]).tracks()
    left_track = [r.track for r in tracks[1]]
    locs = [r.feature.location for r in tracks[1]]
    assert left_track == [1, 1] and locs == [(5.0, 5.0), (5.0, 20.0)]


def square_ring(frame, top, left, size):
    frame[top:top + size, left:left + size] = 10.0
    frame[top + 1:top + size - 1, left + 1:left + size - 1] = 0.0


def test_rank_swap_on_real_clouds():
    f1, f2 = np.zeros((12, 30)), np.zeros((12, 30))
    square_ring(f1, 1, 1, 9)   # big loop on the left
    square_ring(f1, 1, 15, 5)  # small loop on the right
    square_ring(f2, 1, 1, 5)   # sizes trade places
    square_ring(f2, 1, 15, 9)
    tracks, _, _ = run_pcvr(ImageStack(np.stack([f1, f2], axis=-1)), 5.0, max_scale=8.0,
                            min_persistence=0.5)
    cols = [r.feature.location[1] for r in tracks.tracks()[1]]
    # track 1 jumps from the left loop to the right one
    assert cols[0] < 12 < cols[1]


def test_empty_frame_ends_tracks():
    t = match_by_persistence([[feat(3.0)], [], [feat(3.0)]])
    assert sorted(t.tracks()) == [1, 2]


def test_min_persistence_filter():
    t = match_by_persistence([[feat(3.0), feat(0.2)]], min_persistence=1.0)
    assert len(t.rows) == 1


def test_track_csv(tmp_path):
    t = match_by_persistence([[feat(3.0)], [feat(2.0)]])
    t.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("track,frame,rank") and len(lines) == 3
