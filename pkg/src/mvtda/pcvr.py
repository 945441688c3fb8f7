"""Point-cloud Vietoris-Rips baseline with persistence-rank matching.

Each frame is binarised at a fixed threshold, the kept pixel centres become a
point cloud, and the Rips filtration (up to triangles, capped at
``max_scale``) gives an H0/H1 diagram. Loops are then linked across frames
purely by the rank of their persistence, with no spatial information.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .array_core import ImageStack, slice_at_time
from .persistence import PersistenceDiagram, PersistencePoint, _find, _reduce


class CloudTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (n, 2) pixel centres, 1-based (row, column)
    source_frame: int = 1

    def __len__(self):
        return self.points.shape[0]


def binarize(frame, threshold: float, source_frame: int = 1) -> PointCloud:
    """Centres of the pixels with intensity >= threshold."""
    arr = frame.values if isinstance(frame, ImageStack) else np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D frame, got shape {arr.shape}")
    rows, cols = np.nonzero(arr >= threshold)
    pts = np.column_stack([rows + 1.0, cols + 1.0]) if rows.size else np.zeros((0, 2))
    return PointCloud(pts, source_frame)


@dataclass(frozen=True)
class RipsFeature:
    birth: float
    death: float
    essential: bool
    location: tuple[float, float]  # centroid of the killing triangle (or of the cycle edge)

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@njit(cache=True, nogil=True)
def _union_find(n, edges):
    """For edges in filtration order, whether each one merges two components."""
    parent = np.arange(n)
    out = np.zeros(edges.shape[0], dtype=np.bool_)
    for k in range(edges.shape[0]):
        a = _find(parent, edges[k, 0])
        b = _find(parent, edges[k, 1])
        if a != b:
            parent[max(a, b)] = min(a, b)
            out[k] = True
    return out


@njit(cache=True, nogil=True)
def _triangles(n, ei, ej, ew):
    """Triangles of the flag complex of an edge list sorted by (i, j)."""
    # adjacency (upper neighbours) in CSR form
    deg = np.zeros(n + 1, dtype=np.int64)
    for k in range(ei.size):
        deg[ei[k] + 1] += 1
    ptr = np.cumsum(deg)
    cap = 16
    tri = np.empty((cap, 3), dtype=np.int64)
    tw = np.empty(cap, dtype=np.float64)
    te = np.empty((cap, 3), dtype=np.int64)
    m = 0
    for a in range(n):
        for p in range(ptr[a], ptr[a + 1]):
            b = ej[p]
            # common upper neighbours of a and b
            q = ptr[b]
            for r in range(p + 1, ptr[a + 1]):
                c = ej[r]
                while q < ptr[b + 1] and ej[q] < c:
                    q += 1
                if q < ptr[b + 1] and ej[q] == c:
                    if m == cap:
                        cap *= 2
                        tri2 = np.empty((cap, 3), dtype=np.int64)
                        tw2 = np.empty(cap, dtype=np.float64)
                        te2 = np.empty((cap, 3), dtype=np.int64)
                        tri2[:m] = tri[:m]
                        tw2[:m] = tw[:m]
                        te2[:m] = te[:m]
                        tri, tw, te = tri2, tw2, te2
                    tri[m, 0] = a
                    tri[m, 1] = b
                    tri[m, 2] = c
                    # edge ids: (a,b)=p, (a,c)=r, (b,c)=q
                    te[m, 0] = p
                    te[m, 1] = r
                    te[m, 2] = q
                    tw[m] = max(ew[p], ew[r], ew[q])
                    m += 1
    return tri[:m], tw[:m], te[:m]


def rips_complex(points: np.ndarray, max_scale: float):
    """Vertices, edges and triangles of the Rips complex truncated at ``max_scale``."""
    n = points.shape[0]
    if n < 2:
        e = np.zeros((0, 2), dtype=np.int64)
        return e, np.zeros(0), np.zeros((0, 3), dtype=np.int64), np.zeros(0), e.reshape(0, 3)
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    i, j = np.nonzero(np.triu(dist <= max_scale, k=1))
    edges = np.column_stack([i, j]).astype(np.int64)
    w = dist[i, j]
    tri, tw, te = _triangles(n, edges[:, 0], edges[:, 1], w)
    return edges, w, tri, tw, te


def rips_persistence(cloud: PointCloud, max_scale: float, max_points: int = 2000,
                     return_features: bool = False):
    """H0/H1 diagram of the Rips filtration, scales in pixels.

    Classes still alive at ``max_scale`` are flagged essential with death
    ``max_scale``. With ``return_features`` the H1 features (with a location)
    are returned as well.
    """
    pts = np.asarray(cloud.points, dtype=np.float64)
    n = pts.shape[0]
    if n > max_points:
        raise CloudTooLargeError(
            f"point cloud of frame {cloud.source_frame} has {n} points (cap {max_points}); "
            "raise the threshold or downsample the frame")
    if n == 0:
        pd = PersistenceDiagram((), 1)
        return (pd, []) if return_features else pd
    edges, w, tri, tw, te = rips_complex(pts, max_scale)
    ne, nt = w.size, tw.size
    # filtration positions: (value, dim, index) order, separately per dimension
    # suffices because every pair joins consecutive dimensions
    e_order = np.lexsort((np.arange(ne), w))
    e_pos = np.empty(ne, dtype=np.int64)
    e_pos[e_order] = np.arange(ne)
    t_order = np.lexsort((np.arange(nt), tw))
    t_pos = np.empty(nt, dtype=np.int64)
    t_pos[t_order] = np.arange(nt)

    pairs = []  # (dim, birth value, death value or None, birth id, death id)
    merged = _union_find(n, edges[e_order]) if ne else np.zeros(0, np.bool_)
    negative = np.zeros(ne, dtype=np.bool_)
    negative[e_order[merged]] = True
    for e in e_order[merged]:
        pairs.append((0, 0.0, float(w[e]), -1, int(e)))
    for _ in range(n - int(merged.sum())):
        pairs.append((0, 0.0, None, -1, -1))

    # H1 by reducing coboundaries of edges, latest edge first; the pivot of a
    # column is its earliest cofacet triangle
    if ne:
        flat_e = te.ravel()
        flat_t = np.repeat(np.arange(nt), 3)
        srt = np.lexsort((t_pos[flat_t], flat_e))
        ptr = np.searchsorted(flat_e[srt], np.arange(ne + 1))
        rows_by_edge = (nt - 1 - t_pos[flat_t[srt]]).astype(np.int64)
        cols = e_order[::-1]
        lens = ptr[cols + 1] - ptr[cols]
        indptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
        idx = np.concatenate([rows_by_edge[ptr[c]:ptr[c + 1]][::-1] for c in cols]) \
            if nt else np.zeros(0, np.int64)
        lows = _reduce(indptr, idx.astype(np.int64), negative[cols], max(nt, 1))
        for c, low in zip(cols, lows):
            if negative[c]:
                continue
            if low >= 0:
                t = t_order[nt - 1 - low]
                pairs.append((1, float(w[c]), float(tw[t]), int(c), int(t)))
            else:
                pairs.append((1, float(w[c]), None, int(c), -1))

    points, features = [], []
    for dim, b, d, bid, did in pairs:
        ess = d is None
        if ess:
            d = float(max_scale)
        elif d <= b:
            continue
        points.append(PersistencePoint(dim, b, d, ess))
        if dim == 1:
            loc = pts[edges[bid]].mean(axis=0) if ess else pts[tri[did]].mean(axis=0)
            features.append(RipsFeature(b, d, ess, (float(loc[0]), float(loc[1]))))
    points.sort(key=lambda p: (p.dim, -p.persistence, p.birth, p.death))
    features.sort(key=lambda f: (-f.persistence, f.birth, f.location))
    pd = PersistenceDiagram(tuple(points), 1)
    return (pd, features) if return_features else pd


@dataclass(frozen=True)
class TrackedFeature:
    track: int
    frame: int
    rank: int
    feature: RipsFeature


@dataclass(frozen=True)
class TrackTable:
    rows: tuple[TrackedFeature, ...] = field(default_factory=tuple)

    def tracks(self) -> dict[int, list[TrackedFeature]]:
        out: dict[int, list[TrackedFeature]] = {}
        for r in self.rows:
            out.setdefault(r.track, []).append(r)
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["track", "frame", "rank", "birth", "death", "persistence",
                        "essential", "row", "column"])
            for r in self.rows:
                f = r.feature
                w.writerow([r.track, r.frame, r.rank, repr(f.birth), repr(f.death),
                            repr(f.persistence), str(f.essential).lower(),
                            repr(f.location[0]), repr(f.location[1])])


def match_by_persistence(features_per_frame, min_persistence: float = 0.0) -> TrackTable:
    """Link features of consecutive frames rank-to-rank by persistence.

    ``features_per_frame`` is a list (frame 1 first) of lists of
    :class:`RipsFeature`. Features below ``min_persistence`` are ignored.
    """
    rows = []
    prev_tracks: list[int] = []
    next_track = 1
    for o, feats in enumerate(features_per_frame, start=1):
        kept = sorted((f for f in feats if f.persistence >= min_persistence),
                      key=lambda f: (-f.persistence, f.birth, f.location))
        cur = []
        for rank, f in enumerate(kept, start=1):
            if rank <= len(prev_tracks):
                tid = prev_tracks[rank - 1]
            else:
                tid = next_track
                next_track += 1
            cur.append(tid)
            rows.append(TrackedFeature(tid, o, rank, f))
        prev_tracks = cur
    return TrackTable(tuple(rows))


def run_pcvr(stack: ImageStack, threshold: float, max_scale: float = 6.0,
             min_persistence: float = 0.0, max_points: int = 2000):
    """Binarise every frame, compute Rips H1 features and link them by rank."""
    feats, diagrams = [], []
    for o in range(1, stack.n_frames + 1):
        frame = slice_at_time(stack, o) if stack.time_axis is not None else stack
        pd, f = rips_persistence(binarize(frame, threshold, o), max_scale, max_points,
                                 return_features=True)
        diagrams.append(pd)
        feats.append(f)
    return match_by_persistence(feats, min_persistence), feats, diagrams
