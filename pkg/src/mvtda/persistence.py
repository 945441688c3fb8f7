"""Persistent homology of upper-level-set filtrations over GF(2).

The general path is a column reduction of the boundary matrix with clearing:
dimensions are reduced from the top down and every column whose simplex was
already found as a pivot row is skipped. Columns are sorted arrays of filtration
positions, so adding two columns is a merge that drops common entries.

For the top dimension of a full box (H2 of a 3D stack, H1 of a single frame)
there is a faster route. Pairs of codimension-1 and top simplices are exactly
the merges of a union-find run backwards over the dual graph, in which top
simplices are nodes, codimension-1 simplices are edges, and the outer face is
one extra node that exists from the start.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from numba.typed import List

from .filtration import FilteredComplex, GridComplex


@dataclass(frozen=True)
class PersistencePoint:
    dim: int
    birth: float
    death: float
    essential: bool = False
    # global simplex ids; death_id is -1 for essential classes
    birth_id: int = field(default=-1, compare=False)
    death_id: int = field(default=-1, compare=False)

    @property
    def persistence(self) -> float:
        # upper-level diagrams have birth >= death, Rips diagrams the reverse
        return abs(self.birth - self.death)

    def as_dict(self) -> dict:
        return {"dim": self.dim, "birth": self.birth, "death": self.death,
                "essential": self.essential}


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    points: tuple[PersistencePoint, ...]
    max_dim: int
    complex: GridComplex | None = field(default=None, repr=False)

    @property
    def betti(self) -> list[int]:
        counts = [0] * (self.max_dim + 1)
        for p in self.points:
            counts[p.dim] += 1
        return counts

    def in_dim(self, m: int) -> list[PersistencePoint]:
        return [p for p in self.points if p.dim == m]

    def pairs(self, m: int | None = None) -> list[tuple[int, float, float]]:
        """Sorted ``(dim, birth, death)`` triples, for multiset comparisons."""
        return sorted((p.dim, p.birth, p.death) for p in self.points
                      if m is None or p.dim == m)

    def provenance(self, p: PersistencePoint) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Vertex tuples of the birth and death simplices of ``p``."""
        if self.complex is None:
            return (), ()
        b = self.complex.simplex(p.birth_id) if p.birth_id >= 0 else ()
        d = self.complex.simplex(p.death_id) if p.death_id >= 0 else ()
        return b, d

    def to_json(self) -> dict:
        return {"points": [p.as_dict() for p in self.points]}


def write_diagram(pd: PersistenceDiagram, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dim", "birth", "death", "essential"])
            for p in pd.points:
                w.writerow([p.dim, repr(p.birth), repr(p.death), str(p.essential).lower()])
    else:
        path.write_text(json.dumps(pd.to_json(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def _add_columns(a, b):
    out = np.empty(a.size + b.size, dtype=np.int64)
    i = j = n = 0
    while i < a.size and j < b.size:
        if a[i] < b[j]:
            out[n] = a[i]
            i += 1
            n += 1
        elif a[i] > b[j]:
            out[n] = b[j]
            j += 1
            n += 1
        else:
            i += 1
            j += 1
    while i < a.size:
        out[n] = a[i]
        i += 1
        n += 1
    while j < b.size:
        out[n] = b[j]
        j += 1
        n += 1
    return out[:n]


@njit(cache=True, nogil=True)
def _reduce(indptr, indices, skip, n_total):
    """Reduce columns in the given order; returns the low (or -1) of each."""
    n_cols = indptr.size - 1
    owner = np.full(n_total, -1, dtype=np.int64)
    lows = np.full(n_cols, -1, dtype=np.int64)
    empty = np.empty(0, dtype=np.int64)
    reduced = List()
    for c in range(n_cols):
        if skip[c]:
            reduced.append(empty)
            continue
        col = indices[indptr[c]:indptr[c + 1]].copy()
        while col.size > 0:
            j = owner[col[-1]]
            if j < 0:
                break
            col = _add_columns(col, reduced[j])
        reduced.append(col)
        if col.size > 0:
            owner[col[-1]] = c
            lows[c] = col[-1]
    return lows


@njit(cache=True, nogil=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True, nogil=True)
def _dual_pairs(seq_is_top, seq_row, cof, n_top):
    """Backward union-find on the dual graph.

    ``seq_*`` list the codimension-1 and top simplices in forward filtration
    order. Returns ``(face_row, top_row)`` pairs.
    """
    n = seq_row.size
    parent = np.arange(n_top + 1)
    key = np.full(n_top + 1, -1, dtype=np.int64)
    top_at = np.full(n_top + 1, -1, dtype=np.int64)
    key[n_top] = n + 1  # outer face: older than everything
    faces = np.empty(n, dtype=np.int64)
    tops = np.empty(n, dtype=np.int64)
    n_pairs = 0
    for i in range(n - 1, -1, -1):
        r = seq_row[i]
        if seq_is_top[i]:
            key[r] = i
            top_at[r] = r
            continue
        a = cof[r, 0]
        b = cof[r, 1]
        if b < 0:
            b = n_top
        ra = _find(parent, a)
        rb = _find(parent, b)
        if ra == rb:
            continue
        if key[ra] < key[rb]:
            ra, rb = rb, ra
        # rb is younger in the backward sweep; its oldest top simplex dies here
        faces[n_pairs] = r
        tops[n_pairs] = top_at[rb]
        n_pairs += 1
        parent[rb] = ra
    return faces[:n_pairs], tops[:n_pairs]


# ---------------------------------------------------------------------------
# general reduction

def boundary_columns(fc: FilteredComplex, k: int):
    """CSR boundary of the ``k``-simplices in filtration order, entries as positions.

    Returns ``(indptr, indices, col_positions)``.
    """
    cx = fc.complex
    faces = cx.faces[k]
    col_gid = cx.offsets[k] + np.arange(faces.shape[0])
    col_pos = fc.position[col_gid]
    order = np.argsort(col_pos)
    entries = np.sort(fc.position[cx.offsets[k - 1] + faces[order]], axis=1)
    indptr = np.arange(faces.shape[0] + 1, dtype=np.int64) * (k + 1)
    return indptr, entries.ravel().astype(np.int64), col_pos[order]


def persistence_pairs(fc: FilteredComplex, max_dim: int):
    """All persistence pairs as ``(dim, birth_gid, death_gid)``; death -1 if essential.

    Zero-persistence pairs are included.
    """
    cx = fc.complex
    top = min(max_dim + 1, cx.dim)
    n_total = cx.n_simplices
    cleared = np.zeros(n_total, dtype=np.bool_)
    paired = np.zeros(n_total, dtype=np.bool_)
    out = []
    for k in range(top, 0, -1):
        indptr, indices, col_pos = boundary_columns(fc, k)
        skip = cleared[col_pos]
        lows = _reduce(indptr, indices, skip, n_total)
        hit = lows >= 0
        births = fc.order[lows[hit]]
        deaths = fc.order[col_pos[hit]]
        cleared[lows[hit]] = True
        paired[lows[hit]] = True
        paired[col_pos[hit]] = True
        if k - 1 <= max_dim:
            out.extend(zip([k - 1] * len(births), births.tolist(), deaths.tolist()))
    dims_by_pos = fc.global_dims()[fc.order]
    ess = np.flatnonzero(~paired & (dims_by_pos <= max_dim))
    for pos in ess:
        out.append((int(dims_by_pos[pos]), int(fc.order[pos]), -1))
    return out


def compute_persistence(fc: FilteredComplex, max_dim: int | None = None) -> PersistenceDiagram:
    """Persistence diagram of ``fc`` up to ``max_dim`` (default ``M - 1``).

    Zero-persistence pairs are left out; essential classes die at the global
    minimum value.
    """
    cx = fc.complex
    if max_dim is None:
        max_dim = max(cx.dim - 1, 0)
    if max_dim < 0:
        raise ValueError("max_dim must be non-negative")
    allv = fc.flat_values()
    vmin = float(allv.min())
    points = []
    for dim, b, d in persistence_pairs(fc, max_dim):
        if d < 0:
            points.append(PersistencePoint(dim, float(allv[b]), vmin, True, b, -1))
        elif allv[b] > allv[d]:
            points.append(PersistencePoint(dim, float(allv[b]), float(allv[d]), False, b, d))
    points.sort(key=lambda p: (p.dim, -p.persistence, -p.birth, p.birth_id))
    return PersistenceDiagram(tuple(points), max_dim, cx)


# ---------------------------------------------------------------------------
# top dimension via duality

def top_pairs_from_values(cx: GridComplex, values) -> tuple[np.ndarray, np.ndarray]:
    """``(face_row, top_row)`` pairs of dimension ``cx.dim - 1``, zero-persistence included.

    ``values`` holds per-dimension simplex values; only the last two are read.
    """
    if not cx.is_full_dimensional():
        raise ValueError("duality shortcut needs a full-dimensional grid")
    top = cx.dim
    vf, vt = values[top - 1], values[top]
    nf, nt = vf.size, vt.size
    allv = np.concatenate([vf, vt])
    is_top = np.concatenate([np.zeros(nf, np.bool_), np.ones(nt, np.bool_)])
    rows = np.concatenate([np.arange(nf), np.arange(nt)])
    seq = np.lexsort((rows, is_top, -allv))
    return _dual_pairs(is_top[seq], rows[seq].astype(np.int64), cx.cofaces_top, nt)


def top_dimension_diagram(fc: FilteredComplex) -> PersistenceDiagram:
    """H_{M-1} diagram of a full box by the dual union-find."""
    cx = fc.complex
    top = cx.dim
    f, t = top_pairs_from_values(cx, fc.values)
    vf, vt = fc.values[top - 1][f], fc.values[top][t]
    keep = vf > vt
    points = [PersistencePoint(top - 1, float(b), float(d), False,
                               int(cx.offsets[top - 1] + fr), int(cx.offsets[top] + tr))
              for b, d, fr, tr in zip(vf[keep], vt[keep], f[keep], t[keep])]
    points.sort(key=lambda p: (-p.persistence, -p.birth, p.birth_id))
    return PersistenceDiagram(tuple(points), top - 1, cx)


def top_max_persistence(cx: GridComplex, flat: np.ndarray) -> tuple[float, float, float, int, int]:
    """Most persistent H_{M-1} feature of the upper-star filtration of ``flat``.

    Returns ``(rho, birth, death, birth_row, death_row)``; rows are -1 and
    rho is 0 when there is no feature. Ties go to the larger birth, then to the
    lexicographically smaller birth simplex (rows are in lexicographic order),
    then to the smaller death simplex.
    """
    top = cx.dim
    vf = flat[cx.simplices[top - 1]].min(axis=1)
    vt = flat[cx.simplices[top]].min(axis=1)
    f, t = top_pairs_from_values(cx, (None,) * (top - 1) + (vf, vt))
    if f.size == 0:
        return 0.0, float("nan"), float("nan"), -1, -1
    b, d = vf[f], vt[t]
    rho = b - d
    best = np.lexsort((t, f, -b, -rho))[0]
    if rho[best] <= 0:
        return 0.0, float("nan"), float("nan"), -1, -1
    return float(rho[best]), float(b[best]), float(d[best]), int(f[best]), int(t[best])


# ---------------------------------------------------------------------------
# brute-force Betti numbers

def _gf2_rank(columns: list[int]) -> int:
    pivots: dict[int, int] = {}
    rank = 0
    for col in columns:
        while col:
            hb = col.bit_length() - 1
            if hb in pivots:
                col ^= pivots[hb]
            else:
                pivots[hb] = col
                rank += 1
                break
    return rank


def betti_at(fc: FilteredComplex, delta: float, max_dim: int | None = None) -> list[int]:
    """Betti numbers of ``{sigma : value(sigma) >= delta}`` by rank-nullity."""
    cx = fc.complex
    if max_dim is None:
        max_dim = max(cx.dim - 1, 0)
    masks = fc.subcomplex_mask(delta)
    n = [int(m.sum()) for m in masks] + [0]
    ranks = [0] * (cx.dim + 2)
    for k in range(1, cx.dim + 1):
        rows = np.flatnonzero(masks[k])
        cols = []
        for face_rows in cx.faces[k][rows]:
            v = 0
            for fr in face_rows:
                v ^= 1 << int(fr)
            cols.append(v)
        ranks[k] = _gf2_rank(cols)
    return [n[k] - ranks[k] - ranks[k + 1] if k <= cx.dim else 0
            for k in range(max_dim + 1)]
