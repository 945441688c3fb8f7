"""Zigzag persistence of a slice / join sequence by streaming basis updates.

The interleaved sequence ``K_1 -> K_1 u K_2 <- K_2 -> ...`` is refined into
single-simplex steps starting from the empty complex: entering a join inserts
simplices in increasing dimension, leaving it deletes simplices in decreasing
dimension (the intersection variant swaps the two). Per dimension we keep

* boundary generators: a boundary cycle plus a chain one dimension up whose
  boundary it is,
* representative cycles: one per live interval, with its birth step and
  whether it was born by an insertion (forward) or a deletion (backward),

and an echelon form of the cycle space whose columns carry labels saying
which generators they sum. All vectors are Python ints used as GF(2) bitsets
over simplex rows.

When a step kills a class, which interval ends is fixed by a total order on
live classes. Backward-born classes come first, latest birth lowest; then
forward-born classes, earliest birth lowest. An insertion that bounds a
combination of classes ends the highest class involved. A deletion of a
simplex that lies on some representatives ends the lowest of them. These are
the choices for which the remaining classes still generate interval summands.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filtration import GridComplex
from .partition import SliceComplexSequence, is_closed, subset


class ZigzagStructureError(ValueError):
    """The sequence is not an alternating chain of inclusions."""


@dataclass(frozen=True)
class ZigzagInterval:
    dim: int
    birth_index: int
    death_index: int
    birth_time: float
    death_time: float
    # representative cycle (edge or vertex rows as an int bitset) at each slice position
    representatives: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def length(self) -> int:
        return self.death_index - self.birth_index

    def covers(self, index: int) -> bool:
        return self.birth_index <= index <= self.death_index


@dataclass(frozen=True)
class ZigzagDiagram:
    intervals: tuple[ZigzagInterval, ...]
    sequence_length: int
    time_spacing: float = 1.0

    def in_dim(self, m: int) -> list[ZigzagInterval]:
        return [iv for iv in self.intervals if iv.dim == m]

    def multiset(self, m: int | None = None) -> list[tuple[int, int, int]]:
        return sorted((iv.dim, iv.birth_index, iv.death_index) for iv in self.intervals
                      if m is None or iv.dim == m)

    def coverage(self, index: int, m: int) -> int:
        return sum(1 for iv in self.intervals if iv.dim == m and iv.covers(index))


def index_time(index: int, spacing: float) -> float:
    """Seconds at interleaved position ``index``; joins fall on half steps."""
    return ((index + 1) / 2 - 1) * spacing


# ---------------------------------------------------------------------------
# basis maintenance

_BND, _REP = 0, 1


class _Gen:
    __slots__ = ("kind", "vec", "chain", "birth", "fwd")

    def __init__(self, kind, vec, chain=0, birth=-1, fwd=True):
        self.kind = kind
        self.vec = vec
        self.chain = chain
        self.birth = birth
        self.fwd = fwd

    def rank_key(self):
        return (1, self.birth) if self.fwd else (0, -self.birth)


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class _Dim:
    """Generators and echelon form of the cycle space in one dimension."""

    def __init__(self):
        self.gens: dict[int, _Gen] = {}
        self.rep_mask = 0
        self.cols: dict[int, list[int]] = {}  # low -> [vec, label]

    def reduce(self, v: int) -> tuple[int, int]:
        lab = 0
        cols = self.cols
        while v:
            col = cols.get(v.bit_length() - 1)
            if col is None:
                break
            v ^= col[0]
            lab ^= col[1]
        return v, lab

    def add(self, gid: int, g: _Gen) -> None:
        self.gens[gid] = g
        if g.kind == _REP:
            self.rep_mask |= 1 << gid
        v, lab = self.reduce(g.vec)
        if not v:
            raise ZigzagStructureError("new generator is dependent on the current basis")
        self.cols[v.bit_length() - 1] = [v, lab ^ (1 << gid)]

    def substitute(self, gid: int, expr: int) -> None:
        """Rewrite labels given ``old gen gid == sum of the gens in expr``."""
        bit = 1 << gid
        swap = bit ^ expr
        for col in self.cols.values():
            if col[1] & bit:
                col[1] ^= swap

    def flip_by_parity(self, gid: int, group: int) -> None:
        """Labels flip ``gid`` where they hold an odd number of ``group`` members.

        Used after every generator in ``group`` absorbed generator ``gid``.
        """
        bit = 1 << gid
        for col in self.cols.values():
            if bin(col[1] & group).count("1") & 1:
                col[1] ^= bit

    def drop(self, gid: int) -> None:
        """Remove generator ``gid`` from the spanning set and the echelon form."""
        bit = 1 << gid
        hits = [low for low, col in self.cols.items() if col[1] & bit]
        if not hits:
            raise ZigzagStructureError("generator missing from echelon labels")
        pivot = min(hits)
        pv, pl = self.cols.pop(pivot)
        for low in hits:
            if low != pivot:
                col = self.cols[low]
                col[0] ^= pv
                col[1] ^= pl
        g = self.gens.pop(gid)
        if g.kind == _REP:
            self.rep_mask &= ~bit


class _Engine:
    def __init__(self, cx: GridComplex):
        self.cx = cx
        self.top = cx.dim
        self.dims = [_Dim() for _ in range(self.top + 1)]
        self.next_id = 0
        self.step = 0
        self.closed: list[tuple[int, int, int, int]] = []  # (dim, birth, death, gid)
        self.snapshots: dict[int, dict[int, tuple[int, int]]] = {}
        self._boundaries = [None] + [
            [sum(1 << int(f) for f in row) for row in cx.faces[k]] for k in range(1, self.top + 1)]

    def _new_id(self) -> int:
        self.next_id += 1
        return self.next_id - 1

    def _close(self, q: int, gid: int, death: int) -> None:
        g = self.dims[q].gens[gid]
        self.closed.append((q, g.birth, death, gid))

    def insert(self, q: int, row: int) -> None:
        self.step += 1
        i = self.step
        if q == 0:
            bd, lab = 0, 0
        else:
            below = self.dims[q - 1]
            bd = self._boundaries[q][row]
            rest, lab = below.reduce(bd)
            if rest:
                raise ZigzagStructureError(f"inserted {q}-simplex {row} before its faces")
        if q == 0 or not (lab & self.dims[q - 1].rep_mask):
            z = 1 << row
            if q > 0:
                for gid in _bits(lab):
                    z ^= below.gens[gid].chain
            self.dims[q].add(self._new_id(), _Gen(_REP, z, birth=i, fwd=True))
            return
        reps = lab & below.rep_mask
        bnds = lab ^ reps
        dying = max(_bits(reps), key=lambda g: below.gens[g].rank_key())
        self._close(q - 1, dying, i - 1)
        new = self._new_id()
        # bd == sum(reps) + sum(bnds), so the dying class is bd plus the others
        below.substitute(dying, (1 << new) ^ reps ^ (1 << dying) ^ bnds)
        below.gens.pop(dying)
        below.rep_mask &= ~(1 << dying)
        below.gens[new] = _Gen(_BND, bd, chain=1 << row)

    def delete(self, q: int, row: int) -> None:
        self.step += 1
        i = self.step
        bit = 1 << row
        here = self.dims[q]
        holders = [g for g in _bits(here.rep_mask) if here.gens[g].vec & bit]
        if holders:
            dying = min(holders, key=lambda g: here.gens[g].rank_key())
            self._close(q, dying, i - 1)
            zp = here.gens[dying].vec
            group = 0
            for g in holders:
                if g != dying:
                    here.gens[g].vec ^= zp
                    group |= 1 << g
            here.flip_by_parity(dying, group)
            here.drop(dying)
            if q > 0:
                for g in self.dims[q - 1].gens.values():
                    if g.kind == _BND and g.chain & bit:
                        g.chain ^= zp
            return
        if q == 0:
            raise ZigzagStructureError(f"vertex {row} deleted but lies on no cycle")
        below = self.dims[q - 1]
        owners = [gid for gid, g in below.gens.items() if g.kind == _BND and g.chain & bit]
        if not owners:
            raise ZigzagStructureError(f"deleted {q}-simplex {row} is not maximal")
        t = min(owners)
        gt = below.gens[t]
        group = 0
        for gid in owners:
            if gid != t:
                g = below.gens[gid]
                g.vec ^= gt.vec
                g.chain ^= gt.chain
                group |= 1 << gid
        below.flip_by_parity(t, group)
        gt.kind, gt.chain, gt.birth, gt.fwd = _REP, 0, i, False
        below.rep_mask |= 1 << t

    def snapshot(self, position: int) -> None:
        self.snapshots[position] = {
            gid: (q, g.vec) for q, d in enumerate(self.dims)
            for gid, g in d.gens.items() if g.kind == _REP}

    def finish(self) -> None:
        for q, d in enumerate(self.dims):
            for gid, g in d.gens.items():
                if g.kind == _REP:
                    self.closed.append((q, g.birth, self.step, gid))


def _steps(prev, cur, top):
    """Deletions (top dimension first) then insertions (vertices first)."""
    dels = [(k, int(r)) for k in range(top, -1, -1)
            for r in np.flatnonzero(prev[k] & ~cur[k])] if prev is not None else []
    ins = [(k, int(r)) for k in range(top + 1)
           for r in np.flatnonzero(cur[k] & ~(prev[k] if prev is not None else False))]
    return dels, ins


def validate_sequence(seq: SliceComplexSequence) -> None:
    cx = seq.complex
    pos = seq.positions()
    for p, masks in enumerate(pos, start=1):
        if len(masks) != cx.dim + 1 or any(m.shape != s.shape[:1]
                                           for m, s in zip(masks, cx.simplices)):
            raise ZigzagStructureError(f"position {p}: masks do not match the frame complex")
        if not is_closed(cx, masks):
            raise ZigzagStructureError(f"position {p}: complex is not closed under faces")
    for p in range(len(pos) - 1):
        a, b = pos[p], pos[p + 1]
        if not (subset(a, b) or subset(b, a)):
            raise ZigzagStructureError(
                f"positions {p + 1} and {p + 2} are not related by inclusion")
    # each join must contain both neighbours or sit inside both
    for p in range(1, len(pos) - 1, 2):
        a, j, b = pos[p - 1], pos[p], pos[p + 1]
        if not ((subset(a, j) and subset(b, j)) or (subset(j, a) and subset(j, b))):
            raise ZigzagStructureError(f"position {p + 1}: arrows do not alternate")


def zigzag_persistence(seq: SliceComplexSequence, max_dim: int = 1,
                       time_spacing: float = 1.0) -> ZigzagDiagram:
    """Interval decomposition of ``H_0..H_max_dim`` along the interleaved sequence."""
    validate_sequence(seq)
    eng = _Engine(seq.complex)
    coarse_step = []
    prev = None
    for p, masks in enumerate(seq.positions(), start=1):
        dels, ins = _steps(prev, masks, eng.top)
        for q, r in dels:
            eng.delete(q, r)
        for q, r in ins:
            eng.insert(q, r)
        coarse_step.append(eng.step)
        if p % 2 == 1:
            eng.snapshot(p)
        prev = masks
    eng.finish()

    steps = np.array(coarse_step)
    out = []
    for q, b, d, gid in eng.closed:
        if q > max_dim:
            continue
        covered = np.flatnonzero((steps >= b) & (steps <= d))
        if covered.size == 0:
            continue
        bi, di = int(covered[0]) + 1, int(covered[-1]) + 1
        reps = {pos: snap[gid][1] for pos, snap in eng.snapshots.items()
                if bi <= pos <= di and gid in snap}
        out.append(ZigzagInterval(q, bi, di, index_time(bi, time_spacing),
                                  index_time(di, time_spacing), reps))
    out.sort(key=lambda iv: (iv.dim, iv.birth_index, iv.death_index))
    return ZigzagDiagram(tuple(out), seq.sequence_length, time_spacing)


# ---------------------------------------------------------------------------
# output

def write_zigzag_csv(zz: ZigzagDiagram, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", "birth_index", "death_index", "birth_time", "death_time"])
        for iv in zz.intervals:
            w.writerow([iv.dim, iv.birth_index, iv.death_index,
                        repr(iv.birth_time), repr(iv.death_time)])


def render_zigzag(zz: ZigzagDiagram, time_spacing: float | None = None,
                  csv_path=None, svg_path=None) -> str:
    """Write the interval table and a birth/death scatter; returns the SVG text."""
    from .plotting import scatter_svg

    spacing = zz.time_spacing if time_spacing is None else time_spacing
    if spacing != zz.time_spacing:
        zz = ZigzagDiagram(tuple(
            ZigzagInterval(iv.dim, iv.birth_index, iv.death_index,
                           index_time(iv.birth_index, spacing),
                           index_time(iv.death_index, spacing), iv.representatives)
            for iv in zz.intervals), zz.sequence_length, spacing)
    if csv_path is not None:
        write_zigzag_csv(zz, csv_path)
    end = index_time(zz.sequence_length, spacing)
    series = {
        "H0": [(iv.death_time, iv.birth_time) for iv in zz.in_dim(0)],
        "H1": [(iv.death_time, iv.birth_time) for iv in zz.in_dim(1)],
    }
    svg = scatter_svg(series, xlabel="death time (s)", ylabel="birth time (s)",
                      limits=(0.0, max(end, spacing)), title="zigzag intervals",
                      diagonal=True)
    if svg_path is not None:
        Path(svg_path).write_text(svg)
    return svg
