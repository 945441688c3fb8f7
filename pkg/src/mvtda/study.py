"""Simulation study: score MV and PCVR loop tracking against known truth.

A true loop at frame ``o`` is a *dot*; a true loop present at ``o`` and
``o + 1`` is a *link*. A method's score is the number of dots and links it
recovers divided by the number of true dots and links.

MV recovers a dot when the loop's indicator vector lies in the GF(2) span of
the enclosure vectors of the H1 zigzag representatives at that slice. The
enclosure vector of a cycle records, for each true loop at that frame,
whether the cycle winds an odd number of times around a probe point in the
loop's hole. MV recovers a link when some combination of intervals alive
from slice ``o`` through slice ``o + 1`` encloses exactly that loop at both
slices.

PCVR features are located by their killing triangle's centroid; a feature
within ``r_in + 1`` of a loop's centre sits in that loop's hole. Each loop is
assigned the rank-matched track that sits in its hole most often, and PCVR
recovers a dot or link only through that track.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filtration import GridComplex
from .maxtest import MaxTestConfig
from .pcvr import TrackTable, run_pcvr
from .pipeline import analyse
from .plotting import track_chart_svg
from .simgen import NoiseSpec, PatternSpec, TruthTable, generate, load_config, pattern_spec
from .smoothing import SmootherConfig
from .zigzag import ZigzagDiagram

PROBE_OFFSET = (0.3, 0.6)


# ---------------------------------------------------------------------------
# GF(2) helpers on small dense matrices

def _rank(M: np.ndarray) -> int:
    M = (M.astype(np.uint8) & 1).copy()
    r = 0
    for c in range(M.shape[1]):
        hit = np.flatnonzero(M[r:, c])
        if hit.size == 0:
            continue
        s = r + hit[0]
        M[[r, s]] = M[[s, r]]
        below = np.flatnonzero(M[:, c])
        M[below[below != r]] ^= M[r]
        r += 1
        if r == M.shape[0]:
            break
    return r


def _solvable(A: np.ndarray, b: np.ndarray) -> bool:
    """Whether ``A x = b`` has a solution over GF(2)."""
    if A.shape[1] == 0:
        return not b.any()
    return _rank(A) == _rank(np.column_stack([A, b]))


# ---------------------------------------------------------------------------
# MV scoring

def enclosure(cx: GridComplex, cycle: int, probes) -> np.ndarray:
    """Crossing parity of a rightward ray from each probe with the cycle's edges."""
    if not probes:
        return np.zeros(0, dtype=np.uint8)
    rows = np.array([i for i in range(cycle.bit_length()) if cycle >> i & 1], dtype=np.int64)
    d2 = cx.dims[1]
    if rows.size == 0:
        return np.zeros(len(probes), dtype=np.uint8)
    e = cx.simplices[1][rows]
    r0, c0 = np.divmod(e[:, 0], d2)
    r1, c1 = np.divmod(e[:, 1], d2)
    out = np.zeros(len(probes), dtype=np.uint8)
    for k, (pr, pc) in enumerate(probes):
        pr0, pc0 = pr - 1, pc - 1  # to 0-based grid coordinates
        straddle = (r0 < pr0) != (r1 < pr0)
        if not straddle.any():
            continue
        t = (pr0 - r0[straddle]) / (r1[straddle] - r0[straddle])
        xc = c0[straddle] + t * (c1[straddle] - c0[straddle])
        out[k] = int(np.count_nonzero(xc > pc0)) & 1
    return out


def _probes(table: TruthTable, frame: int):
    loops = table.loops_at(frame)
    return [r.loop_id for r in loops], [(r.center[0] + PROBE_OFFSET[0],
                                         r.center[1] + PROBE_OFFSET[1]) for r in loops]


def score_mv(zz: ZigzagDiagram | None, cx: GridComplex | None, table: TruthTable):
    """Recovered dots and links of the MV zigzag output."""
    dots, links = set(), set()
    if zz is None:
        return dots, links
    h1 = zz.in_dim(1)
    W = {}
    for o in range(1, table.n_frames + 1):
        ids, probes = _probes(table, o)
        pos = 2 * o - 1
        alive = [iv for iv in h1 if iv.covers(pos)]
        cols = [enclosure(cx, iv.representatives[pos], probes) for iv in alive]
        W[o] = (ids, {id(iv): c for iv, c in zip(alive, cols)})
        A = np.column_stack(cols) if cols else np.zeros((len(ids), 0), np.uint8)
        for k, lid in enumerate(ids):
            e = np.zeros(len(ids), np.uint8)
            e[k] = 1
            if _solvable(A, e):
                dots.add((lid, o))
    for lid, o in table.links:
        ids0, c0 = W[o]
        ids1, c1 = W[o + 1]
        both = [iv for iv in h1 if iv.birth_index <= 2 * o - 1 and iv.death_index >= 2 * o + 1]
        if not both:
            continue
        A = np.vstack([np.column_stack([c0[id(iv)] for iv in both]),
                       np.column_stack([c1[id(iv)] for iv in both])])
        e = np.zeros(len(ids0) + len(ids1), np.uint8)
        e[ids0.index(lid)] = 1
        e[len(ids0) + ids1.index(lid)] = 1
        if _solvable(A, e):
            links.add((lid, o))
    return dots, links


# ---------------------------------------------------------------------------
# PCVR scoring

def score_pcvr(tracks: TrackTable, table: TruthTable):
    """Recovered dots and links of the PCVR track table.

    Each true loop is assigned the track that holds a feature in its hole at
    the most frames (ties go to the smaller track id). Only that track counts,
    so identity swaps from rank matching cost dots and links.
    """
    hits: dict[int, dict[int, set[int]]] = {}  # loop -> track -> frames
    for row in tracks.rows:
        loc = row.feature.location
        for ring in table.loops_at(row.frame):
            if np.hypot(loc[0] - ring.center[0], loc[1] - ring.center[1]) <= ring.r_in + 1.0:
                hits.setdefault(ring.loop_id, {}).setdefault(row.track, set()).add(row.frame)
    dots, links = set(), set()
    for lid, by_track in hits.items():
        best = min(by_track, key=lambda tid: (-len(by_track[tid]), tid))
        frames = by_track[best]
        dots.update((lid, o) for o in frames)
        links.update((lid, o) for l, o in table.links if l == lid and o in frames and o + 1 in frames)
    return dots, links


# ---------------------------------------------------------------------------
# study driver

@dataclass(frozen=True)
class StudySettings:
    smoother: SmootherConfig = field(default_factory=lambda: SmootherConfig(2, 0.03))
    permutations: int = 99
    alpha: float = 0.05
    pcvr_threshold: float = 5.0
    pcvr_min_persistence: float = 1.5
    pcvr_max_scale: float = 6.0

    @classmethod
    def from_config(cls, cfg: dict | None = None) -> "StudySettings":
        d = (cfg if cfg is not None else load_config())["defaults"]
        return cls(SmootherConfig(int(d["smooth_degree"]), float(d["smooth_span"])),
                   int(d["permutations"]), float(d["alpha"]), float(d["pcvr_threshold"]),
                   float(d["pcvr_min_persistence"]), float(d["pcvr_max_scale"]))


@dataclass
class ReplicateScore:
    pattern: str
    replicate: int
    reject: bool
    truth_dots: int
    truth_links: int
    mv_dots: set
    mv_links: set
    pcvr_dots: set
    pcvr_links: set


@dataclass
class StudyResult:
    rows: list[ReplicateScore]
    tables: dict[str, TruthTable]

    def rate(self, method: str, pattern: str | None = None) -> float:
        rows = [r for r in self.rows if pattern is None or r.pattern == pattern]
        total = sum(r.truth_dots + r.truth_links for r in rows)
        if total == 0:
            return float("nan")
        got = sum(len(getattr(r, f"{method}_dots")) + len(getattr(r, f"{method}_links"))
                  for r in rows)
        return got / total

    def summary(self) -> dict:
        patterns = sorted({r.pattern for r in self.rows})
        return {
            "replicates": len(self.rows),
            "mv_rate": self.rate("mv") if self.rows else None,
            "pcvr_rate": self.rate("pcvr") if self.rows else None,
            "rejection_rate": (sum(r.reject for r in self.rows) / len(self.rows))
            if self.rows else None,
            "per_pattern": {p: {"mv_rate": self.rate("mv", p), "pcvr_rate": self.rate("pcvr", p)}
                            for p in patterns},
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "study.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pattern", "replicate", "reject", "truth_dots", "truth_links",
                        "mv_dots", "mv_links", "pcvr_dots", "pcvr_links"])
            for r in self.rows:
                w.writerow([r.pattern, r.replicate, str(r.reject).lower(), r.truth_dots,
                            r.truth_links, len(r.mv_dots), len(r.mv_links), len(r.pcvr_dots),
                            len(r.pcvr_links)])
        (out / "study.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        (out / "study.svg").write_text(self.chart())

    def chart(self) -> str:
        """Loop-by-frame chart; a method's marker shows when it recovers it in most replicates."""
        labels, layers = [], {"truth": (set(), set()), "MV": (set(), set()), "PCVR": (set(), set())}
        row = 0
        n_frames = max((t.n_frames for t in self.tables.values()), default=1)
        for pid in sorted(self.tables):
            table = self.tables[pid]
            reps = [r for r in self.rows if r.pattern == pid]
            for lid in table.loop_ids:
                labels.append(f"{pid} loop {lid}")
                for (l, o) in table.dots:
                    if l != lid:
                        continue
                    layers["truth"][0].add((row, o))
                    for name, attr in (("MV", "mv_dots"), ("PCVR", "pcvr_dots")):
                        if reps and 2 * sum((l, o) in getattr(r, attr) for r in reps) > len(reps):
                            layers[name][0].add((row, o))
                for (l, o) in table.links:
                    if l != lid:
                        continue
                    layers["truth"][1].add((row, o))
                    for name, attr in (("MV", "mv_links"), ("PCVR", "pcvr_links")):
                        if reps and 2 * sum((l, o) in getattr(r, attr) for r in reps) > len(reps):
                            layers[name][1].add((row, o))
                row += 1
        return track_chart_svg(labels, n_frames, layers, "loop detection by method")


def replicate_seeds(seed: int, pattern_index: int, replicate: int) -> tuple[int, int]:
    """Independent (noise, permutation) seeds for one replicate."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(pattern_index, replicate))
    a, b = ss.generate_state(2, dtype=np.uint32)
    return int(a), int(b)


def run_replicate(spec: PatternSpec, noise: NoiseSpec, settings: StudySettings, test_seed: int,
                  replicate: int = 0, threads: int = 1) -> ReplicateScore:
    raw, _, table = generate(spec, noise)
    mcfg = MaxTestConfig(B=settings.permutations, m=2, alpha=settings.alpha, seed=test_seed,
                         smoother=settings.smoother)
    res = analyse(raw, mcfg, "union", threads, full_diagram=False)
    mv_dots, mv_links = score_mv(res.zigzag, res.sequence.complex if res.sequence else None,
                                 table)
    tracks, _, _ = run_pcvr(raw, settings.pcvr_threshold, settings.pcvr_max_scale,
                            settings.pcvr_min_persistence)
    p_dots, p_links = score_pcvr(tracks, table)
    return ReplicateScore(spec.id, replicate, res.test.reject, len(table.dots), len(table.links),
                          mv_dots, mv_links, p_dots, p_links)


def run_study(patterns, replicates: int, seed: int = 0, settings: StudySettings | None = None,
              config: dict | None = None, threads: int = 1, noise_scale: float = 1.0,
              progress=None) -> StudyResult:
    """Score both methods on ``replicates`` noisy draws of each pattern."""
    if replicates < 0:
        raise ValueError("replicates must be non-negative")
    cfg = config if config is not None else load_config()
    settings = settings or StudySettings.from_config(cfg)
    d = cfg["defaults"]
    rows, tables = [], {}
    for k, pid in enumerate(patterns):
        spec = pattern_spec(pid, cfg)
        tables[pid] = generate(spec, NoiseSpec())[2]
        for r in range(replicates):
            noise_seed, test_seed = replicate_seeds(seed, k, r)
            noise = NoiseSpec("gaussian", float(d["mu0"]), float(d["sigma0"]) * noise_scale,
                              noise_seed)
            rows.append(run_replicate(spec, noise, settings, test_seed, r, threads))
            if progress is not None:
                progress(rows[-1])
    return StudyResult(rows, tables)
