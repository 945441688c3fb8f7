"""Synthetic time-lapse stacks of rings with known loops.

A pattern places rings (annuli) on some frames of a ``d1 x d2 x l`` grid.
Ring pixels take ``mu_ring``, pixels inside a ring take ``mu_in`` and the rest
take the background ``mu0``. Cap frames (by default the first and last) are
solid disks over every ring footprint, so each loop that reaches a frame next
to a cap encloses a void in the stacked array. Noise is i.i.d. Gaussian.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .array_core import ImageStack


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "gaussian"
    mu0: float = 0.0
    sigma0: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported noise family {self.family!r}")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be non-negative")


@dataclass(frozen=True)
class RingSpec:
    loop_id: int
    frame: int
    center: tuple[float, float]  # 1-based (row, column)
    r_in: float
    r_out: float

    def __post_init__(self):
        if not 0 <= self.r_in < self.r_out:
            raise ValueError(f"loop {self.loop_id}: need 0 <= r_in < r_out")


@dataclass(frozen=True)
class PatternSpec:
    id: str
    dims: tuple[int, int, int]
    rings: tuple[RingSpec, ...]
    caps: tuple[int, ...] = ()
    mu_ring: float = 10.0
    mu_in: float = 2.0
    time_spacing: float = 1.0
    description: str = ""

    def __post_init__(self):
        d1, d2, l = self.dims
        for r in self.rings:
            if not 1 <= r.frame <= l:
                raise ValueError(f"loop {r.loop_id}: frame {r.frame} outside 1..{l}")
            cr, cc = r.center
            # the hole needs at least one pixel of ring between it and the grid edge
            if cr - r.r_in < 1 or cr + r.r_in > d1 or cc - r.r_in < 1 or cc + r.r_in > d2:
                raise ValueError(f"loop {r.loop_id} at frame {r.frame} does not fit in {d1}x{d2}")
            if r.frame in self.caps:
                raise ValueError(f"loop {r.loop_id}: frame {r.frame} is a cap frame")
        for c in self.caps:
            if not 1 <= c <= l:
                raise ValueError(f"cap frame {c} outside 1..{l}")


@dataclass(frozen=True)
class TruthTable:
    """Which loop is present at which frame, and which presences are linked."""

    n_frames: int
    rings: tuple[RingSpec, ...]
    dots: frozenset = field(default_factory=frozenset)   # {(loop_id, frame)}
    links: frozenset = field(default_factory=frozenset)  # {(loop_id, frame)}: frame -> frame + 1

    @property
    def loop_ids(self) -> list[int]:
        return sorted({r.loop_id for r in self.rings})

    def ring(self, loop_id: int, frame: int) -> RingSpec | None:
        for r in self.rings:
            if r.loop_id == loop_id and r.frame == frame:
                return r
        return None

    def loops_at(self, frame: int) -> list[RingSpec]:
        return sorted((r for r in self.rings if r.frame == frame), key=lambda r: r.loop_id)

    def to_json(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "loops": [{"id": lid, "frames": sorted(o for i, o in self.dots if i == lid)}
                      for lid in self.loop_ids],
            "presence": [{"loop": lid, "frame": o, "present": (lid, o) in self.dots}
                         for lid in self.loop_ids for o in range(1, self.n_frames + 1)],
            "continuity": [{"loop": lid, "from": o, "to": o + 1} for lid, o in sorted(self.links)],
        }


def truth_table(spec: PatternSpec) -> TruthTable:
    dots = frozenset((r.loop_id, r.frame) for r in spec.rings)
    links = frozenset((lid, o) for lid, o in dots if (lid, o + 1) in dots)
    return TruthTable(spec.dims[2], spec.rings, dots, links)


def _distance(dims2, center):
    rows, cols = np.meshgrid(np.arange(1, dims2[0] + 1), np.arange(1, dims2[1] + 1), indexing="ij")
    return np.hypot(rows - center[0], cols - center[1])


def ring_masks(spec: PatternSpec, frame: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (ring, interior) masks of one frame."""
    d1, d2, _ = spec.dims
    ring = np.zeros((d1, d2), bool)
    inside = np.zeros((d1, d2), bool)
    for r in spec.rings:
        if r.frame != frame:
            continue
        d = _distance((d1, d2), r.center)
        ring |= (d >= r.r_in) & (d <= r.r_out)
        inside |= d < r.r_in
    return ring, inside & ~ring


def cap_mask(spec: PatternSpec) -> np.ndarray:
    d1, d2, _ = spec.dims
    out = np.zeros((d1, d2), bool)
    for r in spec.rings:
        out |= _distance((d1, d2), r.center) <= r.r_out
    return out


def truth_stack(spec: PatternSpec, mu0: float = 0.0) -> ImageStack:
    d1, d2, l = spec.dims
    vals = np.full((d1, d2, l), float(mu0))
    cap = cap_mask(spec)
    for o in range(1, l + 1):
        frame = vals[..., o - 1]
        if o in spec.caps:
            frame[cap] = spec.mu_ring
            continue
        ring, inside = ring_masks(spec, o)
        frame[inside] = spec.mu_in
        frame[ring] = spec.mu_ring
    return ImageStack(vals, spec.time_spacing)


def generate(spec: PatternSpec, noise: NoiseSpec) -> tuple[ImageStack, ImageStack, TruthTable]:
    """Noisy stack, noiseless stack and truth table for one replicate."""
    truth = truth_stack(spec, noise.mu0)
    rng = np.random.default_rng(np.random.SeedSequence(int(noise.seed)))
    raw = truth.values + rng.normal(0.0, noise.sigma0, size=truth.values.shape) \
        if noise.sigma0 > 0 else truth.values
    return ImageStack(raw, spec.time_spacing), truth, truth_table(spec)


# ---------------------------------------------------------------------------
# shipped configuration

def load_config(path=None) -> dict:
    if path is None:
        text = resources.files("mvtda").joinpath("configs/patterns.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def pattern_spec(pattern_id: str, config: dict | None = None) -> PatternSpec:
    """Build a shipped pattern (``A1``..``A4``) or the 5x5x4 ``cylinder``."""
    if pattern_id == "cylinder":
        return cylinder_spec()
    cfg = config if config is not None else load_config()
    pats = cfg["patterns"]
    if pattern_id not in pats:
        raise KeyError(f"unknown pattern {pattern_id!r}; known: {sorted(pats)} and 'cylinder'")
    dflt = cfg["defaults"]
    p = pats[pattern_id]
    rings = []
    for loop in p["loops"]:
        for o, c in zip(loop["frames"], loop["center"]):
            rings.append(RingSpec(int(loop["id"]), int(o), (float(c[0]), float(c[1])),
                                  float(loop["r_in"]), float(loop["r_out"])))
    return PatternSpec(pattern_id, tuple(p.get("dims", dflt["dims"])), tuple(rings),
                       tuple(p.get("caps", dflt["caps"])), float(dflt["mu_ring"]),
                       float(dflt["mu_in"]), float(dflt["time_spacing"]), p.get("description", ""))


def default_noise(seed: int = 0, config: dict | None = None) -> NoiseSpec:
    dflt = (config if config is not None else load_config())["defaults"]
    return NoiseSpec("gaussian", float(dflt["mu0"]), float(dflt["sigma0"]), seed)


def cylinder_spec(mu_ring: float = 10.0, mu_in: float = 2.0, frames: int = 4) -> PatternSpec:
    """5x5 border ring around a 3x3 interior on the middle frames, solid caps at both ends."""
    rings = tuple(RingSpec(1, o, (3.0, 3.0), 1.9, 3.0) for o in range(2, frames))
    return PatternSpec("cylinder", (5, 5, frames), rings, (1, frames), mu_ring, mu_in, 1.0,
                       "hollow cylinder")


def write_simulation(spec: PatternSpec, noise: NoiseSpec, out_dir) -> dict:
    """Write the noisy stack, truth masks and truth table; returns the paths."""
    from .array_core import save_stack

    out_dir = Path(out_dir)
    raw, truth, table = generate(spec, noise)
    manifest = save_stack(raw, out_dir, "frame")
    truth_manifest = save_stack(truth, out_dir / "truth", "truth")
    masks = []
    for o in range(1, spec.dims[2] + 1):
        ring, _ = ring_masks(spec, o)
        if o in spec.caps:
            ring = cap_mask(spec)
        p = out_dir / "truth" / f"mask_{o:03d}.csv"
        np.savetxt(p, ring.astype(np.int8), fmt="%d", delimiter=",")
        masks.append(str(p.relative_to(out_dir)))
    meta = {"pattern": spec.id, "seed": noise.seed, "mu0": noise.mu0, "sigma0": noise.sigma0,
            "mu_ring": spec.mu_ring, "mu_in": spec.mu_in, "dims": list(spec.dims),
            **table.to_json()}
    table_path = out_dir / "truth_table.json"
    table_path.write_text(json.dumps(meta, indent=2) + "\n")
    return {"manifest": str(manifest), "truth_manifest": str(truth_manifest),
            "truth_table": str(table_path), "masks": masks}
