"""Threshold a stack into per-frame complexes and link neighbours by union or intersection.

Every complex here is a subcomplex of the Kuhn triangulation of one frame,
stored as one boolean mask per simplex dimension over that triangulation's rows.
Set operations on complexes are then elementwise operations on the masks.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_core import ImageStack, StackFormatError, slice_at_time
from .filtration import GridComplex, freudenthal_complex

Masks = tuple[np.ndarray, ...]


def threshold_slices(stack: ImageStack, theta: float) -> list[np.ndarray]:
    """Boolean ``(d1, d2)`` masks of pixels with ``Z >= theta``, one per frame."""
    if stack.time_axis is None:
        return [stack.values >= theta]
    return [slice_at_time(stack, o).values >= theta for o in range(1, stack.n_frames + 1)]


def induced_subcomplex(cx: GridComplex, vertex_mask: np.ndarray) -> Masks:
    """Masks of the simplices whose vertices all lie in ``vertex_mask``."""
    vm = np.asarray(vertex_mask, dtype=bool).ravel()
    if vm.size != cx.n_vertices:
        raise ValueError(f"vertex mask of size {vm.size} for {cx.n_vertices} vertices")
    return tuple(vm[s].all(axis=1) for s in cx.simplices)


def _combine(a: Masks, b: Masks, op: str) -> Masks:
    if op == "union":
        return tuple(x | y for x, y in zip(a, b))
    if op == "intersection":
        return tuple(x & y for x, y in zip(a, b))
    raise ValueError(f"unknown set operation {op!r}")


def is_closed(cx: GridComplex, masks: Masks) -> bool:
    """True when every face of an included simplex is included."""
    for k in range(1, cx.dim + 1):
        faces = cx.faces[k][masks[k]]
        if faces.size and not masks[k - 1][faces].all():
            return False
    return True


def subset(a: Masks, b: Masks) -> bool:
    return all(not np.any(x & ~y) for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class SliceComplexSequence:
    """Per-frame complexes ``K_1..K_l`` and their joins ``K_o op K_{o+1}``.

    Positions in the interleaved sequence are 1-based: slice ``o`` sits at
    ``2o - 1`` and the join of slices ``o`` and ``o + 1`` at ``2o``.
    """

    complex: GridComplex
    vertex_masks: tuple[np.ndarray, ...]
    slices: tuple[Masks, ...]
    joins: tuple[Masks, ...]
    set_op: str = "union"
    theta: float | None = None

    @property
    def frame_dims(self) -> tuple[int, ...]:
        return self.complex.dims

    @property
    def n_frames(self) -> int:
        return len(self.slices)

    @property
    def sequence_length(self) -> int:
        return 2 * len(self.slices) - 1

    def positions(self) -> list[Masks]:
        out: list[Masks] = []
        for o, s in enumerate(self.slices):
            out.append(s)
            if o < len(self.joins):
                out.append(self.joins[o])
        return out

    def at(self, index: int) -> Masks:
        """Complex at 1-based interleaved position ``index``."""
        if not 1 <= index <= self.sequence_length:
            raise IndexError(f"position {index} outside 1..{self.sequence_length}")
        return self.slices[(index - 1) // 2] if index % 2 else self.joins[index // 2 - 1]


def build_slice_complexes(vertex_sets, frame_dims=None, set_op: str = "union",
                          theta: float | None = None) -> SliceComplexSequence:
    """Induced slice complexes plus their consecutive unions (or intersections)."""
    masks = [np.asarray(v, dtype=bool) for v in vertex_sets]
    if not masks:
        raise ValueError("no vertex sets given")
    if frame_dims is None:
        frame_dims = masks[0].shape
    frame_dims = tuple(int(d) for d in frame_dims)
    for o, m in enumerate(masks, start=1):
        if m.shape != frame_dims:
            raise ValueError(f"vertex set {o} has shape {m.shape}, expected {frame_dims}")
    cx = freudenthal_complex(frame_dims)
    slices = tuple(induced_subcomplex(cx, m) for m in masks)
    joins = tuple(_combine(slices[o], slices[o + 1], set_op) for o in range(len(slices) - 1))
    return SliceComplexSequence(cx, tuple(masks), slices, joins, set_op, theta)


def partition_stack(stack: ImageStack, theta: float, set_op: str = "union") -> SliceComplexSequence:
    return build_slice_complexes(threshold_slices(stack, theta), stack.frame_dims, set_op, theta)


def save_masks(seq: SliceComplexSequence, out_dir, prefix: str = "mask") -> list[Path]:
    """Write each frame's vertex mask as a CSV of 0/1."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for o, m in enumerate(seq.vertex_masks, start=1):
        p = out_dir / f"{prefix}_{o:03d}.csv"
        np.savetxt(p, m.astype(np.int8), fmt="%d", delimiter=",")
        paths.append(p)
    return paths


def load_masks(paths) -> list[np.ndarray]:
    out = []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise StackFormatError(f"{p}: mask file not found")
        arr = np.loadtxt(p, delimiter=",", ndmin=2)
        if not np.isin(arr, (0, 1)).all():
            raise StackFormatError(f"{p}: mask entries must be 0 or 1")
        out.append(arr.astype(bool))
    return out
