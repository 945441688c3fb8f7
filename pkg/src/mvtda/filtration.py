"""Kuhn (Freudenthal) triangulation of pixel grids and upper-star filtrations.

Every unit cube of the grid is cut into ``M!`` simplices that share the main
diagonal from the cube's lowest corner to its highest corner. Vertex ids follow
the flat layout of :class:`~mvtda.array_core.ImageStack`.

Simplices are stored per dimension as integer arrays whose rows are sorted
vertex tuples, with the rows themselves in lexicographic order. A simplex is
addressed globally by ``offsets[k] + row``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .array_core import ImageStack


def vertex_strides(dims) -> np.ndarray:
    """Flat-index stride of each axis (time slowest for 3D grids)."""
    dims = tuple(int(d) for d in dims)
    if len(dims) >= 3:
        frame = dims[:-1]
        strides = [int(np.prod(frame[i + 1:])) for i in range(len(frame))]
        strides.append(int(np.prod(frame)))
    else:
        strides = [int(np.prod(dims[i + 1:])) for i in range(len(dims))]
    return np.array(strides, dtype=np.int64)


def vertex_coords(dims, vid) -> tuple[int, ...]:
    """0-based grid coordinates of a vertex id."""
    strides = vertex_strides(dims)
    out = []
    for s, d in zip(strides, dims):
        out.append(int(vid // s) % int(d))
    return tuple(out)


def _row_keys(rows: np.ndarray, base: int) -> np.ndarray:
    keys = np.zeros(rows.shape[0], dtype=np.int64)
    for j in range(rows.shape[1]):
        keys = keys * base + rows[:, j]
    return keys


@dataclass(frozen=True, eq=False)
class GridComplex:
    """The Kuhn triangulation of a box grid, closed under faces."""

    dims: tuple[int, ...]
    simplices: tuple[np.ndarray, ...]
    faces: tuple[np.ndarray | None, ...]
    offsets: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.simplices) - 1

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.dims))

    def counts(self) -> list[int]:
        return [s.shape[0] for s in self.simplices]

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * n for k, n in enumerate(self.counts()))

    @property
    def n_simplices(self) -> int:
        return int(self.offsets[-1])

    def split_global(self, gid: int) -> tuple[int, int]:
        k = int(np.searchsorted(self.offsets, gid, side="right") - 1)
        return k, int(gid - self.offsets[k])

    def simplex(self, gid: int) -> tuple[int, ...]:
        k, row = self.split_global(gid)
        return tuple(int(v) for v in self.simplices[k][row])

    def is_full_dimensional(self) -> bool:
        """True when every axis has at least two samples (the box is a ball)."""
        return all(d >= 2 for d in self.dims)

    @property
    def cofaces_top(self) -> np.ndarray:
        """For each codimension-1 simplex, the rows of its (one or two) top cofaces.

        Boundary faces have ``-1`` in the second column.
        """
        return _cofaces_top(self)


@lru_cache(maxsize=16)
def freudenthal_complex(dims) -> GridComplex:
    """Kuhn triangulation of a ``d1 x ... x dM`` grid with ``M`` in ``{2, 3}``."""
    dims = tuple(int(d) for d in dims)
    if len(dims) not in (2, 3):
        raise ValueError(f"unsupported grid dimension M={len(dims)}; expected 2 or 3")
    if any(d < 1 for d in dims):
        raise ValueError(f"grid dims must be positive, got {dims}")
    n = int(np.prod(dims))
    if n ** (len(dims) + 1) >= 2 ** 62:
        raise ValueError(f"grid {dims} too large for integer simplex keys")
    strides = vertex_strides(dims)
    active = [a for a, d in enumerate(dims) if d >= 2]
    top = len(active)

    # lowest corner of every unit cube, spanned by the active axes only
    ranges = [np.arange(d - 1) if a in active else np.arange(1) for a, d in enumerate(dims)]
    corners = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, len(dims))
    base = corners @ strides

    tops = []
    for perm in itertools.permutations(active):
        path = [0]
        for a in perm:
            path.append(path[-1] + int(strides[a]))
        tops.append(base[:, None] + np.array(path, dtype=np.int64)[None, :])
    top_simplices = np.concatenate(tops) if tops else base[:, None]

    simplices = []
    for k in range(top + 1):
        rows = [top_simplices[:, list(c)] for c in itertools.combinations(range(top + 1), k + 1)]
        arr = np.unique(np.concatenate(rows), axis=0).astype(np.int64)
        simplices.append(arr)

    faces: list[np.ndarray | None] = [None]
    for k in range(1, top + 1):
        keys = _row_keys(simplices[k - 1], n)
        cols = []
        for drop in range(k + 1):
            sub = np.delete(simplices[k], drop, axis=1)
            cols.append(np.searchsorted(keys, _row_keys(sub, n)))
        faces.append(np.column_stack(cols).astype(np.int64))

    for arr in simplices:
        arr.setflags(write=False)
    offsets = np.concatenate([[0], np.cumsum([s.shape[0] for s in simplices])]).astype(np.int64)
    return GridComplex(dims, tuple(simplices), tuple(faces), offsets)


@lru_cache(maxsize=16)
def _cofaces_top(cx: GridComplex) -> np.ndarray:
    top = cx.dim
    if top < 1:
        return np.zeros((0, 2), dtype=np.int64)
    n_faces = cx.simplices[top - 1].shape[0]
    out = np.full((n_faces, 2), -1, dtype=np.int64)
    f = cx.faces[top]
    flat_faces = f.ravel()
    owners = np.repeat(np.arange(f.shape[0]), f.shape[1])
    order = np.argsort(flat_faces, kind="stable")
    flat_faces, owners = flat_faces[order], owners[order]
    starts = np.searchsorted(flat_faces, np.arange(n_faces))
    ends = np.searchsorted(flat_faces, np.arange(n_faces), side="right")
    if np.any(ends - starts > 2):
        raise ValueError("complex is not a pseudomanifold")
    has = ends > starts
    out[has, 0] = owners[starts[has]]
    two = ends - starts == 2
    out[two, 1] = owners[starts[two] + 1]
    return out


@dataclass(frozen=True, eq=False)
class FilteredComplex:
    """A grid complex with upper-star values and a total order for reduction.

    ``order[i]`` is the global id of the ``i``-th simplex entering the
    filtration; ``position`` is its inverse. The order sorts by value
    descending, then dimension ascending, then lexicographic vertex tuple.
    """

    complex: GridComplex
    values: tuple[np.ndarray, ...]
    order: np.ndarray
    position: np.ndarray

    @property
    def dims(self):
        return self.complex.dims

    def value_of(self, gid: int) -> float:
        k, row = self.complex.split_global(gid)
        return float(self.values[k][row])

    def flat_values(self) -> np.ndarray:
        return np.concatenate(self.values)

    def global_dims(self) -> np.ndarray:
        cx = self.complex
        return np.repeat(np.arange(cx.dim + 1), np.diff(cx.offsets))

    def sorted_values(self) -> np.ndarray:
        return self.flat_values()[self.order]

    def min_value(self) -> float:
        return float(self.values[0].min())

    def subcomplex_mask(self, delta: float) -> list[np.ndarray]:
        """Per-dimension masks of the simplices with value >= delta."""
        return [v >= delta for v in self.values]


def simplex_values(cx: GridComplex, flat: np.ndarray) -> tuple[np.ndarray, ...]:
    """Upper-star values: each simplex takes the minimum of its vertices."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != cx.n_vertices:
        raise ValueError(f"{flat.size} intensities for a complex with {cx.n_vertices} vertices")
    return tuple(flat[s].min(axis=1) for s in cx.simplices)


def filtration_order(cx: GridComplex, values) -> np.ndarray:
    allv = np.concatenate(values)
    dims = np.repeat(np.arange(cx.dim + 1), np.diff(cx.offsets))
    rows = np.arange(allv.size) - cx.offsets[dims]
    # rows within a dimension are already in lexicographic order
    return np.lexsort((rows, dims, -allv))


def assign_filtration(cx: GridComplex, stack) -> FilteredComplex:
    """Attach upper-star filtration values from ``stack`` to ``cx``."""
    flat = stack.flat() if isinstance(stack, ImageStack) else np.asarray(stack, dtype=np.float64)
    for s in cx.simplices[:1]:
        if s.size and (s.max() >= flat.size or s.min() < 0):
            raise IndexError("vertex id out of range for the given intensities")
    values = simplex_values(cx, flat)
    order = filtration_order(cx, values)
    position = np.empty_like(order)
    position[order] = np.arange(order.size)
    for v in values:
        v.setflags(write=False)
    return FilteredComplex(cx, values, order, position)


def filter_stack(stack: ImageStack) -> FilteredComplex:
    return assign_filtration(freudenthal_complex(stack.dims), stack)
