"""Time-stacked grayscale image arrays.

An :class:`ImageStack` holds intensities on a ``d1 x d2 x ... x dM`` grid with
time as the last axis. The flat layout used for vertex ids, permutations and
the text format keeps each frame contiguous (time is the slowest axis) and
stores a frame in row-major order, so for a 3D stack the pixel ``(x, y, t)``
(0-based) has flat index ``t * d1 * d2 + x * d2 + y``. A 2D stack is a single
frame with no time axis.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class StackFormatError(ValueError):
    """Raised when a stack manifest or frame file cannot be read."""


@dataclass(frozen=True, eq=False)
class ImageStack:
    values: np.ndarray
    time_spacing: float = 1.0

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim < 2:
            raise ValueError(f"an image stack needs at least 2 axes, got {arr.ndim}")
        if arr.size == 0:
            raise ValueError("empty image stack")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image stack contains NaN or infinite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "time_spacing", float(self.time_spacing))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def time_axis(self) -> int | None:
        return self.ndim - 1 if self.ndim >= 3 else None

    @property
    def n_frames(self) -> int:
        return self.dims[-1] if self.time_axis is not None else 1

    @property
    def frame_dims(self) -> tuple[int, ...]:
        return self.dims[:-1] if self.time_axis is not None else self.dims

    def flat(self) -> np.ndarray:
        """Intensities in flat (vertex id) order."""
        if self.time_axis is None:
            return self.values.ravel()
        return np.moveaxis(self.values, -1, 0).ravel()

    def time_of(self, o: int) -> float:
        """Seconds elapsed at 1-based frame ``o``, with the first frame at 0."""
        return (o - 1) * self.time_spacing

    def __eq__(self, other):
        if not isinstance(other, ImageStack):
            return NotImplemented
        return (self.dims == other.dims and self.time_spacing == other.time_spacing
                and np.array_equal(self.values, other.values))

    __hash__ = None


def from_flat(flat: np.ndarray, dims, time_spacing: float = 1.0) -> ImageStack:
    """Inverse of :meth:`ImageStack.flat`."""
    dims = tuple(int(d) for d in dims)
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != int(np.prod(dims)):
        raise ValueError(f"{flat.size} values do not fill dims {dims}")
    if len(dims) < 3:
        return ImageStack(flat.reshape(dims), time_spacing)
    frames_first = flat.reshape((dims[-1],) + dims[:-1])
    return ImageStack(np.moveaxis(frames_first, 0, -1), time_spacing)


def stack_frames(frames, time_spacing: float = 1.0) -> ImageStack:
    """Assemble 2D frames (arrays or frame stacks) into a 3D stack."""
    arrays = [f.values if isinstance(f, ImageStack) else np.asarray(f, dtype=np.float64)
              for f in frames]
    if not arrays:
        raise ValueError("no frames to stack")
    shape = arrays[0].shape
    for i, a in enumerate(arrays, start=1):
        if a.ndim != 2 or a.shape != shape:
            raise ValueError(f"frame {i} has shape {a.shape}, expected {shape}")
    return ImageStack(np.stack(arrays, axis=-1), time_spacing)


def slice_at_time(stack: ImageStack, o: int) -> ImageStack:
    """The frame at 1-based time index ``o``."""
    if stack.time_axis is None:
        raise ValueError("stack has no time axis")
    if not 1 <= o <= stack.n_frames:
        raise IndexError(f"time index {o} outside 1..{stack.n_frames}")
    return ImageStack(stack.values[..., o - 1], stack.time_spacing)


def permutation_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator keyed by ``(seed, stream)``.

    Child streams come from :class:`numpy.random.SeedSequence` spawn keys, so
    stream ``q`` is reproducible no matter which other streams were drawn or
    in what order.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


def permute_stack(stack: ImageStack, seed: int, stream: int = 0) -> ImageStack:
    """Uniformly permute all pixel intensities across the whole grid."""
    rng = permutation_rng(seed, stream)
    flat = stack.flat()
    return from_flat(flat[rng.permutation(flat.size)], stack.dims, stack.time_spacing)


# ---------------------------------------------------------------------------
# I/O

def _read_csv_frame(path: Path) -> np.ndarray:
    if not path.exists():
        raise StackFormatError(f"{path}: frame file not found")
    rows = []
    with path.open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise StackFormatError(
                        f"{path}: non-numeric cell {cell!r} at row {r}, column {c}") from None
                if not np.isfinite(v):
                    raise StackFormatError(f"{path}: non-finite value at row {r}, column {c}")
                vals.append(v)
            if rows and len(vals) != len(rows[0]):
                raise StackFormatError(
                    f"{path}: row {r} has {len(vals)} columns, expected {len(rows[0])}")
            rows.append(vals)
    if not rows:
        raise StackFormatError(f"{path}: empty frame")
    return np.array(rows, dtype=np.float64)


def _load_manifest(path: Path) -> ImageStack:
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StackFormatError(f"{path}: invalid JSON ({exc})") from None
    frames = manifest.get("frames")
    if not isinstance(frames, list) or not frames:
        raise StackFormatError(f"{path}: manifest lists no frames")
    spacing = float(manifest.get("time_spacing_seconds", 1.0))
    arrays = []
    for i, name in enumerate(frames, start=1):
        arr = _read_csv_frame(path.parent / name)
        if arrays and arr.shape != arrays[0].shape:
            raise StackFormatError(
                f"{path}: frame {i} ({name}) has shape {arr.shape}, expected {arrays[0].shape}")
        arrays.append(arr)
    return stack_frames(arrays, spacing)


def _load_text(path: Path) -> ImageStack:
    lines = path.read_text().splitlines()
    header_at = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if header_at is None or not lines[header_at].strip().startswith("dims:"):
        raise StackFormatError(f"{path}: missing 'dims:' header line")
    try:
        dims = tuple(int(x) for x in lines[header_at].split(":", 1)[1].split())
    except ValueError:
        raise StackFormatError(f"{path}: malformed dims header") from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise StackFormatError(f"{path}: invalid dims {dims}")
    spacing = 1.0
    values = []
    for ln_no, line in enumerate(lines[header_at + 1:], start=header_at + 2):
        if line.strip().startswith("time_spacing:"):
            spacing = float(line.split(":", 1)[1])
            continue
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise StackFormatError(
                    f"{path}: non-numeric value {tok!r} on line {ln_no}") from None
    need = int(np.prod(dims))
    if len(values) != need:
        raise StackFormatError(f"{path}: found {len(values)} values, dims {dims} need {need}")
    return from_flat(np.array(values), dims, spacing)


def load_stack(path) -> ImageStack:
    """Load a stack from a JSON manifest of CSV frames or a ``dims:`` text file."""
    path = Path(path)
    if not path.exists():
        raise StackFormatError(f"{path}: file not found")
    if path.suffix.lower() == ".json":
        return _load_manifest(path)
    return _load_text(path)


def save_stack(stack: ImageStack, out_dir, prefix: str = "frame") -> Path:
    """Write CSV frames plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for o in range(1, stack.n_frames + 1):
        frame = slice_at_time(stack, o).values if stack.time_axis is not None else stack.values
        name = f"{prefix}_{o:03d}.csv"
        np.savetxt(out_dir / name, frame, delimiter=",", fmt="%.17g")
        names.append(name)
    manifest = out_dir / f"{prefix}s.json"
    manifest.write_text(json.dumps(
        {"frames": names, "time_spacing_seconds": stack.time_spacing}, indent=2) + "\n")
    return manifest


def save_text(stack: ImageStack, path) -> None:
    path = Path(path)
    body = "\n".join(f"{v:.17g}" for v in stack.flat())
    dims = " ".join(str(d) for d in stack.dims)
    path.write_text(f"dims: {dims}\ntime_spacing: {stack.time_spacing!r}\n{body}\n")
