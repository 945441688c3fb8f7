"""2D local polynomial regression (LOESS) for single frames.

Each output pixel is the value at that pixel of a weighted least-squares
polynomial fitted to its ``ceil(span * N)`` nearest pixels, with tricube
weights ``(1 - (d / d_max)**3)**3``. Pixels tied at ``d_max`` are all kept.

The fit is linear in the intensities, so for a given frame shape the whole
smoother is a sparse ``N x N`` matrix that is built once and cached.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .array_core import ImageStack, slice_at_time, stack_frames


class SmoothingError(ValueError):
    pass


@dataclass(frozen=True)
class SmootherConfig:
    degree: int = 2
    span: float = 0.1

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError(f"degree must be 0, 1 or 2, got {self.degree}")
        if not 0 < self.span <= 1:
            raise ValueError(f"span must lie in (0, 1], got {self.span}")


def n_monomials(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def _design(dx: np.ndarray, dy: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones_like(dx)]
    if degree >= 1:
        cols += [dx, dy]
    if degree >= 2:
        cols += [dx * dx, dx * dy, dy * dy]
    return np.column_stack(cols)


@lru_cache(maxsize=32)
def smoother_matrix(shape: tuple[int, int], degree: int, span: float) -> sps.csr_matrix:
    """Sparse matrix ``S`` with ``smooth(frame).ravel() == S @ frame.ravel()``."""
    d1, d2 = shape
    n = d1 * d2
    k = math.ceil(span * n)
    p = n_monomials(degree)
    if k < p:
        # a configuration problem rather than a numerical one
        raise ValueError(
            f"span {span} keeps {k} of {n} pixels, fewer than the {p} coefficients "
            f"of a degree-{degree} fit")
    xs, ys = np.divmod(np.arange(n), d2)
    rows, cols, data = [], [], []
    for i in range(n):
        dx = xs - xs[i]
        dy = ys - ys[i]
        d2sq = dx * dx + dy * dy
        # squared distances are integers, so ties at the radius are exact
        radius_sq = np.partition(d2sq, k - 1)[k - 1]
        nb = np.flatnonzero(d2sq <= radius_sq)
        if radius_sq == 0:
            w = np.ones(nb.size)
        else:
            w = (1.0 - (np.sqrt(d2sq[nb] / radius_sq)) ** 3) ** 3
        X = _design(dx[nb].astype(float), dy[nb].astype(float), degree)
        sw = np.sqrt(w)
        A = X * sw[:, None]
        q, r = np.linalg.qr(A)
        diag = np.abs(np.diag(r))
        if diag.size < p or diag.min() <= 1e-10 * max(diag.max(), 1.0):
            raise SmoothingError(
                f"rank-deficient local fit at pixel ({xs[i] + 1}, {ys[i] + 1}) "
                f"with {np.count_nonzero(w)} weighted neighbours")
        # fitted value at the centre is the intercept: e0^T R^-1 Q^T diag(sw)
        e0 = np.linalg.solve(r.T, np.eye(p)[:, 0])
        row = (q @ e0) * sw
        rows.append(np.full(nb.size, i))
        cols.append(nb)
        data.append(row)
    S = sps.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n))
    S.sort_indices()
    return S


def smooth_frame(frame: ImageStack | np.ndarray, cfg: SmootherConfig = SmootherConfig()):
    """Smooth one 2D frame. Returns the same type it was given."""
    arr = frame.values if isinstance(frame, ImageStack) else np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D frame, got shape {arr.shape}")
    S = smoother_matrix(arr.shape, cfg.degree, float(cfg.span))
    out = (S @ arr.ravel()).reshape(arr.shape)
    if isinstance(frame, ImageStack):
        return ImageStack(out, frame.time_spacing)
    return out


def smooth_values(values: np.ndarray, cfg: SmootherConfig) -> np.ndarray:
    """Smooth every frame of an ``(d1, d2, l)`` array in one sparse product."""
    d1, d2, l = values.shape
    S = smoother_matrix((d1, d2), cfg.degree, float(cfg.span))
    frames = np.moveaxis(values, -1, 0).reshape(l, d1 * d2)
    out = (S @ frames.T).T
    return np.moveaxis(out.reshape(l, d1, d2), 0, -1)


def smooth_stack(stack: ImageStack, cfg: SmootherConfig = SmootherConfig()) -> ImageStack:
    """Apply :func:`smooth_frame` to every time slice."""
    if stack.ndim != 3:
        raise ValueError("smooth_stack expects a 3D (x, y, t) stack")
    return ImageStack(smooth_values(stack.values, cfg), stack.time_spacing)


def smooth_stack_framewise(stack: ImageStack, cfg: SmootherConfig = SmootherConfig()):
    """Reference path for :func:`smooth_stack` that loops over frames."""
    frames = [smooth_frame(slice_at_time(stack, o), cfg) for o in range(1, stack.n_frames + 1)]
    return stack_frames(frames, stack.time_spacing)
