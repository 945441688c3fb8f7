"""Permutation test on the most persistent homology class of a whole stack.

The observed statistic is the largest persistence among H_m classes of the
smoothed stack. Each null replicate permutes all raw pixels, smooths, and
recomputes the same statistic. Replicate ``q`` draws its permutation from
stream ``q`` of the master seed, so results do not depend on scheduling.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .array_core import ImageStack, permute_stack
from .filtration import assign_filtration, freudenthal_complex
from .persistence import PersistenceDiagram, compute_persistence, top_max_persistence
from .smoothing import SmootherConfig, smooth_frame, smooth_stack


@dataclass(frozen=True)
class MaxTestConfig:
    B: int = 1000
    m: int = 2
    alpha: float = 0.05
    seed: int = 0
    smoother: SmootherConfig | None = field(default_factory=SmootherConfig)
    pvalue_add_one: bool = False

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be at least 1, got {self.B}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.m < 1:
            raise ValueError(f"tested dimension must be at least 1, got {self.m}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class MaxTestResult:
    rho_obs: float
    birth_obs: float | None
    death_obs: float | None
    null_samples: tuple[float, ...]
    p_value: float
    reject: bool
    theta_hat: float | None
    m: int
    alpha: float
    seed: int
    pvalue_add_one: bool = False

    @property
    def B(self) -> int:
        return len(self.null_samples)

    def null_quantile(self, q: float) -> float:
        return float(np.quantile(self.null_samples, q)) if self.null_samples else float("nan")

    def to_json(self) -> dict:
        return {
            "dim": self.m, "permutations": self.B, "alpha": self.alpha, "seed": self.seed,
            "pvalue_add_one": self.pvalue_add_one,
            "rho_obs": self.rho_obs, "birth_obs": self.birth_obs, "death_obs": self.death_obs,
            "p_value": self.p_value, "reject": self.reject, "theta_hat": self.theta_hat,
            "null_q95": self.null_quantile(0.95) if self.null_samples else None,
            "null_samples": list(self.null_samples),
        }


def max_persistence(pd: PersistenceDiagram, m: int) -> tuple[float, float | None, float | None]:
    """Largest ``birth - death`` among dimension-``m`` points.

    Essential classes only count for ``m = 0``. Ties prefer the larger birth,
    then the lexicographically smaller birth (then death) simplex. Returns
    ``(0.0, None, None)`` when there is no candidate.
    """
    cands = [p for p in pd.points if p.dim == m and (m == 0 or not p.essential)]
    cands = [p for p in cands if p.persistence > 0]
    if not cands:
        return 0.0, None, None
    best = min(cands, key=lambda p: (-p.persistence, -p.birth, pd.provenance(p)))
    return best.persistence, best.birth, best.death


def _smooth(stack: ImageStack, smoother: SmootherConfig | None) -> ImageStack:
    if smoother is None:
        return stack
    if stack.ndim == 2:
        return smooth_frame(stack, smoother)
    return smooth_stack(stack, smoother)


def statistic(stack: ImageStack, m: int) -> tuple[float, float | None, float | None]:
    """Max persistence of H_m for an already smoothed stack."""
    cx = freudenthal_complex(stack.dims)
    if m > cx.dim - 1:
        raise ValueError(f"cannot test H{m} on a {cx.dim}-dimensional complex")
    if m == cx.dim - 1 and cx.is_full_dimensional():
        rho, b, d, _, _ = top_max_persistence(cx, stack.flat())
        return (rho, b, d) if rho > 0 else (0.0, None, None)
    pd = compute_persistence(assign_filtration(cx, stack.flat()), max_dim=m)
    return max_persistence(pd, m)


def null_sample(raw: ImageStack, cfg: MaxTestConfig, q: int) -> float:
    """Statistic of permutation replicate ``q`` (1-based)."""
    return statistic(_smooth(permute_stack(raw, cfg.seed, q), cfg.smoother), cfg.m)[0]


def permutation_pvalue(rho_obs: float, null, add_one: bool = False) -> float:
    null = np.asarray(null, dtype=np.float64)
    exceed = int(np.count_nonzero(null >= rho_obs))
    if add_one:
        return (1 + exceed) / (1 + null.size)
    return exceed / null.size


def decide(rho_obs: float, null, alpha: float, add_one: bool = False) -> tuple[float, bool]:
    """p-value and the decision ``p < alpha``."""
    p = permutation_pvalue(rho_obs, null, add_one)
    return p, p < alpha


def run_max_test(raw: ImageStack, cfg: MaxTestConfig, threads: int = 1) -> MaxTestResult:
    """Run the test on an unsmoothed stack.

    ``threads`` only changes the schedule; samples are gathered in replicate
    order so the result is identical for any value.
    """
    floor = 1 / (cfg.B + 1) if cfg.pvalue_add_one else 1 / cfg.B
    if floor >= cfg.alpha:
        warnings.warn(f"with B={cfg.B} the smallest non-zero p-value is {floor:.3g}, "
                      f"not below alpha={cfg.alpha}", RuntimeWarning, stacklevel=2)
    rho, b, d = statistic(_smooth(raw, cfg.smoother), cfg.m)
    qs = range(1, cfg.B + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            null = list(pool.map(lambda q: null_sample(raw, cfg, q), qs))
    else:
        null = [null_sample(raw, cfg, q) for q in qs]
    p, reject = decide(rho, null, cfg.alpha, cfg.pvalue_add_one)
    return MaxTestResult(
        rho_obs=rho, birth_obs=b, death_obs=d, null_samples=tuple(float(x) for x in null),
        p_value=p, reject=reject, theta_hat=b if reject and b is not None else None,
        m=cfg.m, alpha=cfg.alpha, seed=cfg.seed, pvalue_add_one=cfg.pvalue_add_one)
