"""End-to-end maximum-void analysis of one stack, with file outputs.

Stages: load, smooth, persistence of the whole stack, permutation test, and,
when the test rejects, thresholding at the observed birth followed by zigzag
persistence of the slice sequence. Each stage's files are written as soon as
the stage finishes, so a failure later on leaves the earlier outputs in place.

``report.json`` holds only data-determined content; wall-clock timings and
the thread count go to ``timings.json``.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .array_core import ImageStack, StackFormatError, load_stack
from .filtration import assign_filtration, freudenthal_complex
from .maxtest import MaxTestConfig, MaxTestResult, run_max_test
from .partition import SliceComplexSequence, partition_stack, save_masks
from .persistence import PersistenceDiagram, compute_persistence, write_diagram
from .plotting import diagram_svg, null_histogram_svg
from .smoothing import SmootherConfig, SmoothingError, smooth_frame, smooth_stack
from .zigzag import ZigzagDiagram, ZigzagStructureError, render_zigzag, zigzag_persistence

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class PipelineError(RuntimeError):
    """A stage failed; ``code`` is the process exit code to use."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        numerical = isinstance(cause, (SmoothingError, ZigzagStructureError, ArithmeticError))
        self.code = EXIT_NUMERICAL if numerical else EXIT_VALIDATION
        super().__init__(f"{stage}: {cause}")


@dataclass(frozen=True)
class PipelineConfig:
    input: str | Path | None = None
    smoother: SmootherConfig | None = field(default_factory=SmootherConfig)
    maxtest: MaxTestConfig = field(default_factory=MaxTestConfig)
    set_op: str = "union"
    out_dir: str | Path | None = None
    emit_plots: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.set_op not in ("union", "intersection"):
            raise ValueError(f"set_op must be 'union' or 'intersection', got {self.set_op!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.smoother != self.maxtest.smoother:
            raise ValueError("the test must smooth exactly like the pipeline")


@dataclass(frozen=True, eq=False)
class MVResult:
    raw: ImageStack
    smoothed: ImageStack
    diagram: PersistenceDiagram | None
    test: MaxTestResult
    sequence: SliceComplexSequence | None
    zigzag: ZigzagDiagram | None


def _stage(name, timings, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except PipelineError:
        raise
    except (ValueError, KeyError, IndexError, OSError, ArithmeticError) as exc:
        raise PipelineError(name, exc) from exc
    timings[name] = round(time.perf_counter() - t0, 6)
    return out


def _smooth(stack, smoother):
    if smoother is None:
        return stack
    return smooth_frame(stack, smoother) if stack.ndim == 2 else smooth_stack(stack, smoother)


def analyse(raw: ImageStack, maxtest: MaxTestConfig, set_op: str = "union", threads: int = 1,
            full_diagram: bool = True, timings: dict | None = None, sink=None) -> MVResult:
    """Run every stage in memory. ``sink(stage, value)`` is called after each one."""
    timings = {} if timings is None else timings
    sink = sink or (lambda stage, value: None)
    if raw.ndim != 3:
        raise PipelineError("load", ValueError(f"expected an (x, y, t) stack, got {raw.ndim} axes"))
    smoothed = _stage("smooth", timings, _smooth, raw, maxtest.smoother)
    diagram = None
    if full_diagram:
        diagram = _stage("persistence", timings, lambda: compute_persistence(
            assign_filtration(freudenthal_complex(smoothed.dims), smoothed.flat()),
            max_dim=min(maxtest.m, 2)))
        sink("persistence", diagram)
    test = _stage("maxtest", timings, run_max_test, raw, maxtest, threads)
    sink("maxtest", test)
    seq = zz = None
    if test.reject:
        seq = _stage("partition", timings, partition_stack, smoothed, test.theta_hat, set_op)
        sink("partition", seq)
        try:
            zz = _stage("zigzag", timings, zigzag_persistence, seq, 1, raw.time_spacing)
        except ZigzagStructureError as exc:
            raise PipelineError("zigzag", exc) from exc
        sink("zigzag", zz)
    return MVResult(raw, smoothed, diagram, test, seq, zz)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_mv(cfg: PipelineConfig, stack: ImageStack | None = None) -> dict:
    """Run the pipeline and write its outputs to ``cfg.out_dir``; returns the report."""
    timings: dict[str, float] = {}
    out = Path(cfg.out_dir) if cfg.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if stack is None:
        if cfg.input is None:
            raise PipelineError("load", ValueError("no input stack given"))
        try:
            stack = _stage("load", timings, load_stack, cfg.input)
        except PipelineError as exc:
            if isinstance(exc.cause, StackFormatError):
                exc.code = EXIT_VALIDATION
            raise

    def sink(stage, value):
        if out is None:
            return
        if stage == "persistence":
            write_diagram(value, out / "diagram.json")
            write_diagram(value, out / "diagram.csv")
            if cfg.emit_plots:
                (out / "diagram.svg").write_text(diagram_svg(value))
        elif stage == "maxtest":
            _dump(out / "maxtest.json", value.to_json())
            if cfg.emit_plots:
                (out / "null.svg").write_text(null_histogram_svg(value.null_samples, value.rho_obs))
        elif stage == "partition":
            save_masks(value, out / "masks")
        elif stage == "zigzag":
            render_zigzag(value, stack.time_spacing, csv_path=out / "zigzag.csv",
                          svg_path=(out / "zigzag.svg") if cfg.emit_plots else None)

    res = analyse(stack, cfg.maxtest, cfg.set_op, cfg.threads, True, timings, sink)
    report = build_report(cfg, res)
    if out is not None:
        _dump(out / "report.json", report)
        _dump(out / "timings.json", {"seconds": timings, "threads": cfg.threads})
    return report


def build_report(cfg: PipelineConfig, res: MVResult) -> dict:
    t = res.test
    sm = cfg.smoother
    features = []
    if res.zigzag is not None:
        features = [{"dim": iv.dim, "birth_index": iv.birth_index, "death_index": iv.death_index,
                     "birth_time": iv.birth_time, "death_time": iv.death_time}
                    for iv in res.zigzag.intervals]
    return {
        "schema_version": SCHEMA_VERSION,
        "input": str(cfg.input) if cfg.input is not None else None,
        "dims": list(res.raw.dims),
        "time_spacing": res.raw.time_spacing,
        "smoother": None if sm is None else {"degree": sm.degree, "span": sm.span},
        "set_op": cfg.set_op,
        "seed": cfg.maxtest.seed,
        "test": {k: v for k, v in t.to_json().items() if k != "null_samples"},
        "betti": res.diagram.betti if res.diagram is not None else None,
        "reject": t.reject,
        "theta_hat": t.theta_hat,
        "feature": ({"dim": t.m, "birth": t.birth_obs, "death": t.death_obs,
                     "persistence": t.rho_obs} if t.reject else None),
        "zigzag": features,
    }


def seed_from_env(seed: int | None) -> int:
    """Explicit seed, else ``MVTDA_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("MVTDA_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise PipelineError("config", ValueError(f"MVTDA_SEED={env!r} is not an integer")) from None
