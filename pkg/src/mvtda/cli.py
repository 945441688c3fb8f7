"""Command-line entry point: ``mvtda {test,run,simulate,study,pcvr,zigzag}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical or
structural failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .array_core import StackFormatError, load_stack
from .maxtest import MaxTestConfig, run_max_test
from .partition import build_slice_complexes, load_masks, partition_stack, save_masks
from .pcvr import CloudTooLargeError, run_pcvr
from .pipeline import (EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, PipelineConfig, PipelineError,
                       _smooth, run_mv, seed_from_env)
from .plotting import null_histogram_svg
from .simgen import NoiseSpec, default_noise, load_config, pattern_spec, write_simulation
from .smoothing import SmootherConfig, SmoothingError
from .study import StudySettings, run_study
from .zigzag import ZigzagStructureError, render_zigzag, zigzag_persistence

log = logging.getLogger("mvtda")


# ---------------------------------------------------------------------------
# shared flags

def _add_smoothing(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("smoothing")
    g.add_argument("--smooth-degree", type=int, default=2, help="local polynomial degree (0-2)")
    g.add_argument("--smooth-span", type=float, default=0.1,
                   help="fraction of the frame's pixels in each local fit")
    g.add_argument("--no-smooth", action="store_true", help="skip smoothing")


def _add_test(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("maximum persistence test")
    g.add_argument("--dim", type=int, default=2, help="homology dimension tested")
    g.add_argument("--permutations", type=int, default=1000, help="null replicates B")
    g.add_argument("--alpha", type=float, default=0.05, help="significance level")
    g.add_argument("--seed", type=int, default=None, help="master seed (default: $MVTDA_SEED or 0)")
    g.add_argument("--pvalue-add-one", action="store_true",
                   help="use (1 + #exceedances) / (1 + B) instead of #exceedances / B")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; outputs do not depend on this")


def _smoother(args) -> SmootherConfig | None:
    return None if args.no_smooth else SmootherConfig(args.smooth_degree, args.smooth_span)


def _maxtest(args) -> MaxTestConfig:
    return MaxTestConfig(B=args.permutations, m=args.dim, alpha=args.alpha,
                         seed=seed_from_env(args.seed), smoother=_smoother(args),
                         pvalue_add_one=args.pvalue_add_one)


def _load(path):
    try:
        return load_stack(path)
    except StackFormatError as exc:
        raise PipelineError("load", exc) from exc


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_test(args) -> int:
    stack = _load(args.input)
    res = run_max_test(stack, _maxtest(args), args.threads)
    out = Path(args.out)
    target = out / "maxtest.json" if out.suffix.lower() != ".json" else out
    _dump(target, res.to_json())
    if args.svg:
        Path(args.svg).write_text(null_histogram_svg(res.null_samples, res.rho_obs))
    print(f"rho_obs={res.rho_obs!r} p={res.p_value!r} reject={str(res.reject).lower()} "
          f"theta_hat={res.theta_hat!r}")
    return EXIT_OK


def cmd_run(args) -> int:
    smoother = _smoother(args)
    cfg = PipelineConfig(input=args.input, smoother=smoother, maxtest=_maxtest(args),
                         set_op=args.set_op, out_dir=args.out, emit_plots=not args.no_plots,
                         threads=args.threads)
    report = run_mv(cfg)
    print(f"reject={str(report['reject']).lower()} theta_hat={report['theta_hat']!r} "
          f"zigzag_intervals={len(report['zigzag'])} -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    spec = pattern_spec(args.pattern, cfg)
    seed = seed_from_env(args.seed)
    noise = default_noise(seed, cfg)
    if args.sigma is not None:
        noise = NoiseSpec(noise.family, noise.mu0, args.sigma, seed)
    paths = write_simulation(spec, noise, args.out)
    print(f"wrote {paths['manifest']}")
    return EXIT_OK


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    settings = StudySettings.from_config(cfg)
    if args.permutations is not None:
        settings = StudySettings(settings.smoother, args.permutations, settings.alpha,
                                 settings.pcvr_threshold, settings.pcvr_min_persistence,
                                 settings.pcvr_max_scale)
    t0 = time.perf_counter()

    def progress(row):
        log.info("%s replicate %d: reject=%s", row.pattern, row.replicate, row.reject)

    res = run_study(args.patterns, args.replicates, seed_from_env(args.seed), settings, cfg,
                    args.threads, progress=progress)
    res.write(args.out)
    s = res.summary()
    if s["replicates"]:
        print(f"replicates={s['replicates']} mv_rate={s['mv_rate']:.3f} "
              f"pcvr_rate={s['pcvr_rate']:.3f} ({time.perf_counter() - t0:.1f} s) -> {args.out}")
    else:
        print(f"replicates=0 -> {args.out}")
    return EXIT_OK


def cmd_pcvr(args) -> int:
    stack = _load(args.input)
    tracks, _, _ = run_pcvr(stack, args.threshold, args.max_scale, args.min_persistence,
                            args.max_points)
    out = Path(args.out)
    target = out / "pcvr_tracks.csv" if out.suffix.lower() != ".csv" else out
    target.parent.mkdir(parents=True, exist_ok=True)
    tracks.write_csv(target)
    print(f"tracks={len(tracks.tracks())} features={len(tracks.rows)} -> {target}")
    return EXIT_OK


def cmd_zigzag(args) -> int:
    if (args.masks is None) == (args.input is None):
        raise PipelineError("config", ValueError("give either --masks or --input with --threshold"))
    if args.masks is not None:
        paths = sorted(Path(args.masks).glob("mask_*.csv"))
        if not paths:
            raise PipelineError("load", StackFormatError(f"{args.masks}: no mask_*.csv files"))
        seq = build_slice_complexes(load_masks(paths), set_op=args.set_op)
        spacing = args.time_spacing if args.time_spacing is not None else 1.0
    else:
        if args.threshold is None:
            raise PipelineError("config", ValueError("--input needs --threshold"))
        stack = _load(args.input)
        if stack.ndim != 3:
            raise PipelineError("load", ValueError("expected an (x, y, t) stack"))
        seq = partition_stack(_smooth(stack, _smoother(args)), args.threshold, args.set_op)
        spacing = args.time_spacing if args.time_spacing is not None else stack.time_spacing
    zz = zigzag_persistence(seq, args.max_dim, spacing)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    render_zigzag(zz, spacing, csv_path=out / "zigzag.csv",
                  svg_path=Path(args.svg) if args.svg else None)
    if args.input is not None:
        save_masks(seq, out / "masks")
    print(f"intervals={len(zz.intervals)} -> {out / 'zigzag.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvtda", description="Maximum-void topological tracking "
                                 "of features in image time series.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="maximum persistence permutation test")
    p.add_argument("--input", required=True, help="stack manifest (.json) or dims text file")
    _add_smoothing(p)
    _add_test(p)
    _add_threads(p)
    p.add_argument("--out", default="maxtest.json", help="output JSON file or directory")
    p.add_argument("--svg", help="also write a null-distribution histogram here")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("run", help="full pipeline: smooth, test, threshold, zigzag")
    p.add_argument("--input", required=True)
    _add_smoothing(p)
    _add_test(p)
    _add_threads(p)
    p.add_argument("--set-op", choices=("union", "intersection"), default="union")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip SVG outputs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="write a synthetic stack with its truth table")
    p.add_argument("--pattern", required=True, help="A1, A2, A3, A4 or cylinder")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None, help="override the noise level")
    p.add_argument("--config", help="pattern config JSON (default: shipped)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="simulation study comparing MV with PCVR")
    p.add_argument("--patterns", nargs="+", default=["A1", "A2", "A3", "A4"])
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--permutations", type=int, default=None,
                   help="override the configured null replicates")
    p.add_argument("--config", help="pattern config JSON (default: shipped)")
    _add_threads(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("pcvr", help="point-cloud Rips baseline with rank matching")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=5.0)
    p.add_argument("--max-scale", type=float, default=6.0, help="Rips distance cap (pixels)")
    p.add_argument("--min-persistence", type=float, default=0.0)
    p.add_argument("--max-points", type=int, default=2000)
    p.add_argument("--out", default="pcvr_tracks.csv", help="output CSV file or directory")
    p.set_defaults(func=cmd_pcvr)

    p = sub.add_parser("zigzag", help="zigzag persistence from saved masks or a threshold")
    p.add_argument("--masks", help="directory of mask_###.csv files")
    p.add_argument("--input", help="stack to smooth and threshold instead of --masks")
    p.add_argument("--threshold", type=float)
    _add_smoothing(p)
    p.add_argument("--set-op", choices=("union", "intersection"), default="union")
    p.add_argument("--max-dim", type=int, default=1)
    p.add_argument("--time-spacing", type=float, default=None, help="seconds between frames")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="interval plot path")
    p.set_defaults(func=cmd_zigzag)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        ap.error("--threads must be at least 1")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SmoothingError, ZigzagStructureError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, CloudTooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
