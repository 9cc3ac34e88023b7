"""``dtireg`` command-line entry point.

Exit codes: 0 success, 2 invalid flags, 3 data errors (unreadable file, grid
mismatch, degenerate input), 4 numerical failures (non-finite loss, folding
or singular Jacobian in strict mode, no fold-free ground-truth field).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from phantom_generation import GroundTruthError, PhantomKind, PhantomSpec
from registration_loss import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_LAMBDA, DegenerateInputError, LossWeights
from spatial_transform import DEFAULT_SIGMA_MM, DEFAULT_STEPS
from tensor_reorientation import ReorientationError
from velocity_optimization import NonFiniteLossError, RegistrationConfig
from velocity_optimization.config import (
    DEFAULT_FD_EPSILON,
    DEFAULT_INITIAL_STEP,
    DEFAULT_ITERATIONS,
    DEFAULT_LEVELS,
    DEFAULT_THREADS,
)
from volume_io import DEFAULT_SPACING_MM, GridSpec, LabelVolume, VolumeError, VolumeKind, load_volume

from . import __version__
from .pipeline import (
    DEFAULT_PHANTOM_PREFIX,
    DEFAULT_REGISTRATION_DIR,
    WARP_TYPES,
    compare_modes,
    exp_file,
    fa_file,
    jacobian_file,
    load_inputs,
    metric_report,
    phantom_files,
    run_registration,
    snapshot_files,
    warp_file,
)
from .reports import SUMMARY_FIELDS, format_report, read_table, summarize_rows, write_report, write_table

logger = logging.getLogger("dtireg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
METRICS = ("dice", "fa-ssd", "ncc", "eds", "defstats")


class UsageError(Exception):
    """Flag combination argparse cannot express on its own."""


def _levels_text(levels: Sequence[Tuple[int, int, int]]) -> str:
    return ",".join("x".join(str(n) for n in level) for level in levels)


def parse_levels(text: str) -> Tuple[Tuple[int, int, int], ...]:
    """``"6x6x6,12x12x12"`` or ``"6,12"`` -> ((6, 6, 6), (12, 12, 12))."""

    levels = []
    for part in text.split(","):
        dims = [int(v) for v in part.strip().lower().split("x")]
        if len(dims) == 1:
            dims *= 3
        if len(dims) != 3:
            raise argparse.ArgumentTypeError(f"bad control grid level {part!r}")
        levels.append(tuple(dims))
    if not levels:
        raise argparse.ArgumentTypeError("at least one level is required")
    return tuple(levels)  # type: ignore[return-value]


def parse_shape(text: str) -> Tuple[int, int, int]:
    dims = [int(v) for v in text.lower().split("x")]
    if len(dims) == 1:
        dims *= 3
    if len(dims) != 3:
        raise argparse.ArgumentTypeError(f"bad grid size {text!r}; use N or NxNxN")
    return tuple(dims)  # type: ignore[return-value]


def _add_runtime_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=DEFAULT_THREADS,
                   help="worker threads for gradient evaluations (default: %(default)s, env DTIREG_THREADS)")
    p.add_argument("--deterministic", action="store_true",
                   help="bit-reproducible mode: single worker, fixed recombination order")
    p.add_argument("--lenient-folds", action="store_true",
                   help="substitute the identity rotation at folded voxels instead of failing")


def _add_registration_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("loss and optimiser")
    g.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                   help="weight of the tensor distance term (default: %(default)s, published)")
    g.add_argument("--beta", type=float, default=DEFAULT_BETA,
                   help="weight of the NCC term (default: %(default)s, published)")
    g.add_argument("--lam", "--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="weight of the bending energy (default: %(default)s, published)")
    g.add_argument("--sigma-mm", type=float, default=DEFAULT_SIGMA_MM,
                   help="velocity smoothing sigma in mm (default: %(default)s, published)")
    g.add_argument("--steps", type=int, default=DEFAULT_STEPS,
                   help="scaling-and-squaring steps (default: %(default)s, published)")
    g.add_argument("--levels", type=parse_levels, default=DEFAULT_LEVELS,
                   help=f"control grids coarse to fine (default: {_levels_text(DEFAULT_LEVELS)}, assumed)")
    g.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS,
                   help="max iterations per level (default: %(default)s, assumed)")
    g.add_argument("--fd-epsilon", type=float, default=DEFAULT_FD_EPSILON,
                   help="finite-difference step in voxels (default: %(default)s, assumed)")
    g.add_argument("--initial-step", type=float, default=DEFAULT_INITIAL_STEP,
                   help="first line-search step in voxels (default: %(default)s, assumed)")
    g.add_argument("--seed", type=int, default=0, help="recorded in the run manifest (default: %(default)s)")
    _add_runtime_flags(p)


def _config_from(args: argparse.Namespace) -> RegistrationConfig:
    return RegistrationConfig(
        weights=LossWeights(alpha=args.alpha, beta=args.beta, lam=args.lam),
        steps=args.steps,
        sigma_mm=args.sigma_mm,
        levels=args.levels,
        iterations=args.iterations,
        fd_epsilon=args.fd_epsilon,
        initial_step=args.initial_step,
        strict_folds=not args.lenient_folds,
        seed=args.seed,
        threads=args.threads,
        deterministic=args.deterministic,
    )


def _require_pair(args: argparse.Namespace, a: str, b: str) -> None:
    if (getattr(args, a) is None) != (getattr(args, b) is None):
        raise UsageError(f"--{a.replace('_', '-')} and --{b.replace('_', '-')} must be given together")


def cmd_register(args: argparse.Namespace) -> int:
    _require_pair(args, "fixed_dti", "moving_dti")
    cfg = _config_from(args)
    summary = run_registration(
        args.fixed_t2w,
        args.moving_t2w,
        fixed_dti=args.fixed_dti,
        moving_dti=args.moving_dti,
        mask=args.mask,
        cfg=cfg,
        out_dir=args.out_dir,
        reuse=args.reuse,
    )
    print(f"[register] {'reused' if summary['reused'] else 'wrote'} {summary['outputs']['manifest']}")
    return EXIT_OK


def cmd_warp(args: argparse.Namespace) -> int:
    substituted = warp_file(args.input, args.field, args.out, args.type, strict=not args.lenient_folds)
    if substituted:
        print(f"[warp] identity substituted at {substituted} voxel(s)")
    print(f"[warp] wrote {args.out}")
    return EXIT_OK


def cmd_exp(args: argparse.Namespace) -> int:
    exp_file(args.velocity, args.out, args.steps)
    print(f"[exp] wrote {args.out}")
    return EXIT_OK


def cmd_jacobian(args: argparse.Namespace) -> int:
    det = jacobian_file(args.field, args.out)
    print(format_report({"min_det": float(det.data.min()), "folds": int((det.data <= 0).sum())}), end="")
    return EXIT_OK


def cmd_fa(args: argparse.Namespace) -> int:
    fa_file(args.tensor, args.out)
    print(f"[fa] wrote {args.out}")
    return EXIT_OK


def cmd_phantom(args: argparse.Namespace) -> int:
    spec = PhantomSpec(
        grid=GridSpec(*args.size, spacing_mm=args.spacing),
        kind=PhantomKind(args.kind),
        noise=args.noise,
        seed=args.seed,
        swap_orientations=args.swap_orientations,
    )
    written = phantom_files(spec, args.out_prefix, max_displacement=args.max_displacement, pair_noise=args.pair_noise)
    for key, path in written.items():
        print(f"{key}={path}")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    if args.metric != "defstats" and args.b is None:
        raise UsageError(f"metrics {args.metric} needs two operands")
    report = metric_report(args.metric, args.a, args.b)
    print(format_report(report), end="")
    if args.out is not None:
        write_report(report, args.out)
    if args.table is not None:
        write_table([{"metric": args.metric, **report}], args.table)
    return EXIT_OK


def cmd_snapshot(args: argparse.Namespace) -> int:
    out = snapshot_files(
        args.out,
        args.fixed_t2w,
        args.moving_t2w,
        args.warped_t2w,
        fixed_dti=args.fixed_dti,
        moving_dti=args.moving_dti,
        warped_dti=args.warped_dti,
        labels=args.labels or (),
        outline_label=args.outline_label,
        slice_index=args.slice,
    )
    print(f"[snapshot] wrote {out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    _require_pair(args, "fixed_labels", "moving_labels")
    cfg = _config_from(args)
    inputs = load_inputs(args.fixed_t2w, args.moving_t2w, fixed_dti=args.fixed_dti, moving_dti=args.moving_dti)
    labels: Dict[str, Optional[LabelVolume]] = {"fixed_labels": None, "moving_labels": None}
    if args.fixed_labels is not None:
        labels = {
            "fixed_labels": load_volume(args.fixed_labels, VolumeKind.LABEL),
            "moving_labels": load_volume(args.moving_labels, VolumeKind.LABEL),
        }
    rows = compare_modes(inputs, cfg, **labels)
    flat = {f"{row['mode']}.{k}": v for row in rows for k, v in row.items() if k != "mode"}
    print(format_report(flat), end="")
    if args.out is not None:
        write_report(flat, args.out)
    if args.table is not None:
        write_table(rows, args.table)
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    rows = [row for path in args.tables for row in read_table(path)]
    summary = summarize_rows(rows, args.fields)
    flat = {f"{row['mode']}.{k}": v for row in summary for k, v in row.items() if k != "mode"}
    print(format_report(flat), end="")
    if args.out is not None:
        write_table(summary, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtireg",
        description="Diffusion-tensor-driven diffeomorphic registration of T2w (+ DTI) volumes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("register", help="optimise a velocity field aligning moving onto fixed")
    p.add_argument("--fixed-t2w", type=Path, required=True)
    p.add_argument("--moving-t2w", type=Path, required=True)
    p.add_argument("--fixed-dti", type=Path, help="6-component tensor volume; requires --moving-dti")
    p.add_argument("--moving-dti", type=Path, help="6-component tensor volume; requires --fixed-dti")
    p.add_argument("--mask", type=Path, help="label volume; loss sums run over voxels > 0")
    p.add_argument("--out-dir", type=Path, default=DEFAULT_REGISTRATION_DIR,
                   help="directory for phi, velocity, warped volumes, loss trace, manifest (default: %(default)s)")
    p.add_argument("--reuse", action="store_true",
                   help="skip the run when the manifest fingerprint matches and all outputs exist")
    _add_registration_flags(p)
    p.set_defaults(handler=cmd_register)

    p = sub.add_parser("warp", help="backward-warp a volume by a displacement field")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--field", type=Path, required=True, help="displacement field")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--type", choices=WARP_TYPES, default="scalar",
                   help="scalar: trilinear; tensor: component warp + reorientation; label: nearest")
    p.add_argument("--lenient-folds", action="store_true",
                   help="substitute the identity rotation at folded voxels instead of failing")
    p.set_defaults(handler=cmd_warp)

    p = sub.add_parser("exp", help="exponentiate a velocity field into a displacement field")
    p.add_argument("--velocity", type=Path, required=True)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="squaring steps (default: %(default)s, published)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_exp)

    p = sub.add_parser("jacobian", help="Jacobian determinant map of a displacement field")
    p.add_argument("--field", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_jacobian)

    p = sub.add_parser("fa", help="fractional anisotropy map of a tensor volume")
    p.add_argument("--tensor", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_fa)

    p = sub.add_parser("phantom", help="write a seeded synthetic phantom (and optionally a warped pair)")
    p.add_argument("--kind", choices=[k.value for k in PhantomKind], default=PhantomKind.BLOBS.value)
    p.add_argument("--size", type=parse_shape, default=(32, 32, 32), help="N or NxNxN (default: 32)")
    p.add_argument("--spacing", type=float, default=DEFAULT_SPACING_MM, help="voxel size in mm (default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.0, help="additive noise on the T2w channel (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--swap-orientations", action="store_true",
                   help="orientation-contrast only: swap the two tensor orientations")
    p.add_argument("--max-displacement", type=float,
                   help="also write a moving set warped by a random ground-truth field of this size (voxels)")
    p.add_argument("--pair-noise", type=float, default=0.0, help="extra noise on the moving T2w (default: %(default)s)")
    p.add_argument("--out-prefix", type=Path, default=DEFAULT_PHANTOM_PREFIX, help="(default: %(default)s)")
    p.set_defaults(handler=cmd_phantom)

    p = sub.add_parser("metrics", help="dice | fa-ssd | ncc | eds on two files, defstats on one field")
    p.add_argument("metric", choices=METRICS)
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path, nargs="?")
    p.add_argument("--out", type=Path, help="also write the key=value report here")
    p.add_argument("--table", type=Path, help="also write a CSV row here")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("snapshot", help="PNG panel of axial slices (T2w row, FA row when tensors are given)")
    p.add_argument("--fixed-t2w", type=Path, required=True)
    p.add_argument("--moving-t2w", type=Path, required=True)
    p.add_argument("--warped-t2w", type=Path, nargs="*", default=[],
                   help="one column per warped T2w, e.g. T2w-only then T2w+DTI")
    p.add_argument("--fixed-dti", type=Path)
    p.add_argument("--moving-dti", type=Path)
    p.add_argument("--warped-dti", type=Path, nargs="*", default=[],
                   help="warped tensors, same order as --warped-t2w")
    p.add_argument("--labels", type=Path, nargs="*", help="label volume per T2w column for outlines")
    p.add_argument("--outline-label", type=int)
    p.add_argument("--slice", type=int, help="axial slice index (default: middle)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_snapshot)

    p = sub.add_parser("compare", help="identity vs T2w-only vs T2w+DTI on one pair: FA-SSD, NCC, Dice")
    p.add_argument("--fixed-t2w", type=Path, required=True)
    p.add_argument("--moving-t2w", type=Path, required=True)
    p.add_argument("--fixed-dti", type=Path, required=True)
    p.add_argument("--moving-dti", type=Path, required=True)
    p.add_argument("--fixed-labels", type=Path)
    p.add_argument("--moving-labels", type=Path)
    p.add_argument("--out", type=Path, help="also write the key=value report here")
    p.add_argument("--table", type=Path, help="also write a CSV table here")
    _add_registration_flags(p)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("summarize", help="per-mode mean and std over compare tables, e.g. one per seed")
    p.add_argument("tables", type=Path, nargs="+", metavar="TABLE")
    p.add_argument("--fields", nargs="+", default=list(SUMMARY_FIELDS),
                   help="numeric columns (default: %(default)s)")
    p.add_argument("--out", type=Path, help="also write the summary as a CSV table here")
    p.set_defaults(handler=cmd_summarize)

    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if not isinstance(exc.code, str) else EXIT_USAGE
    _configure_logging(args)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        logger.error("%s", exc)
        return EXIT_USAGE
    except (VolumeError, DegenerateInputError, OSError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except (ReorientationError, NonFiniteLossError, GroundTruthError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        logger.error("invalid flags: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
