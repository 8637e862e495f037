"""Command-line front end: registration plus the synthetic benchmark suite.

Subcommands
-----------
register     align a source PLY onto a target PLY
bench        repeated known-transform recovery on one noise setting
sweep        error grids over Gaussian-noise levels and outlier ratios
consistency  registration error versus cloud size

Exit codes: 0 success, 1 optimizer failure or no convergence, 2 bad usage,
3 I/O error, 4 PLY parse error, 5 degenerate geometry.  ``--threads``
defaults to the MMR_THREADS environment variable, then to all cores;
``--threads 1`` forces the serial reference path.  Angles are degrees and
lengths meters everywhere on this boundary.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

from .centers import CenterConfig
from .core import (
    DegenerateGeometryError,
    InvalidInputError,
    NumericalFailureError,
    Pose,
    apply,
)
from .optimize import MmrConfig, register
from .ply_io import PlyError, read_ply, write_ply, write_results_csv
from .synth import ExperimentSpec, NoiseSpec, consistency_study, run_experiment

EXIT_OK = 0
EXIT_OPTIMIZER = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_DEGENERATE = 5

SWEEP_FIELDS = ["method", "param_name", "param_value", "repeat", "seed",
                "trans_err_m", "rot_err_deg", "loss", "iters", "time_s"]
BENCH_FIELDS = ["method", "repeat", "seed", "gaussian_sigma", "outlier_ratio",
                "trans_err_m", "rot_err_deg", "loss", "iters", "time_s",
                "converged", "error"]
CONSISTENCY_FIELDS = ["n", "repeat", "seed", "trans_err_m", "rot_err_deg"]


def parse_pose(text: str) -> Pose:
    """Parse 'yaw,pitch,roll,tx,ty,tz' with angles in degrees."""
    parts = text.split(",")
    if len(parts) != 6:
        raise InvalidInputError(f"pose needs 6 comma-separated numbers, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise InvalidInputError(f"non-numeric pose component in {text!r}") from exc
    return Pose(math.radians(vals[0]), math.radians(vals[1]), math.radians(vals[2]),
                vals[3], vals[4], vals[5])


def _wrap_deg(radians: float) -> float:
    deg = math.degrees(radians) % 360.0
    return deg - 360.0 if deg > 180.0 else deg


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _threads(args: argparse.Namespace) -> int | None:
    value = args.threads
    if value is None:
        env = os.environ.get("MMR_THREADS", "").strip()
        value = int(env) if env else None
    if value is not None and value < 1:
        raise InvalidInputError(f"--threads must be >= 1, got {value}")
    return value


def _mmr_cfg(args: argparse.Namespace, init_pose: Pose | None = None) -> MmrConfig:
    return MmrConfig(
        sigma_scale=args.sigma_scale,
        center_cfg=CenterConfig(density_threshold=args.density_threshold,
                                kmeans_k=args.centers_k, seed=args.seed),
        max_iters=args.max_iters,
        init_pose=init_pose or Pose.identity(),
        n_workers=_threads(args),
    )


def _emit_csv(rows: list[dict], fieldnames: list[str], output: str | None) -> None:
    if output:
        write_results_csv(rows, output, fieldnames)
        return
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else str(v)
                         for v in (row[name] for name in fieldnames)])
    sys.stdout.write(buf.getvalue())


def cmd_register(args: argparse.Namespace) -> int:
    source = read_ply(args.source)
    target = read_ply(args.target)
    init = parse_pose(args.init) if args.init else Pose.identity()
    truth = parse_pose(args.truth) if args.truth else None
    cfg = _mmr_cfg(args, init_pose=init)

    report = register(source, target, cfg, truth=truth)
    p = report.estimated_pose
    print(f"estimated pose: yaw={_wrap_deg(p.yaw):.9g} deg  "
          f"pitch={_wrap_deg(p.pitch):.9g} deg  roll={_wrap_deg(p.roll):.9g} deg  "
          f"t=({p.tx:.9g}, {p.ty:.9g}, {p.tz:.9g}) m")
    print(f"final loss: {report.final_loss:.6e}")
    print(f"iterations: {report.iterations} "
          f"({'converged' if report.converged else 'not converged'}, {report.stop_reason})")
    print(f"wall time: {report.wall_time:.3f} s")
    if truth is not None:
        print(f"translation error: {report.translation_error:.6e} m")
        print(f"rotation error: {math.degrees(report.rotation_error):.6e} deg")

    if args.output:
        row = {
            "yaw_deg": _wrap_deg(p.yaw), "pitch_deg": _wrap_deg(p.pitch),
            "roll_deg": _wrap_deg(p.roll), "tx_m": p.tx, "ty_m": p.ty, "tz_m": p.tz,
            "final_loss": report.final_loss, "iterations": report.iterations,
            "converged": report.converged, "time_s": report.wall_time,
            "trans_err_m": (math.nan if report.translation_error is None
                            else report.translation_error),
            "rot_err_deg": (math.nan if report.rotation_error is None
                            else math.degrees(report.rotation_error)),
        }
        write_results_csv([row], args.output)
    if args.aligned_ply:
        write_ply(apply(report.estimated_pose, source), args.aligned_ply)
    return EXIT_OK if report.converged else EXIT_OPTIMIZER


def _experiment_spec(args: argparse.Namespace, noise: NoiseSpec) -> ExperimentSpec:
    if bool(args.shape) == bool(args.input):
        raise InvalidInputError("give exactly one of --shape or --input")
    return ExperimentSpec(
        input=args.shape or args.input,
        target_point_count=args.points,
        noise=noise,
        mmr_cfg=_mmr_cfg(args),
        repeats=args.repeats,
        baseline=args.baseline,
        noise_on_both=args.noise_on_both,
    )


def cmd_bench(args: argparse.Namespace) -> int:
    noise = NoiseSpec(args.noise_sigma, args.outlier_ratio, args.seed)
    rows = run_experiment(_experiment_spec(args, noise))
    out = [{"method": r["method"], "repeat": r["repeat"], "seed": r["seed"],
            "gaussian_sigma": args.noise_sigma, "outlier_ratio": args.outlier_ratio,
            **{k: r[k] for k in ("trans_err_m", "rot_err_deg", "loss",
                                 "iters", "time_s", "converged", "error")}}
           for r in rows]
    _emit_csv(out, BENCH_FIELDS, args.output)
    failures = sum(1 for r in rows if r["error"])
    if failures:
        print(f"warning: {failures} repeat(s) failed", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    noise_grid = _float_list(args.noise_grid) if args.noise_grid else []
    outlier_grid = _float_list(args.outlier_grid) if args.outlier_grid else []
    if not noise_grid and not outlier_grid:
        raise InvalidInputError("give --noise-grid and/or --outlier-grid")
    grid = [("gaussian_sigma", v) for v in noise_grid]
    grid += [("outlier_ratio", v) for v in outlier_grid]

    out: list[dict] = []
    for param_name, value in grid:
        noise = NoiseSpec(
            gaussian_sigma=value if param_name == "gaussian_sigma" else 0.0,
            outlier_ratio=value if param_name == "outlier_ratio" else 0.0,
            seed=args.seed)
        for r in run_experiment(_experiment_spec(args, noise)):
            out.append({"method": r["method"], "param_name": param_name,
                        "param_value": value, "repeat": r["repeat"], "seed": r["seed"],
                        **{k: r[k] for k in ("trans_err_m", "rot_err_deg",
                                             "loss", "iters", "time_s")}})
    _emit_csv(out, SWEEP_FIELDS, args.output)
    return EXIT_OK


def cmd_consistency(args: argparse.Namespace) -> int:
    sizes = _int_list(args.sizes)
    rows = consistency_study(args.shape, sizes, args.repeats,
                             _mmr_cfg(args), seed=args.seed)
    _emit_csv(rows, CONSISTENCY_FIELDS, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master RNG seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: MMR_THREADS env, then all cores)")
    common.add_argument("--sigma-scale", type=float, default=0.05,
                        help="kernel width as a fraction of the target bbox diagonal")
    common.add_argument("--centers-k", type=int, default=500,
                        help="k-means cluster count for dense clouds")
    common.add_argument("--density-threshold", type=int, default=2000,
                        help="clouds up to this size use every point as a center")
    common.add_argument("--max-iters", type=int, default=200)
    common.add_argument("--output", type=str, default=None, help="CSV output path")

    parser = argparse.ArgumentParser(
        prog="mmr", description="Moment-matching point cloud registration")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("register", parents=[common],
                       help="align a source PLY onto a target PLY")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--init", default=None,
                   help="initial pose 'yaw,pitch,roll,tx,ty,tz' (deg, m)")
    p.add_argument("--truth", default=None,
                   help="ground-truth pose for error reporting (deg, m)")
    p.add_argument("--aligned-ply", default=None,
                   help="write the transformed source cloud here")
    p.set_defaults(func=cmd_register)

    def add_experiment_args(q: argparse.ArgumentParser) -> None:
        q.add_argument("--shape", default=None,
                       help="procedural shape id (sphere_surface, box_surface, "
                            "torus_surface, two_blobs)")
        q.add_argument("--input", default=None, help="PLY file instead of a shape")
        q.add_argument("--points", type=int, default=1000,
                       help="target cloud size (downsampled for PLY inputs)")
        q.add_argument("--repeats", type=int, default=1)
        q.add_argument("--baseline", action="store_true",
                       help="also run the naive ICP baseline")
        q.add_argument("--noise-on-both", action="store_true",
                       help="corrupt target as well as source")

    p = sub.add_parser("bench", parents=[common],
                       help="repeated known-transform recovery at one noise setting")
    add_experiment_args(p)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--outlier-ratio", type=float, default=0.0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", parents=[common],
                       help="error grids over noise levels and outlier ratios")
    add_experiment_args(p)
    p.add_argument("--noise-grid", default=None,
                   help="comma-separated Gaussian sigmas, e.g. 0,0.002,0.005,0.01")
    p.add_argument("--outlier-grid", default=None,
                   help="comma-separated outlier ratios, e.g. 0,0.05,0.1")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("consistency", parents=[common],
                       help="registration error versus cloud size")
    p.add_argument("--shape", default="sphere_surface")
    p.add_argument("--sizes", default="100,400,1600,6400",
                   help="comma-separated cloud sizes")
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(func=cmd_consistency)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PlyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DegenerateGeometryError as exc:
        print(f"error: degenerate geometry: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NumericalFailureError as exc:
        print(f"error: optimizer failure: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
