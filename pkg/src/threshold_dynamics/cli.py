"""Command-line driver for the threshold dynamics experiments.

Every subcommand accepts ``--config FILE``: a flat ``key = value`` file whose
keys are the long option names (dashes or underscores). Flags given on the
command line override config keys. Exit status 0 means every check the run
performs passed.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from . import experiments
from .exceptions import ThresholdDynamicsError
from .grid import ball, dumbbell, grid_evolve, load_snapshot, random_blobs, save_snapshot, stripe
from .graph import GraphInterface
from .schemes import SCHEME_NAMES, make_scheme

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` pairs; ``#`` comments and optional quotes allowed."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    text = Path(path).read_text()
    parser.read_string("[experiment]\n" + text)
    out = {}
    for key, value in parser["experiment"].items():
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.replace("-", "_")] = value
    return out


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


def cmd_converge(args) -> int:
    if args.problem == "grim-reaper":
        report = experiments.run_grim_reaper(args.scheme, args.steps, args.points, method=args.method)
    else:
        reference = GraphInterface.load(args.reference) if args.reference else None
        if reference is None:
            reference = experiments.graph3d_reference(args.points, cfl=args.pde_cfl)
            if args.save_reference:
                reference.save(args.save_reference)
        report = experiments.run_3d_test(
            args.scheme, args.steps, args.points, method=args.method, reference=reference
        )
    fh = _open_out(args.output)
    report.to_csv(fh)
    _close_out(fh)
    print(report.table(), file=sys.stderr)
    ok = True
    orders = report.orders
    if args.min_order is not None and any(o < args.min_order for o in orders):
        ok = False
    if args.max_order is not None and any(o > args.max_order for o in orders):
        ok = False
    if args.max_error is not None and report.errors[-1] > args.max_error:
        ok = False
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_energy_trace(args) -> int:
    trace = experiments.run_energy_trace(args.scheme, args.n, args.dt, args.steps, args.seed, args.dim)
    fh = _open_out(args.output)
    trace.to_csv(fh)
    _close_out(fh)
    if not trace.monotone:
        print(f"energy increased by {trace.max_increase:.3e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _initial_grid(args):
    if args.snapshot:
        return load_snapshot(args.snapshot)[0]
    if args.initial == "blobs":
        return random_blobs(args.n, args.dim, args.seed)
    if args.initial == "ball":
        return ball(args.n, args.dim, args.radius)
    if args.initial == "stripe":
        return stripe(args.n, args.dim)
    return dumbbell(args.n)


def cmd_evolve_grid(args) -> int:
    spec = make_scheme(args.scheme)
    sigma = _initial_grid(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_snapshot(sigma, outdir / f"{spec.name}_{0:05d}.raw", 0.0, spec.name)

    def snap(k, s):
        if k % args.every == 0 or k == args.steps:
            save_snapshot(s, outdir / f"{spec.name}_{k:05d}.raw", k * args.dt, spec.name)

    grid_evolve(sigma, spec, args.dt, args.steps, callback=snap)
    return EXIT_OK


def cmd_verify_gamma(args) -> int:
    report = experiments.verify_gamma()
    print(report.text())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            report.to_csv(fh)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_dumbbell(args) -> int:
    result = experiments.run_dumbbell(
        args.scheme, args.n, args.dt, args.T, outdir=args.outdir, snapshot_every=args.every
    )
    fh = _open_out(args.output)
    fh.write("step,time,components\n")
    for k, c in enumerate(result.counts):
        fh.write(f"{k},{k * args.dt!r},{c}\n")
    _close_out(fh)
    if result.pinch_step is None:
        print("no 1 -> 2 component transition recorded", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"pinch-off at step {result.pinch_step} (t = {result.pinch_time:.4g})", file=sys.stderr)
    return EXIT_OK


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="threshold-dynamics", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    def scheme_arg(p, default):
        p.add_argument("--scheme", choices=SCHEME_NAMES, default=default)

    p = add("converge", cmd_converge, "convergence table on a graph problem")
    p.add_argument("--problem", choices=("grim-reaper", "graph3d"), default="grim-reaper")
    scheme_arg(p, "mbo")
    p.add_argument("--steps", type=_int_list, default="8,16,32,64,128,256")
    p.add_argument("--points", type=int, default=None, help="lattice points per axis")
    p.add_argument("--method", choices=("auto", "quadrature", "lattice"), default="auto")
    p.add_argument("--reference", help="graph snapshot to use as the graph3d reference")
    p.add_argument("--save-reference", help="write the computed graph3d reference here")
    p.add_argument("--pde-cfl", type=float, default=0.1)
    p.add_argument("--min-order", type=float)
    p.add_argument("--max-order", type=float)
    p.add_argument("--max-error", type=float)
    p.add_argument("--output", "-o", help="CSV path (default stdout)")

    p = add("energy-trace", cmd_energy_trace, "energy after each grid step")
    scheme_arg(p, "mstage4")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--dim", type=int, choices=(2, 3), default=2)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--output", "-o")

    p = add("evolve-grid", cmd_evolve_grid, "evolve a grid set and write snapshots")
    scheme_arg(p, "mbo")
    p.add_argument("--initial", choices=("blobs", "ball", "stripe", "dumbbell"), default="blobs")
    p.add_argument("--snapshot", help="start from a saved grid snapshot")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--dim", type=int, choices=(2, 3), default=2)
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--every", type=int, default=10)
    p.add_argument("--outdir", default="snapshots")

    p = add("verify-gamma", cmd_verify_gamma, "certify the 4-stage coefficients")
    p.add_argument("--csv", help="also write the report as CSV")

    p = add("dumbbell", cmd_dumbbell, "dumbbell pinch-off on a 3D grid")
    scheme_arg(p, "twokernel")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--dt", type=float, default=2e-3)
    p.add_argument("--T", type=float, default=0.03)
    p.add_argument("--every", type=int, default=10)
    p.add_argument("--outdir", help="snapshot directory (none written if omitted)")
    p.add_argument("--output", "-o", help="component-count CSV (default stdout)")
    return parser, subs


def parse_args(argv=None):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        config = read_config(args.config)
        unknown = sorted(set(config) - known)
        if unknown:
            parser.error(f"unknown config key(s): {', '.join(unknown)}")
        # string defaults go through each option's type converter
        sub.set_defaults(**config)
        args = parser.parse_args(argv)
    if args.command == "converge" and args.points is None:
        args.points = 4000 if args.problem == "grim-reaper" else 256
    if args.command == "converge" and isinstance(args.steps, str):
        args.steps = _int_list(args.steps)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ThresholdDynamicsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
