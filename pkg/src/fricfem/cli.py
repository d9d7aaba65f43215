"""Command line entry point ``fricfem``.

Exit codes: 0 success, 1 bad input, 2 the solver did not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import FricFemError
from .output import ResultWriter, write_metadata
from .scene import load_scene
from .solver import Solver

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(prog="fricfem", description="Quasi-static frictional contact solver.")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--out", default="./out", help="output directory (default ./out)")
    p.add_argument("--pass", dest="pass_mode", choices=["full", "twohalf"], help="contact pass mode")
    p.add_argument("--steps", type=int, help="load steps for every schedule phase")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted scene override, repeatable")
    p.add_argument("--snapshots", type=int, metavar="K", help="write a VTK snapshot every K steps")
    p.add_argument("--quiet", action="store_true", help="no per-step progress")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as bad input; --help exits cleanly
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.steps is not None and args.steps < 1:
        print("error: --steps must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        model = load_scene(args.scene, args.override, args.pass_mode, args.steps)
    except (FricFemError, ValueError, KeyError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT

    every = args.snapshots if args.snapshots is not None else model.output_options.get("snapshots", 0)
    try:
        writer = ResultWriter(args.out, model, every)
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT

    def on_step(rec):
        writer(rec)
        if not args.quiet:
            P = rec.P
            print("step %4d  t=%.4f  it=%2d  P=(%s)  D=%.3e" % (
                rec.step, rec.time, rec.iterations, ", ".join("%.5g" % v for v in P[:model.dim]),
                rec.dissipation), flush=True)

    opts = dict(model.solver_options)
    solver = Solver(model, on_step=on_step, **opts)
    try:
        report = solver.run()
    finally:
        writer.close()
    write_metadata(Path(args.out) / "metadata.json", model, solver, report,
                   {"snapshots": [p.name for p in writer.snapshots]})
    if not report.converged:
        print("error: %s" % report.message, file=sys.stderr)
        return EXIT_NONCONVERGENCE
    if not args.quiet:
        print("done: %d steps written to %s" % (len(report.steps), args.out))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
