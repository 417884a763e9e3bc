"""Command line interface: ``gmrfpde solve|sweep|check|export-mesh``.

Exit codes: 0 success, 2 invalid spec or arguments, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .errors import GmrfPdeError, SpecError, StageError

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_NUMERIC = 3

LEVEL_COLUMNS = ["resolution", "n_dofs", "relative_error", "iterations", "decrement", "converged",
                 "prior_s", "conditioning_s", "variance_s", "sampling_s", "baseline_s", "baseline_agreement"]


def _level_row(lv, prefix=()):
    t = lv.timings

    def f(v):
        return "" if v is None else f"{v:.9g}" if isinstance(v, float) else str(v)

    return list(prefix) + [lv.resolution, lv.n_dofs, f(lv.relative_error), lv.iterations, f(lv.decrement),
                           str(lv.converged).lower(), f(t["prior"]), f(t["conditioning"]),
                           f(t["variance"]), f(t["sampling"]), f(lv.baseline_time), f(lv.baseline_agreement)]


def _load(args, extra=()):
    from .bench.config import load_spec

    overrides = list(args.override or []) + list(extra)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"problem.seed={args.seed}")
    return load_spec(args.spec, overrides)


def cmd_solve(args):
    from .bench.experiments import run_experiment

    spec = _load(args)
    out = Path(args.out) if args.out else Path(spec.output.directory)
    record = run_experiment(spec, out, figures=False if args.no_figures else None, warmup=args.warmup)
    w = csv.writer(sys.stdout)
    w.writerow(LEVEL_COLUMNS)
    for lv in record.levels:
        w.writerow(_level_row(lv))
    print(f"# wrote {', '.join(sorted(record.files.values()))} to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args):
    from .bench.experiments import run_experiment

    if "." not in args.param:
        raise SpecError(f"--param {args.param!r} must look like section.key")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise SpecError("--values needs at least one value")
    # validate every variant before running any of them
    specs = [_load(args, [f"{args.param}={v}"]) for v in values]
    base = Path(args.out) if args.out else Path(specs[0].output.directory)
    w = csv.writer(sys.stdout)
    w.writerow([args.param] + LEVEL_COLUMNS)
    for v, spec in zip(values, specs):
        record = run_experiment(spec, base / f"{args.param}={v}", figures=False if args.no_figures else None)
        for lv in record.levels:
            w.writerow(_level_row(lv, (v,)))
        sys.stdout.flush()
    return EXIT_OK


def cmd_check(args):
    from .checks import run_checks

    results = run_checks(args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} | {r.name} | {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_export_mesh(args):
    from .bench.problems import synthetic_darcy_grid
    from .fem.mesh import build_interval_mesh, build_unit_square_mesh, write_coefficient_grid, write_mesh

    spec = _load(args)
    out = Path(args.out) if args.out else Path(spec.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    lo, hi = (-1.0, 1.0) if spec.kind.startswith("burgers") else (0.0, 1.0)
    for n in spec.mesh.resolutions:
        n = int(n)
        mesh = build_interval_mesh(n, lo, hi) if spec.mesh.dim == 1 else build_unit_square_mesh(n)
        path = out / f"mesh_{n}.txt"
        write_mesh(path, mesh)
        print(path)
        if spec.kind == "darcy" and not spec.darcy.coefficient_file:
            d = spec.darcy
            grid = synthetic_darcy_grid(n, spec.problem.seed, d.field_range, d.threshold, d.high, d.low)
            gpath = out / f"coefficient_{n}.txt"
            write_coefficient_grid(gpath, grid)
            print(gpath)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gmrfpde", description="Probabilistic PDE solving with GMRF priors.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_, with_spec=True):
        if with_spec:
            sp_.add_argument("spec", help="problem specification file")
            sp_.add_argument("--out", help="output directory (default: output.directory)")
            sp_.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE",
                             help="override a spec value; repeatable")
        sp_.add_argument("--seed", type=int, help="random seed (overrides problem.seed)")

    s = sub.add_parser("solve", help="run one experiment")
    common(s)
    s.add_argument("--no-figures", action="store_true", help="skip the PNG report")
    s.add_argument("--warmup", action="store_true", help="run the coarsest level once before timing")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="run one experiment per value of a spec key")
    common(s)
    s.add_argument("--param", required=True, help="spec key to vary, e.g. observations.collocation_count")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("check", help="run the invariant suite")
    common(s, with_spec=False)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("export-mesh", help="write the meshes (and Darcy coefficient grids) of a spec")
    common(s)
    s.set_defaults(func=cmd_export_mesh)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, 0 for --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except StageError as exc:
        print(f"numerical failure in stage '{exc.stage}': {type(exc.cause).__name__}: {exc.cause}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except GmrfPdeError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
