"""Command-line entry point: ``run``, ``verify`` and ``mesh-gen``.

Exit codes: 0 success, 2 configuration error, 3 solver failure (and 1 for a
verification suite with failing checks).
"""
from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def thread_count(env=None) -> int:
    """Worker cap from ``FEMFORGE_THREADS`` (default 1)."""
    raw = (os.environ if env is None else env).get("FEMFORGE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got {raw!r}", "FEMFORGE_THREADS") from None
    if n < 1:
        raise ConfigError(f"expected a positive integer, got {raw!r}", "FEMFORGE_THREADS")
    return n


def _cmd_run(args) -> int:
    from .config import load_config
    from .runner import RunFailure, run_simulation
    threads = thread_count()
    cfg = load_config(args.config)
    try:
        manifest = run_simulation(cfg, args.output_dir, quiet=args.quiet, threads=threads,
                                  log=print)
    except RunFailure as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        if exc.report is not None and hasattr(exc.report, "as_dict"):
            print(f"report: {exc.report.as_dict()}", file=sys.stderr)
        return EXIT_SOLVER
    if not args.quiet:
        print(f"completed {len(manifest.steps)} steps; outputs: {', '.join(manifest.outputs)}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verification import SUITES, run_suite
    if args.suite != "all" and args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}, all",
              file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if run_suite(args.suite) else EXIT_CHECKS


def _cmd_mesh_gen(args) -> int:
    from .mesh import MeshError, generate_grid, save_mesh
    try:
        mesh = generate_grid(args.nx, args.ny, args.lx, args.ly)
    except MeshError as exc:
        raise ConfigError(str(exc), "mesh-gen") from None
    save_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_nodes} nodes, {mesh.n_elements} elements")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="femforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation from a JSON configuration")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None)
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=_cmd_run)

    verify = sub.add_parser("verify", help="run a named verification suite (or 'all')")
    verify.add_argument("suite")
    verify.set_defaults(func=_cmd_verify)

    mesh = sub.add_parser("mesh-gen", help="write a structured quad mesh as JSON")
    mesh.add_argument("nx", type=int)
    mesh.add_argument("ny", type=int)
    mesh.add_argument("lx", type=float)
    mesh.add_argument("ly", type=float)
    mesh.add_argument("-o", "--output", required=True)
    mesh.set_defaults(func=_cmd_mesh_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
