"""Command line: ``jetmbs simulate | check | list-models``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .integrator import IntegrationError
from .models import (
    BUILTIN_NAMES,
    CsvSink,
    ModelValidationError,
    check_model,
    load_model,
    save_model,
    simulate,
    stats_json,
    stats_table,
)
from .projection import ProjectionError

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jetmbs", description="Constrained rigid multibody simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a model and write the trajectory")
    sim.add_argument("model", help="model JSON file or built-in name")
    sim.add_argument("--projection", choices=["quasi", "orthogonal"])
    sim.add_argument("--invariants", choices=["on", "off"])
    sim.add_argument("--out", type=Path, help="trajectory CSV")
    sim.add_argument("--stats", type=Path, help="machine-readable run statistics (JSON)")
    sim.add_argument("--t-end", type=float, help="override the final time")

    chk = sub.add_parser("check", help="validate a model and project its initial state")
    chk.add_argument("model")
    chk.add_argument("--write-projected", type=Path, help="save the model with its projected initial state")

    sub.add_parser("list-models", help="list the built-in models")
    return p


def _simulate(args) -> int:
    spec = load_model(args.model)
    overrides = {"t_end": args.t_end} if args.t_end else {}
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else None
    try:
        sink = CsvSink(fh, spec) if fh else None
        result = simulate(spec, sink=sink, projection=args.projection, invariants=args.invariants, **overrides)
    finally:
        if fh:
            fh.close()
    title = f"{spec.name}: projection={result.metadata['projection']['mode']} invariants={result.metadata['invariants']}"
    print(stats_table(result.stats, title))
    if args.stats:
        args.stats.write_text(stats_json(result), encoding="utf-8")
    return EXIT_OK


def _check(args) -> int:
    spec = load_model(args.model)
    report = check_model(spec)
    print(f"model {spec.name}")
    print(report.summary())
    if args.write_projected:
        save_model(report.projected, args.write_projected)
    return EXIT_OK if report.ok else EXIT_INVALID


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-models":
            for name in BUILTIN_NAMES:
                spec = load_model(name)
                print(f"{name:<20}{spec.description}")
            return EXIT_OK
        if args.command == "check":
            return _check(args)
        return _simulate(args)
    except ModelValidationError as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, ProjectionError) as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        report = getattr(exc, "report", None)
        if report is not None:
            print(f"last projection report: {report}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
