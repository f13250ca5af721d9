"""Command line: ``oamlink run <spec>`` and ``oamlink validate <spec>``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from ._validation import OamError
from .config import SpecError, bundled_specs, load_spec, validation_report


def _parser():
    p = argparse.ArgumentParser(
        prog="oamlink",
        description="Link-level simulator for multi-carrier multi-mode OAM links.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a spec and write CSV results")
    run.add_argument("spec", help="spec file path or bundled spec name")
    run.add_argument("--seed", type=int, default=None, help="override the spec's master seed")
    run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--out-dir", default="results", help="output directory (default results)")
    run.add_argument("--quiet", action="store_true", help="suppress per-point summaries")
    val = sub.add_parser("validate", help="check a spec and list derived quantities")
    val.add_argument("spec", help="spec file path or bundled spec name")
    sub.add_parser("list", help="list bundled specs")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled_specs()))
        return 0
    try:
        spec = load_spec(args.spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read {args.spec}: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        sys.stdout.write(validation_report(spec))
        return 0

    from .experiments import run_spec

    if args.seed is not None:
        if args.seed < 0:
            print("error: --seed must be non-negative", file=sys.stderr)
            return 2
        spec.values["seed"] = args.seed
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    echo = None if args.quiet else print
    start = time.perf_counter()
    try:
        rows, path = run_spec(spec, args.workers, Path(args.out_dir), echo)
    except OamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(rows)} rows to {path} in {time.perf_counter() - start:.1f} s")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
