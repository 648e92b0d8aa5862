"""Command-line entry point: ``phasecomb run``, ``phasecomb preset`` and ``phasecomb list-presets``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from phasecomb.experiment import (
    EXIT_OK,
    EXIT_SPEC,
    FORMATS,
    KEYS,
    OUTPUT_DIR_ENV,
    PRESETS,
    SpecError,
    parse_spec,
    run_experiment,
    tomllib,
)


def _parse_assignment(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise SpecError(f"--set expects key=value, got {text!r}")
    try:
        value = tomllib.loads(f"value = {raw.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()  # bare words are strings
    return key, value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasecomb",
        description="Simulate the memory-loop hybrid interferometer and write tabular results.",
        epilog=f"Data files go to ${OUTPUT_DIR_ENV} (default: current directory) unless a spec sets 'output'.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a TOML spec file")
    run.add_argument("spec", type=Path)
    run.add_argument("-o", "--output", help="data file path (overrides the spec file)")

    preset = sub.add_parser("preset", help="run a preset with optional overrides")
    preset.add_argument("name", choices=sorted(PRESETS))
    preset.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE")
    preset.add_argument("-o", "--output", help="data file path")
    preset.add_argument("--format", choices=FORMATS, default="csv")

    listing = sub.add_parser("list-presets", help="show presets and their defaults")
    listing.add_argument("-v", "--verbose", action="store_true", help="also list every default")
    return parser


def _list_presets(verbose: bool) -> None:
    for preset in PRESETS.values():
        print(f"{preset.name:18s} {preset.summary}")
        if verbose:
            for key, value in preset.defaults.items():
                shown = "steepest point" if value is None else value
                print(f"    {key:16s} = {shown!s:24s} {KEYS[key].doc}")


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-presets":
        _list_presets(args.verbose)
        return EXIT_OK
    try:
        if args.command == "run":
            try:
                text = args.spec.read_text()
            except OSError as err:
                raise SpecError(f"cannot read spec: {err}") from None
            extra = {}
        else:
            text = f'preset = "{args.name}"\nformat = "{args.format}"\n'
            extra = dict(_parse_assignment(a) for a in args.assignments)
        if args.output is not None:
            extra["output"] = args.output
        spec = parse_spec(text, extra)
    except SpecError as err:
        print(f"spec error: {err}", file=sys.stderr)
        return EXIT_SPEC

    result = run_experiment(spec)
    stream = sys.stdout if result.status == EXIT_OK else sys.stderr
    print(result.message, file=stream)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
