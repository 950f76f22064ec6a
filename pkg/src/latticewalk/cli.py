"""``latticewalk`` command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from latticewalk.config import load_preset, parse_config, preset_names
from latticewalk.experiments import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="latticewalk",
        description="Run a sampler experiment and write its results as CSV.",
    )
    parser.add_argument("config", nargs="?", help="config file path or preset name")
    parser.add_argument("--out", help="CSV output path (default: config 'out', else stdout)")
    parser.add_argument("--seed", type=int, help="run a single master seed instead of the config's seeds")
    parser.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    return parser


def load_config(source):
    if Path(source).is_file() or source.endswith(".cfg") or "/" in source:
        return parse_config(source)
    return load_preset(source)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    if args.list_presets:
        print("\n".join(preset_names()))
        return EXIT_OK
    if not args.config:
        print("latticewalk: a config path or preset name is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.out is not None:
            overrides["out"] = args.out
        if args.seed is not None:
            overrides["seeds"] = (args.seed,)
        cfg = cfg.replace(**overrides)
    except ValueError as exc:
        print(f"latticewalk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg)
        text = result.to_csv()
        if cfg.out:
            Path(cfg.out).write_text(text)
        else:
            sys.stdout.write(text)
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"latticewalk: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for line in result.summary:
        print(line, file=sys.stderr)
    # a failed moment or constant check is a failure, not a divergence
    return EXIT_OK if result.passed else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
