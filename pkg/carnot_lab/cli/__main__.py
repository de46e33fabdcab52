"""
Command line front end: ``carnot-lab run <config>``, ``carnot-lab list-zoo``, ``carnot-lab calibrate <group>``.

Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 for an invalid configuration.
"""
import argparse
import dataclasses
import json
import pathlib
import sys
from typing import List, Optional

from carnot_lab.carnot_core import DescriptorError, EmptyCalibrationError, calibrate_measure
from carnot_lab.cc_metric import estimate_equivalence_constants
from carnot_lab.cli.config import ConfigError, bundled_config, load_config
from carnot_lab.cli.run import run
from carnot_lab.cli.zoo import format_zoo, list_zoo, make_group
from carnot_lab.common.save_util import save_to_json
from carnot_lab.common.utils import set_num_threads

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="carnot-lab",
        description="Numerical verification of composition operator norms on Carnot groups.",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap on the worker threads")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run the suites of an experiment configuration")
    run_parser.add_argument("config", help="JSON configuration file or name of a bundled configuration")
    run_parser.add_argument("--seed", type=int, default=None, help="override the seed of the configuration")
    run_parser.add_argument(
        "--budget-scale", type=float, default=1.0, help="multiply family sizes and sample counts (quick < 1 < thorough)"
    )
    run_parser.add_argument("--output", default=None, help="folder of the report (overrides the configuration)")

    zoo_parser = commands.add_parser("list-zoo", help="print the built-in groups, maps and fields")
    zoo_parser.add_argument("--json", action="store_true", help="print the catalog as JSON")

    calibrate_parser = commands.add_parser("calibrate", help="calibrate the measure normalization of a group")
    calibrate_parser.add_argument("group", help="built-in group name or descriptor file")
    calibrate_parser.add_argument("--method", choices=("monte_carlo", "quadrature"), default="monte_carlo")
    calibrate_parser.add_argument(
        "--n-samples",
        type=int,
        default=None,
        help="Monte Carlo samples (default 10**6 with a closed form distance, 4096 otherwise)",
    )
    calibrate_parser.add_argument("--equivalence-samples", type=int, default=None)
    calibrate_parser.add_argument("--seed", type=int, default=0)
    calibrate_parser.add_argument("--output", default=None, help="JSON file receiving the constants")
    return parser.parse_args(argv)


def _resolve_config(name: str) -> pathlib.Path:
    path = pathlib.Path(name)
    return path if path.exists() else bundled_config(name)


def _run(args: argparse.Namespace) -> int:
    config = load_config(_resolve_config(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    config = config.scaled(args.budget_scale)
    config.validate()
    report = run(config, output_dir=args.output, verbose=args.verbose)
    failures = report.failures()
    if failures:
        print("FAIL", file=sys.stderr)
        for failure in failures:
            print(f"  {failure}", file=sys.stderr)
        return EXIT_FAIL
    print(f"PASS ({len(report.suites)} suites)")
    return EXIT_PASS


def _calibrate(args: argparse.Namespace) -> int:
    group = make_group(args.group)
    try:
        constant = calibrate_measure(group, method=args.method, n_samples=args.n_samples, seed=args.seed, verbose=args.verbose)
    except (ValueError, EmptyCalibrationError) as error:
        raise ConfigError([str(error)]) from None
    c1, c2 = estimate_equivalence_constants(group, n_samples=args.equivalence_samples, seed=args.seed)
    result = {
        "group": group.name,
        "method": args.method,
        "measure_norm": constant.value,
        "measure_norm_error": constant.standard_error,
        "n_samples": constant.n_samples,
        "equivalence_constants": [c1, c2],
        "seed": args.seed,
    }
    if args.output is not None:
        save_to_json(args.output, result, verbose=args.verbose)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_PASS


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError([f"--threads must be positive, got {args.threads}"])
            set_num_threads(args.threads)
        if args.command == "list-zoo":
            catalog = list_zoo()
            print(json.dumps(catalog, indent=2) if args.json else format_zoo(catalog))
            return EXIT_PASS
        if args.command == "calibrate":
            return _calibrate(args)
        return _run(args)
    except (ConfigError, DescriptorError) as error:
        print(f"invalid configuration: {error}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
