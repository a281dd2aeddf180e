#!/usr/bin/env python3
"""
L-SPECT command line
Plans, simulates, reconstructs and analyzes MPRD L-SPECT experiments from a YAML config
"""

import argparse
import json
import os
import sys
from typing import List, Optional

from lspect import __version__
from lspect.config import DEFAULT_CONFIG_PATH, ExperimentConfig
from lspect.tools import STAGES, run_pipeline, trace_bench_tool
from utils.errors import EXIT_FAILURE, EXIT_OK, LSpectError
from utils.responses import create_error_response

DEFAULT_OUT = "runs/latest"


def load_env_file() -> None:
    # Load environment variables from ENV_FILE if specified
    env_file = os.getenv("ENV_FILE")
    if env_file and os.path.exists(env_file):
        from dotenv import load_dotenv
        load_dotenv(env_file)
        print(f"✅ Loaded environment from {env_file}")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG_PATH, help="experiment YAML file")
    common.add_argument("--out", default=DEFAULT_OUT, help="output directory of the run")
    common.add_argument("--seed", type=int, help="override phantom.seed")
    common.add_argument("--workers", type=int, help="worker threads (default run.workers)")
    common.add_argument("--shift", type=float, help="override geometry.center_shift (mm)")
    common.add_argument("--pitch", type=float, help="override geometry.pinhole_pitch (mm)")
    common.add_argument("--gap", type=float, help="override geometry.object_gap (mm)")
    common.add_argument("--detector-gap", type=float, help="override geometry.detector_gap (mm)")
    common.add_argument("--multiplier", type=int, help="override geometry.module_width_multiplier")
    common.add_argument("--verbose", action="store_true", help="print one line per view")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="lspect", description=__doc__.strip().splitlines()[1])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(
        dest="command", metavar="{plan,phantom,simulate,reconstruct,analyze,run}", required=True
    )

    commands.add_parser("plan", parents=[common], help="print phi, n, theta, h and alpha of the system")

    phantom = commands.add_parser("phantom", help="phantom utilities")
    phantom_commands = phantom.add_subparsers(dest="phantom_command", required=True)
    phantom_commands.add_parser("voxelize", parents=[common], help="write the ground-truth occupancy volume")

    commands.add_parser("simulate", parents=[common], help="Monte Carlo projections of every view")

    reconstruct = commands.add_parser("reconstruct", parents=[common], help="backproject stored projections")
    reconstruct.add_argument("--threshold-halfmax", action="store_true", default=None,
                             help="also write the half-maximum binary volume")
    reconstruct.add_argument("--no-slices", dest="slices", action="store_false", default=None,
                             help="skip the central XY/XZ slice images")

    commands.add_parser("analyze", parents=[common], help="profiles, FWHM and MTF of the stored volume")

    run = commands.add_parser("run", parents=[common], help="run several stages in order")
    run.add_argument("--stages", nargs="+", default=list(STAGES), choices=STAGES)

    bench = commands.add_parser("trace-bench", parents=[common])
    bench.add_argument("--rays", type=int, default=100_000)
    return parser


def _stages_for(args: argparse.Namespace) -> List[str]:
    if args.command == "phantom":
        return ["phantom"]
    if args.command == "run":
        return list(args.stages)
    return [args.command]


def main(argv: Optional[List[str]] = None) -> int:
    load_env_file()
    args = build_parser().parse_args(argv)

    try:
        config = ExperimentConfig.load(args.config).with_overrides(
            shift=args.shift,
            pitch=args.pitch,
            gap=args.gap,
            detector_gap=args.detector_gap,
            multiplier=args.multiplier,
            seed=args.seed,
            workers=args.workers,
            threshold_halfmax=getattr(args, "threshold_halfmax", None),
            slices=getattr(args, "slices", None),
        )
    except LSpectError as e:
        print(create_error_response("Invalid configuration", str(e), exit_code=e.exit_code))
        return e.exit_code

    if args.command == "trace-bench":
        response = json.loads(trace_bench_tool(config)(rays=args.rays))
        print(json.dumps(response, indent=2))
        return int(response.get("exit_code", EXIT_FAILURE)) if "error" in response else EXIT_OK

    return run_pipeline(config, args.out, _stages_for(args), workers=args.workers, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
