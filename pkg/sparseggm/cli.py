"""Command line interface for sparseggm."""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from .__version__ import __version__
from .bench import Benchmark
from .const import INNER_SAMPLERS
from .data import read_graph
from .exceptions import SparseGGMError
from .models import ExperimentConfig
from .utils import parse_config

_LOGGER = logging.getLogger(__name__)

COMMANDS = ["table1", "table2", "compare", "tune-hmc", "glasso-fit", "ggm-fit"]


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with one subcommand per experiment."""
    parser = argparse.ArgumentParser(
        prog="sparseggm", description="Bayesian structure learning for sparse GGMs."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", type=Path, help="flat key = value config file")
        sub.add_argument("--seed", type=int, help="override the config seed")
        sub.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        sub.add_argument("--verbose", "-v", action="count", default=0)
        sub.add_argument("--quiet", "-q", action="store_true")
        if command in ("compare", "glasso-fit", "ggm-fit"):
            sub.add_argument("--data", type=Path, help="CSV of closing prices")
        if command == "ggm-fit":
            sub.add_argument("--inner", choices=INNER_SAMPLERS, default="hmc")
        if command == "table2":
            sub.add_argument("--graph", type=Path, help="edge-list file of a fixed graph")
            sub.add_argument("--trace", action="store_true", help="write graphs and traces")

    return parser


def load_config(path: Optional[Path], seed: Optional[int]) -> ExperimentConfig:
    """Read the config file, if any, and apply the seed override."""
    entries: Dict[str, str] = {}
    if path is not None:
        entries = parse_config(path.read_text(encoding="utf-8"))
    if seed is not None:
        entries["seed"] = str(seed)

    return ExperimentConfig.from_dict(entries)


async def run(args: argparse.Namespace) -> Dict[str, Path]:
    """Run the selected experiment and return the written files."""
    config = load_config(args.config, args.seed)

    async with Benchmark(config, out_dir=args.out) as bench:
        if args.command == "table1":
            return await bench.table1()
        if args.command == "table2":
            graph = read_graph(args.graph) if args.graph is not None else None
            return await bench.table2(graph, traces=args.trace)
        if args.command == "tune-hmc":
            return await bench.tune_hmc()
        if args.command == "glasso-fit":
            return await bench.glasso_fit(args.data)
        if args.command == "ggm-fit":
            return await bench.ggm_fit(args.data, inner=args.inner)

        return await bench.compare(args.data)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the ``sparseggm`` console script."""
    args = build_parser().parse_args(argv)

    level = logging.WARNING if args.quiet else logging.INFO
    if args.verbose:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        written = asyncio.run(run(args))
    except (SparseGGMError, OSError) as exception:
        _LOGGER.error("%s failed: %s", args.command, exception)
        return 1

    for name, path in written.items():
        print(f"{name}: {path}")

    return 0


if __name__ == "__main__":
    sys.exit(main())
