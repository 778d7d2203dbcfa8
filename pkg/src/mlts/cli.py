"""Command line entry point.

Subcommands map one-to-one onto the harness drivers:

    mlts fit-maps     fit transport maps for levels 0..L, one file per level
    mlts sample       draw a batch of functional values per level
    mlts estimate     full multilevel estimate (JSON)
    mlts oracle       closed-form filter moments and coupling proxies
    mlts mlpf         one multilevel particle filter run (diagnostics CSV)
    mlts rates        coupled variance and cost decay per level
    mlts ml-vs-highest  MSE against cost, telescoped vs single level
    mlts mlpf-compare   transport vs particle-filter increment variance
    mlts plot         render a chart from a harness CSV

Exit codes: 0 success, 2 configuration problems (including unsupported
model requests), 3 map fitting that fails to converge, 4 numerical
breakdown while sampling or filtering.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ExperimentConfig, apply_paper_scale, load_config
from .errors import ConfigError, ConvergenceFailure, NumericalError, ParseError
from .harness import (
    run_estimate,
    run_fit_maps,
    run_ml_vs_highest,
    run_mlpf_compare,
    run_mlpf_filter,
    run_oracle,
    run_rates,
    run_sample,
)
from .reporting import emit_plots

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlts",
        description="Multilevel transport smoothing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, maps_flag=False):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--out", help="override the output directory")
        cmd.add_argument("--paper-scale", action="store_true",
                         help="use publication-scale sample counts")
        if maps_flag:
            cmd.add_argument("--maps",
                             help="directory with previously fitted maps")
        return cmd

    add("fit-maps", "fit and save transport maps")
    add("sample", "draw coupled functional samples", maps_flag=True)
    add("estimate", "compute the multilevel estimate", maps_flag=True)
    add("oracle", "exact filter moments (linear Gaussian only)")
    add("mlpf", "run the multilevel particle filter")
    add("rates", "variance and cost decay per level")
    add("ml-vs-highest", "MSE versus cost for both strategies")
    add("mlpf-compare", "increment variance, transport vs particle filter")

    plot = sub.add_parser("plot", help="render an SVG chart from a CSV")
    plot.add_argument("csv", help="CSV produced by a harness subcommand")
    plot.add_argument("--out", help="output SVG path (default: CSV with "
                                    ".svg suffix)")
    plot.add_argument("--skip-first", type=int, default=0,
                      help="drop the first rows from the display")
    plot.add_argument("--combined-cost", action="store_true",
                      help="shift the MSE chart's cost axis by the "
                           "map-build cost from the run's manifest")
    return parser


def _load(args) -> ExperimentConfig:
    config = (load_config(args.config) if args.config is not None
              else ExperimentConfig())
    if args.paper_scale:
        config = apply_paper_scale(config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        config = replace(config, seed=args.seed)
    return config


def _map_cost_offset(csv_path) -> float:
    """Map-build cost in Euler units, from the manifest beside the CSV.

    Wall seconds and Euler units are not directly commensurable, so the
    conversion uses the run's own sampling throughput: cost_units divided by
    the sampling-phase seconds recorded in the same manifest.
    """
    import json

    path = csv_path.parent / "manifest.json"
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--combined-cost needs a readable manifest "
                          f"next to the CSV: {exc}") from exc
    phases = manifest.get("phases", {})
    fit_seconds = phases.get("fit_maps", 0.0)
    sample_seconds = sum(seconds for name, seconds in phases.items()
                         if name != "fit_maps")
    cost_units = manifest.get("cost_units", 0)
    if fit_seconds <= 0.0:
        return 0.0
    if sample_seconds <= 0.0 or cost_units <= 0:
        raise ConfigError("manifest lacks sampling throughput to convert "
                          "map-build seconds into cost units")
    return fit_seconds * (cost_units / sample_seconds)


def _run(args) -> None:
    if args.command == "plot":
        from pathlib import Path

        out = args.out if args.out is not None else str(
            Path(args.csv).with_suffix(".svg"))
        offset = _map_cost_offset(Path(args.csv)) if args.combined_cost \
            else 0.0
        try:
            emit_plots(args.csv, out, skip_first=args.skip_first,
                       cost_offset=offset)
        except OSError as exc:
            raise ConfigError(f"cannot plot {args.csv}: {exc}") from exc
        print(out)
        return

    config = _load(args)
    maps_dir = getattr(args, "maps", None)
    if args.command == "fit-maps":
        for path in run_fit_maps(config, args.out):
            print(path)
    elif args.command == "sample":
        print(run_sample(config, args.out, maps_dir=maps_dir))
    elif args.command == "estimate":
        print(run_estimate(config, args.out, maps_dir=maps_dir))
    elif args.command == "oracle":
        print(run_oracle(config, args.out))
    elif args.command == "mlpf":
        print(run_mlpf_filter(config, args.out))
    elif args.command == "rates":
        print(run_rates(config, args.out))
    elif args.command == "ml-vs-highest":
        print(run_ml_vs_highest(config, args.out))
    elif args.command == "mlpf-compare":
        print(run_mlpf_compare(config, args.out))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _run(args)
    except (ConfigError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
