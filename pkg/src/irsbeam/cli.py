"""Command-line experiment driver.

Examples::

    irsbeam run --preset desk --methods proposed,nis --drops 10 --out run.csv
    irsbeam sweep --preset desk --sweep pmax_dbm=10,20,30 --out sweep.csv
    irsbeam convergence --preset paper --sweep irs_count_N=4,6 --drops 5 \
        --out traces.csv
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import SWEEP_AXES, ExperimentSpec, run_experiment
from .optimizer import METHODS, OptimOptions
from .scenario import load_config, preset_config


def _parse_sweep(text: str):
    axis, _, values = text.partition("=")
    if axis not in SWEEP_AXES or not values:
        raise argparse.ArgumentTypeError(
            f"expected <axis>=<v1,v2,...> with axis in {SWEEP_AXES}"
        )
    return axis, tuple(float(v) for v in values.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsbeam",
        description="Multi-IRS mmWave downlink beamforming experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("run", "independent Monte Carlo drops at one configuration"),
        ("sweep", "repeat runs along one swept parameter axis"),
        ("convergence", "emit per-iteration objective traces"),
    ):
        cmd = sub.add_parser(name, help=desc)
        cmd.add_argument("--config", type=Path, help="JSON configuration file")
        cmd.add_argument("--preset", choices=("paper", "desk"), default="desk")
        cmd.add_argument("--methods", default="proposed",
                         help=f"comma list from {','.join(METHODS)}")
        cmd.add_argument("--drops", type=int, default=30)
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--sweep", type=_parse_sweep,
                         help="<axis>=<v1,v2,...>, axis in " + ",".join(SWEEP_AXES))
        cmd.add_argument("--out", type=Path, default=Path("results.csv"))
        cmd.add_argument("--workers", type=int, default=0,
                         help="worker processes (0 = all available cores)")
        cmd.add_argument("--trace", action="store_true",
                         help="also write per-iteration traces")
        cmd.add_argument("--max-iter", type=int, default=50)
        cmd.add_argument("--tol", type=float, default=1e-4)
    return parser


def spec_from_args(args) -> ExperimentSpec:
    if args.config is not None:
        config = load_config(Path(args.config).read_text())
    else:
        config = preset_config(args.preset)
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    axis, values = args.sweep if args.sweep else (None, ())
    if args.command == "sweep" and axis is None:
        raise SystemExit("sweep command requires --sweep <axis>=<values>")
    workers = args.workers
    if workers == 0:
        import os

        workers = os.cpu_count() or 1
    return ExperimentSpec(
        command=args.command,
        config=config,
        out_path=args.out,
        methods=methods,
        sweep_axis=axis,
        sweep_values=values,
        drops=args.drops,
        workers=workers,
        trace=args.trace,
        opts=OptimOptions(tol=args.tol, max_iter=args.max_iter),
    ).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        summary = run_experiment(spec)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    total_infeasible = sum(cell["infeasible"] for cell in summary["cells"].values())
    print(f"wrote {spec.out_path} (config {summary['config_hash']}, "
          f"{total_infeasible} infeasible drop(s))")
    return 0


if __name__ == "__main__":
    sys.exit(main())
