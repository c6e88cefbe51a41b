"""Monte Carlo experiment drivers: single runs, sweeps, convergence traces.

Results land in a long-format CSV with a fixed schema plus a JSON summary
keyed by the configuration hash. Drops are independent work items; a
worker pool evaluates them in parallel and a single writer emits rows in
deterministic (method, drop) order, so fixed seeds give byte-identical
files. Drops aborted as infeasible stay in the CSV as data but are
excluded from aggregate statistics.
"""
from __future__ import annotations

import dataclasses
import json
import math
import multiprocessing
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import generate_channels
from .optimizer import METHODS, OptimOptions, OptimResult, run_baseline
from .scenario import ScenarioConfig, drop_streams, place_users

CSV_HEADER = ("method,drop,axis,axis_value,iterations,status,"
              "sum_rate_relaxed,sum_rate_projected,min_user_rate,seed")
TRACE_HEADER = "method,drop,axis,axis_value,iter,sum_rate,f1a"

SWEEP_AXES = ("pmax_dbm", "elements_L", "irs_count_N")


@dataclass
class ExperimentSpec:
    command: str
    config: ScenarioConfig
    out_path: Path
    methods: tuple = ("proposed",)
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    drops: int = 30
    workers: int = 1
    trace: bool = False
    opts: OptimOptions = field(default_factory=OptimOptions)

    def validate(self) -> "ExperimentSpec":
        if self.command not in ("run", "sweep", "convergence"):
            raise ValueError(f"unknown command {self.command!r}")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}")
        if self.command == "sweep":
            if self.sweep_axis not in SWEEP_AXES:
                raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise ValueError("sweep requires a nonempty value list")
        return self


def factor_grid(total: int) -> tuple[int, int]:
    """Split an element count into the most square (rows, cols) grid."""
    if total < 1:
        raise ValueError("element count must be >= 1")
    rows = int(math.isqrt(total))
    while total % rows:
        rows -= 1
    return rows, total // rows


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Override one swept field of the base configuration."""
    if axis == "pmax_dbm":
        return replace(config, P_max_dbm=float(value))
    if axis == "elements_L":
        l_v, l_h = factor_grid(int(value))
        return replace(config, L_v=l_v, L_h=l_h)
    if axis == "irs_count_N":
        n = int(value)
        if n > len(config.irs_positions):
            raise ValueError(
                f"cannot sweep to N={n}: base config lists {len(config.irs_positions)} sites"
            )
        return replace(config, N=n, irs_positions=config.irs_positions[:n])
    raise ValueError(f"unknown sweep axis {axis!r}")


# -- single drop ------------------------------------------------------------


def run_single_drop(config: ScenarioConfig, method: str, drop: int,
                    opts: OptimOptions) -> OptimResult:
    """Realize one drop's placement and channels, then run one method."""
    streams = drop_streams(config.seed, drop)
    layout = place_users(config, streams.placement)
    channels = generate_channels(config, layout, streams.path_gains, streams.angles, drop)
    return run_baseline(method, config, channels, opts, streams.phases)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _result_row(method, drop, axis, axis_value, config, result: OptimResult) -> str:
    min_rate = float(np.min(result.per_user_rates)) if len(result.per_user_rates) else 0.0
    fields = [
        method, drop, axis, float(axis_value), result.iterations, result.status,
        float(result.sum_rate_relaxed), float(result.sum_rate_projected),
        min_rate, config.seed,
    ]
    return ",".join(_fmt(f) for f in fields)


def _trace_rows(method, drop, axis, axis_value, result: OptimResult) -> list[str]:
    rows = []
    for it, (rate, f1a) in enumerate(zip(result.trace_sum_rate, result.trace_f1a), start=1):
        rows.append(",".join(
            _fmt(f) for f in [method, drop, axis, float(axis_value), it, float(rate), float(f1a)]
        ))
    return rows


def _cell_worker(cell):
    config, method, drop, axis, axis_value, opts = cell
    result = run_single_drop(config, method, drop, opts)
    return (
        _result_row(method, drop, axis, axis_value, config, result),
        _trace_rows(method, drop, axis, axis_value, result),
        (method, axis, float(axis_value), result.status,
         float(result.sum_rate_relaxed), float(result.sum_rate_projected)),
    )


def _pool_init():
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


def _evaluate_cells(cells, workers: int):
    if workers > 1 and len(cells) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_pool_init) as pool:
            return pool.map(_cell_worker, cells, chunksize=1)
    return [_cell_worker(cell) for cell in cells]


# -- aggregation ------------------------------------------------------------


def summarize(samples: dict) -> dict:
    """Per (method, axis value) statistics over non-aborted drops."""
    out = {}
    for key, entries in sorted(samples.items()):
        kept = [e for e in entries if e["status"] != "infeasible_drop"]
        projected = np.array([e["projected"] for e in kept])
        relaxed = np.array([e["relaxed"] for e in kept])
        n = len(projected)
        mean = float(projected.mean()) if n else math.nan
        std = float(projected.std(ddof=1)) if n > 1 else 0.0
        half = 1.96 * std / math.sqrt(n) if n else math.nan
        out["|".join(map(str, key))] = {
            "drops": len(entries),
            "used": n,
            "infeasible": len(entries) - n,
            "mean_sum_rate_projected": mean,
            "std_sum_rate_projected": std,
            "ci95_low": mean - half if n else math.nan,
            "ci95_high": mean + half if n else math.nan,
            "mean_sum_rate_relaxed": float(relaxed.mean()) if n else math.nan,
        }
    return out


def _write_lines(path: Path, header: str, rows: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header, *rows]) + "\n")


def run_experiment(spec: ExperimentSpec) -> dict:
    """Execute the experiment, write outputs, and return the summary."""
    spec.validate()
    if spec.command == "sweep":
        axis_pairs = [(spec.sweep_axis, v) for v in spec.sweep_values]
    elif spec.sweep_axis:
        axis_pairs = [(spec.sweep_axis, v) for v in spec.sweep_values]
    else:
        axis_pairs = [("none", 0.0)]

    cells = []
    for axis, value in axis_pairs:
        config = spec.config if axis == "none" else apply_axis(spec.config, axis, value)
        for method in spec.methods:
            for drop in range(spec.drops):
                cells.append((config, method, drop, axis, value, spec.opts))

    outputs = _evaluate_cells(cells, spec.workers)

    rows = [out[0] for out in outputs]
    trace_rows = [line for out in outputs for line in out[1]]
    samples: dict = {}
    for _, _, (method, axis, value, status, relaxed, projected) in outputs:
        samples.setdefault((method, axis, value), []).append(
            {"status": status, "relaxed": relaxed, "projected": projected}
        )

    out_path = Path(spec.out_path)
    want_trace = spec.trace or spec.command == "convergence"
    if spec.command == "convergence":
        _write_lines(out_path, TRACE_HEADER, trace_rows)
    else:
        _write_lines(out_path, CSV_HEADER, rows)
        if want_trace:
            _write_lines(out_path.with_suffix(".trace.csv"), TRACE_HEADER, trace_rows)

    summary = {
        "command": spec.command,
        "config_hash": spec.config.hash(),
        "methods": list(spec.methods),
        "drops": spec.drops,
        "cells": summarize(samples),
    }
    summary_path = out_path.with_suffix(".summary.json")
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary
