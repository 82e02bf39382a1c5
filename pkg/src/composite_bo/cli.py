"""Command-line front end: task listing, experiments, calibration, plotting.

Commands are deterministic given their flags and seed, and exit nonzero
exactly when an error is reported.  Experiment defaults follow the
benchmark protocol (70 iterations, 10 initial points, 100 runs, beta
starting at 1 with 0.99 decay, 128 Monte Carlo samples).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .benchmark import ExperimentConfig, run_experiment
from .loop import STRATEGIES
from .objectives import calibrate_g_star, get_task, task_names

RUN_DEFAULTS = {
    "strategy": list(STRATEGIES),
    "runs": 100,
    "iterations": 70,
    "init_points": 10,
    "mc_samples": 128,
    "beta0": 1.0,
    "beta_decay": 0.99,
    "seed": 0,
    "parallelism": 1,
    "output_dir": "results",
    "tag": None,
    "format": "csv",
    "emit_plot": False,
}


def _domain_text(obj) -> str:
    lo, hi = obj.domain.lower, obj.domain.upper
    if obj.domain.dim == 1:
        return f"[{lo[0]:g},{hi[0]:g}]"
    if len(set(zip(lo, hi))) == 1:
        return f"[{lo[0]:g},{hi[0]:g}]^{obj.domain.dim}"
    return "x".join(f"[{a:g},{b:g}]" for a, b in zip(lo, hi))


def cmd_list_tasks(args: argparse.Namespace) -> int:
    records = []
    for name in task_names():
        obj = get_task(name)
        records.append(
            {
                "name": name,
                "d": obj.domain.dim,
                "M": obj.arity,
                "domain": _domain_text(obj),
                "g_star": obj.g_star,
            }
        )
    if args.format == "json":
        print(json.dumps(records, indent=2))
    else:
        for rec in records:
            print(
                f"{rec['name']} d={rec['d']} M={rec['M']} domain={rec['domain']} "
                f"g_star={rec['g_star']:.9g}"
            )
    return 0


def _resolve_run_config(args: argparse.Namespace) -> dict:
    """Merge defaults, an optional config file, and explicit flags (flags win)."""
    resolved = dict(RUN_DEFAULTS)
    resolved["task"] = None
    if args.config is not None:
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - set(resolved)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(loaded)
    for key in list(resolved):
        value = getattr(args, key, None)
        if value is not None and value is not False:
            resolved[key] = value
    if resolved["task"] is None:
        raise ValueError("a task is required (--task or config file)")
    if isinstance(resolved["strategy"], str):
        resolved["strategy"] = [resolved["strategy"]]
    return resolved


def cmd_run(args: argparse.Namespace) -> int:
    try:
        resolved = _resolve_run_config(args)
        config = ExperimentConfig(
            task=resolved["task"],
            strategies=tuple(resolved["strategy"]),
            runs=resolved["runs"],
            iterations=resolved["iterations"],
            init_points=resolved["init_points"],
            mc_samples=resolved["mc_samples"],
            beta0=resolved["beta0"],
            beta_decay=resolved["beta_decay"],
            base_seed=resolved["seed"],
            parallelism=resolved["parallelism"],
        )
        get_task(config.task)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    tag = resolved["tag"] or time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    out_dir = Path(resolved["output_dir"]) / config.task / tag
    header = {k: v for k, v in sorted(asdict_config(config).items())}
    print(f"running {config.task} -> {out_dir}")
    for key, value in header.items():
        print(f"  {key} = {value}")

    curves = run_experiment(config, output_dir=out_dir)
    if resolved["format"] == "json":
        payload = {
            s: {"r": list(c.r), "mean_min_regret": list(c.mean_min_regret)}
            for s, c in curves.items()
        }
        (out_dir / "results.json").write_text(json.dumps(payload, indent=2) + "\n")
    for strategy in config.strategies:
        curve = curves[strategy]
        print(
            f"{strategy}: final log10 regret {curve.r[-1]:.4f}, "
            f"total {curve.runtime_total_seconds:.1f}s"
        )
    if resolved["emit_plot"]:
        plot_results(out_dir / "results.csv", out_dir / "results.svg")
        print(f"plot written to {out_dir / 'results.svg'}")
    return 0


def asdict_config(config: ExperimentConfig) -> dict:
    from dataclasses import asdict

    d = asdict(config)
    d["strategies"] = list(d["strategies"])
    return d


def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        obj = get_task(args.task)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    recalibrated = calibrate_g_star(obj, grid_density=args.grid_density)
    record = {
        "task": args.task,
        "stored_g_star": obj.g_star,
        "recalibrated_g_star": recalibrated,
        "grid_density": args.grid_density,
    }
    print(json.dumps(record, indent=2))
    if recalibrated < obj.g_star - 1e-6 and not args.force:
        print(
            f"error: recalibration lowers g_star by {obj.g_star - recalibrated:.3g}; "
            "rerun with --force to accept",
            file=sys.stderr,
        )
        return 1
    return 0


def plot_results(results_csv: Path, out_path: Path) -> None:
    """Render one log-regret line per strategy from a results CSV.

    Output is SVG with fixed hash salt and no embedded date, so the file
    bytes are reproducible from the same CSV.
    """
    rows = []
    with open(results_csv, newline="") as handle:
        for row in csv.DictReader(handle):
            rows.append(row)
    if not rows:
        raise ValueError(f"no data rows in {results_csv}")

    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "composite-bo"
    import matplotlib.pyplot as plt

    series: dict[str, list[tuple[int, float]]] = {}
    for row in rows:
        series.setdefault(row["strategy"], []).append(
            (int(row["iteration"]), float(row["log10_regret"]))
        )
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for strategy, points in series.items():
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], label=strategy)
    ax.set_xlabel("iteration")
    ax.set_ylabel("log10 mean minimum regret")
    ax.set_title(rows[0]["task"])
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        plot_results(Path(args.results), Path(args.out))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"plot written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="composite-bo",
        description="Benchmark CLI for Bayesian optimization of composite objectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_list = sub.add_parser("list-tasks", help="list registered benchmark tasks")
    p_list.add_argument("--format", choices=("text", "json"), default="text")
    p_list.set_defaults(func=cmd_list_tasks)

    p_run = sub.add_parser("run", help="run a benchmark experiment")
    p_run.add_argument("--task", help="task name (see list-tasks)")
    p_run.add_argument(
        "--strategy",
        action="append",
        choices=STRATEGIES,
        help="strategy to run; repeatable (default: all four)",
    )
    p_run.add_argument("--runs", type=int, help="independent runs per strategy (default 100)")
    p_run.add_argument("--iterations", type=int, help="acquisition iterations (default 70)")
    p_run.add_argument("--init-points", dest="init_points", type=int,
                       help="initial random points (default 10)")
    p_run.add_argument("--mc-samples", dest="mc_samples", type=int,
                       help="Monte Carlo samples for composite EI (default 128)")
    p_run.add_argument("--beta0", type=float, help="initial UCB exploration weight (default 1)")
    p_run.add_argument("--beta-decay", dest="beta_decay", type=float,
                       help="per-iteration UCB decay factor (default 0.99)")
    p_run.add_argument("--seed", type=int, help="base seed; run k uses seed+k (default 0)")
    p_run.add_argument("--parallelism", type=int, help="worker processes across runs (default 1)")
    p_run.add_argument("--output-dir", dest="output_dir", help="results root (default results/)")
    p_run.add_argument("--tag", help="run directory name (default: UTC timestamp)")
    p_run.add_argument("--format", choices=("csv", "json"),
                       help="also emit results.json when json (default csv)")
    p_run.add_argument("--emit-plot", dest="emit_plot", action="store_true", default=None,
                       help="write results.svg next to the CSV")
    p_run.add_argument("--config", help="JSON config file; explicit flags win on conflict")
    p_run.set_defaults(func=cmd_run)

    p_cal = sub.add_parser("calibrate", help="recompute a task's reference optimum")
    p_cal.add_argument("--task", required=True)
    p_cal.add_argument("--grid-density", dest="grid_density", type=int, default=201,
                       help="grid points per axis for the oracle (default 201)")
    p_cal.add_argument("--force", action="store_true",
                       help="accept a recalibration that lowers the stored optimum")
    p_cal.set_defaults(func=cmd_calibrate)

    p_plot = sub.add_parser("plot", help="render a chart from a results CSV")
    p_plot.add_argument("--results", required=True, help="path to results.csv")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
