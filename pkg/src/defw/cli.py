"""Command-line interface: run experiments, fit convergence rates, benchmark
oracles against projections, and materialize synthetic instances.

Subcommands
-----------
run           execute an experiment config (TOML/JSON) and write metrics CSV
rates         fit a log-log slope to a metrics CSV series; writes JSON + PNG
oracle-bench  time LO oracles against projections over problem sizes
datagen       write a configured instance (and topology) to disk
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from .constraints import lo_l1, lo_trace, project_l1, project_trace
from .harness import (
    EXPERIMENT_KINDS,
    PRESETS,
    config_from_dict,
    fit_rate,
    load_config,
    run_experiment,
    materialize_instance,
)
from .metrics import read_metrics_csv


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="defw",
        description="Projection-free decentralized optimization testbed.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment and write metrics CSV")
    p_run.add_argument("--config", help="TOML or JSON experiment config")
    p_run.add_argument("--preset", choices=sorted(PRESETS),
                       help="built-in parameter set used when no config is given")
    p_run.add_argument("--kind", choices=EXPERIMENT_KINDS, default="lasso",
                       help="experiment kind for --preset runs")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--out", help="metrics CSV path")
    p_run.add_argument("--threads", type=int, default=1,
                       help="accepted for compatibility; results are "
                            "thread-count independent by construction")
    p_run.add_argument("--timing", action="store_true",
                       help="record real wall times (CSV no longer byte-reproducible)")

    p_rates = sub.add_parser("rates", help="fit a log-log rate to a CSV series")
    p_rates.add_argument("--input", required=True, help="metrics CSV from 'run'")
    p_rates.add_argument("--series", required=True,
                         help="column name, or 'suboptimality' (objective - fstar)")
    p_rates.add_argument("--window", required=True, help="fit window 'lo:hi'")
    p_rates.add_argument("--fstar", type=float,
                         help="optimal value used by --series suboptimality")
    p_rates.add_argument("--out", help="output JSON path (default <input>.rate.json)")
    p_rates.add_argument("--no-fig", action="store_true", help="skip the PNG figure")

    p_bench = sub.add_parser("oracle-bench",
                             help="time LO oracles vs projections over sizes")
    p_bench.add_argument("--l1-sizes", default="1000,5000,20000",
                         help="comma-separated vector dimensions")
    p_bench.add_argument("--trace-sizes", default="50,100,200",
                         help="comma-separated square matrix sizes")
    p_bench.add_argument("--reps", type=int, default=5, help="median over this many calls")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="oracle_bench",
                         help="output prefix for CSV + PNG")

    p_gen = sub.add_parser("datagen", help="materialize a synthetic instance")
    p_gen.add_argument("--config", help="TOML or JSON experiment config")
    p_gen.add_argument("--preset", choices=sorted(PRESETS))
    p_gen.add_argument("--kind", choices=EXPERIMENT_KINDS, default="lasso")
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--out", default="instance", help="output path prefix")
    return parser


def _resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = config_from_dict(dict(PRESETS[args.preset][args.kind]))
    else:
        raise ValueError("provide --config FILE or --preset {desk,paper}")
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_run(args):
    cfg = _resolve_config(args)
    if args.out:
        cfg.out = args.out
    if not cfg.out:
        cfg.out = f"{cfg.kind}_run.csv"
    if args.timing:
        cfg.timing = True
    metrics = run_experiment(cfg)
    if metrics.n_rows:
        print(
            f"{cfg.kind}: {metrics.n_rows} records -> {cfg.out} "
            f"(final objective {metrics.columns['objective'][-1]:.6g}, "
            f"gap {metrics.columns['gap'][-1]:.6g})"
        )
    else:
        print(f"{cfg.kind}: run complete (no records) -> {cfg.out}")
    return 0


def _cmd_rates(args):
    data = read_metrics_csv(args.input)
    lo, _, hi = args.window.partition(":")
    if not lo or not hi:
        raise ValueError("window must be 'lo:hi'")
    window = (float(lo), float(hi))
    if args.series == "suboptimality":
        if args.fstar is None:
            raise ValueError("--series suboptimality requires --fstar")
        values = data["objective"] - args.fstar
    elif args.series in data:
        values = data[args.series]
    else:
        raise ValueError(
            f"series {args.series!r} not in {args.input} (columns: {sorted(data)})"
        )
    fit = fit_rate(data["iter"], values, window)
    out = args.out or f"{args.input}.rate.json"
    payload = {
        "input": args.input,
        "series": args.series,
        "window": [fit.t_lo, fit.t_hi],
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
        "n_excluded": fit.n_excluded,
        "figure": None,
    }
    if not args.no_fig:
        from .figures import render_rate_fit

        fig_path = out.rsplit(".", 1)[0] + ".png"
        payload["figure"] = render_rate_fit(data["iter"], values, fit,
                                            args.series, fig_path)
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"{args.series}: slope {fit.slope:.4f} (R^2 {fit.r_squared:.4f}) -> {out}")
    return 0


def _median_seconds(fn, reps):
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def _cmd_oracle_bench(args):
    rng = np.random.default_rng(args.seed)
    rows = []
    for d in (int(s) for s in args.l1_sizes.split(",") if s):
        vec = rng.standard_normal(d)
        scaled = 3.0 * vec  # outside the unit ball so the projection works
        rows.append({"family": "l1", "size": d, "op": "lo",
                     "seconds": _median_seconds(lambda: lo_l1(vec, 1.0), args.reps)})
        rows.append({"family": "l1", "size": d, "op": "project",
                     "seconds": _median_seconds(lambda: project_l1(scaled, 1.0), args.reps)})
    for m in (int(s) for s in args.trace_sizes.split(",") if s):
        mat = rng.standard_normal((m, m))
        rows.append({"family": "trace", "size": m * m, "op": "lo",
                     "seconds": _median_seconds(lambda: lo_trace(mat, 1.0), args.reps)})
        rows.append({"family": "trace", "size": m * m, "op": "project",
                     "seconds": _median_seconds(lambda: project_trace(mat, 1.0), args.reps)})
    csv_path = f"{args.out}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["family", "size", "op", "seconds"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    from .figures import render_oracle_bench

    fig_path = render_oracle_bench(rows, f"{args.out}.png")
    print(f"oracle-bench: {len(rows)} timings -> {csv_path}, {fig_path}")
    return 0


def _cmd_datagen(args):
    cfg = _resolve_config(args)
    paths = materialize_instance(cfg, args.out)
    print("datagen: wrote " + ", ".join(paths))
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "rates": _cmd_rates,
    "oracle-bench": _cmd_oracle_bench,
    "datagen": _cmd_datagen,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
