"""Command-line entry point: gen, run, sweep, compare, analyze, validate.

Exit codes: 0 success, 1 input error, 2 unschedulable (analyze only),
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment as ex
from .analysis import schedulability_report
from .generate import GenSpec, InfeasibleSpec, generate_workload, preset
from .metrics import cdf_table, metrics_report, write_cdf_csv, write_metrics_csv
from .model import WorkloadError, hyperperiod, total_utilization
from .sim import (
    HorizonOverflow,
    InternalInvariantViolation,
    MalformedTrace,
    Policy,
    SimConfig,
    read_events,
    simulate,
    verify_enforcement,
    write_events,
    write_jobs_csv,
)
from .workload_file import load_workload, save_workload, workload_to_dict

log = logging.getLogger("redag")

EXIT_OK, EXIT_INPUT, EXIT_UNSCHEDULABLE, EXIT_INTERNAL = 0, 1, 2, 3
HYPERPERIOD_CAP = 10**9


def _caps(text: str | None):
    if text is None:
        return None
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        out.append(None if part in ("none", "null", "unbounded", "") else int(part))
    return tuple(out)


def _horizon(args, w) -> int:
    if args.horizon_us is not None:
        return args.horizon_us
    return args.hyperperiods * hyperperiod(w, cap=HYPERPERIOD_CAP)


def _fmt_mr(x) -> str:
    return "n/a" if x is None else f"{float(x):.4f}"


def cmd_gen(args) -> int:
    if args.preset:
        spec = preset(args.preset, seed=args.seed)
    else:
        spec = GenSpec(seed=args.seed)
    overrides = {
        "n_dags": args.dags,
        "tasks_per_dag": args.tasks_per_dag,
        "target_utilization": args.utilization,
        "period_mode": args.period_mode,
        "edge_probability": args.edge_prob,
        "deadline_scale": args.deadline_scale,
        "max_task_utilization": args.max_task_utilization,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.period_min_us is not None or args.period_max_us is not None:
        lo, hi = spec.period_range
        overrides["period_range"] = (args.period_min_us or lo, args.period_max_us or hi)
    caps = _caps(args.max_active)
    n_dags = overrides.get("n_dags", spec.n_dags)
    if caps is not None:
        overrides["max_active"] = caps
    elif spec.max_active and len(spec.max_active) != n_dags:
        overrides["max_active"] = ()
    spec = replace(spec, **overrides)
    gw = generate_workload(spec)
    u = total_utilization(gw.workload)
    workers = args.workers or 1
    if u > workers:
        print(f"warning: utilization {float(u):.4f} exceeds the capacity of {workers} worker(s)", file=sys.stderr)
    save_workload(gw.workload, args.output, provenance=gw.provenance)
    try:
        hp = str(hyperperiod(gw.workload))
    except WorkloadError:
        hp = "n/a"
    print(f"wrote {args.output}: U={float(u):.6f} hyperperiod_us={hp} tasks={len(gw.workload.tasks)}")
    return EXIT_OK


def _run_dir(parent, kind: str, *parts) -> Path:
    d = Path(parent) / f"{kind}-{ex.run_id(kind, *parts)}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_run(args) -> int:
    vw = load_workload(args.workload)
    horizon = _horizon(args, vw)
    cfg = SimConfig(
        policy=Policy.parse(args.policy),
        workers=args.workers,
        horizon=horizon,
        context_switch_cost=args.context_switch_us,
        successor_release=args.successor_release,
        record_events=True,
    )
    trace = simulate(vw, cfg)
    out = _run_dir(args.out, "run", workload_to_dict(vw.workload), cfg.policy.value, cfg.workers, horizon,
                   cfg.context_switch_cost, cfg.successor_release)
    report = metrics_report(trace)
    write_jobs_csv(trace, out / "jobs.csv")
    write_metrics_csv(report, out / "metrics.csv")
    done = trace.completed_jobs()
    if done:
        table = cdf_table(done)
        write_cdf_csv(table, out / "cdf.csv")
        if not args.no_plots:
            from .plots import plot_response_cdf

            plot_response_cdf({cfg.policy.value: cdf_table(done, 200)}, out / "response_cdf.png")
    if args.trace:
        write_events(trace, out / "trace.jsonl")
    c = report.combined
    print(
        f"policy={cfg.policy.value} workers={trace.workers} horizon_us={horizon} jobs={c.jobs} "
        f"censored={report.censored} MR={_fmt_mr(report.combined_miss_rate)} "
        f"L_max_us={c.max_lateness if c.max_lateness is not None else 'n/a'} "
        f"p99_us={c.p99 if c.p99 is not None else 'n/a'} out={out}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = ex.SweepConfig.load(args.config) if args.config else ex.default_sweep_config()
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",")))
    print(f"sweep: {cfg.size} rows ({len(cfg.policies)} policies x {len(cfg.worker_counts)} worker counts x "
          f"{len(cfg.deadline_scales)} scales x {len(cfg.concurrency_pairs)} cap pairs x {len(cfg.seeds)} seeds)")
    rows = ex.run_sweep(cfg, jobs=args.jobs)
    out = _run_dir(args.out, "sweep", cfg.to_dict())
    files = ex.write_sweep_outputs(rows, out)
    if not args.no_plots:
        from . import plots

        plots.plot_mr_vs_workers(ex.mr_vs_workers(rows), out / "mr_vs_workers.png")
        plots.plot_mr_vs_scale(ex.mr_vs_scale(rows), out / "mr_vs_scale.png")
        heat = ex.cap_heatmap(rows)
        if heat:
            plots.plot_cap_heatmap(heat, out / "cap_heatmap.png", policy=heat[0]["policy"])
    errors = sum(1 for r in rows if r.error)
    enforced = sum(1 for r in rows if r.all_enforced)
    print(f"rows={len(rows)} errors={errors} all_enforced={enforced}/{len(rows)} results={files['results']}")
    return EXIT_OK


def cmd_compare(args) -> int:
    vw = load_workload(args.workload)
    horizon = _horizon(args, vw)
    comp = ex.compare_policies(vw, args.workers, horizon)
    out = _run_dir(args.out, "compare", workload_to_dict(vw.workload), args.workers, horizon)
    (out / "compare.csv").write_text(comp.to_csv())
    cdfs = ex.cdf_rows(comp.traces)
    for pol, table in cdfs.items():
        write_cdf_csv(table, out / f"cdf_{pol}.csv")
    if not args.no_plots:
        from . import plots

        plots.plot_response_cdf(cdfs, out / "response_cdf.png")
        plots.plot_policy_comparison(comp.rows, out / "policy_comparison.png")
    sys.stdout.write(comp.to_csv())
    print(f"out={out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    vw = load_workload(args.workload)
    rep = schedulability_report(vw)
    doc = {
        "utilization": float(rep.utilization),
        "utilization_exact": str(rep.utilization),
        "rm_bound": rep.rm_bound,
        "bound_verdict": rep.bound_verdict,
        "overall": rep.overall,
        "tasks": [
            {
                "task_id": r.task_id,
                "verdict": r.verdict,
                "response_us": r.response,
                "iterations": r.iterations,
                "deadline_us": vw.tasks[r.task_id].deadline,
                "hp_set": list(r.hp_set),
            }
            for r in rep.results
        ],
    }
    if args.output:
        Path(args.output).write_text(json.dumps(doc, indent=2) + "\n")
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(f"U={float(rep.utilization):.6f} rm_bound={rep.rm_bound:.6f} {rep.bound_verdict}")
        print("task_id,verdict,response_us,deadline_us,iterations")
        for t in doc["tasks"]:
            print(f"{t['task_id']},{t['verdict']},{t['response_us']},{t['deadline_us']},{t['iterations']}")
        print(rep.overall)
    return EXIT_OK if rep.schedulable else EXIT_UNSCHEDULABLE


def cmd_validate(args) -> int:
    vw = load_workload(args.workload)
    events = read_events(args.trace)
    res = verify_enforcement(events, vw)
    print(f"all_enforced = {int(res.all_enforced)}")
    for t, dag, count in res.violations:
        cap = vw.max_active(dag)
        print(f"violation t={t}us dag={dag} running={count} max_active={cap}")
    return EXIT_OK if res.all_enforced else EXIT_INPUT


def _add_horizon(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--horizon-us", type=int, help="simulation horizon in microseconds")
    g.add_argument("--hyperperiods", type=int, default=1, help="horizon as a number of hyperperiods (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="redag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic workload file")
    p.add_argument("--preset", choices=["single_baseline", "multi_baseline", "contended", "sweep_default"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--utilization", type=float)
    p.add_argument("--workers", type=int, help="worker count used for the overload warning")
    p.add_argument("--dags", type=int)
    p.add_argument("--tasks-per-dag", type=int)
    p.add_argument("--period-mode", choices=["harmonic", "non-harmonic"])
    p.add_argument("--period-min-us", type=int)
    p.add_argument("--period-max-us", type=int)
    p.add_argument("--edge-prob", type=float)
    p.add_argument("--max-active", help="comma list, one per DAG; 'none' for unbounded")
    p.add_argument("--deadline-scale", type=float)
    p.add_argument("--max-task-utilization", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="simulate one workload under one policy")
    p.add_argument("workload")
    p.add_argument("--policy", default="redag", help="redag | fifo-single | fifo-multi")
    p.add_argument("--workers", type=int, default=4)
    _add_horizon(p)
    p.add_argument("--context-switch-us", type=int, default=0)
    p.add_argument("--successor-release", choices=["periodic", "event"], default="periodic")
    p.add_argument("--trace", action="store_true", help="also write the event trace (trace.jsonl)")
    p.add_argument("--out", default="runs")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("config", nargs="?", help="sweep config JSON (default: built-in default sweep)")
    p.add_argument("--seeds", help="comma-separated seed override")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", default="runs")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run all three policies on one workload")
    p.add_argument("workload")
    p.add_argument("--workers", type=int, default=4)
    _add_horizon(p)
    p.add_argument("--out", default="runs")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="response-time analysis of a workload")
    p.add_argument("workload")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("-o", "--output", help="also write the JSON report here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate", help="check per-DAG caps by replaying a trace")
    p.add_argument("trace")
    p.add_argument("workload")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InternalInvariantViolation as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (WorkloadError, MalformedTrace, HorizonOverflow, InfeasibleSpec, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
