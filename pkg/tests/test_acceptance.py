"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

from __future__ import annotations

import math
import random
import statistics
import time
from collections import Counter
from fractions import Fraction

import pytest

from redag import experiment as ex
from redag.analysis import response_time, rm_utilization_bound
from redag.cli import main
from redag.generate import generate_workload, preset, uunifast
from redag.metrics import cdf_table, max_lateness, miss_rate, response_percentiles
from redag.model import (
    DagSpec,
    Task,
    Workload,
    assign_rm_priorities,
    hyperperiod,
    scale_deadlines,
    total_utilization,
    validate_workload,
)
from redag.sim import DEADLINE_MISS, Policy, SimConfig, read_events, simulate, verify_enforcement, write_events

RESULTS: dict[int, str] = {}

# Periods are divisors of 720 ms so every hyperperiod stays at or below 720 ms.
PERIOD_BASE = 720_000
PERIODS = [d for d in range(10_000, PERIOD_BASE + 1, 100) if PERIOD_BASE % d == 0]
N_SETS = 1000
N_CONTENDED = 20
CONTENDED_HORIZON = 2_000_000

TRACES = []  # (label, trace) pairs gathered for the metric identity check


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[n]


def random_taskset(rng: random.Random, u_range) -> object:
    n = rng.randint(3, 8)
    lo, hi = (f(n) if callable(f) else f for f in u_range)
    tasks = []
    for i, u in enumerate(uunifast(rng, rng.uniform(lo, hi), n)):
        period = rng.choice(PERIODS)
        tasks.append(Task(i + 1, 1, max(1, math.floor(u * period + 0.5)), period, period))
    return validate_workload(Workload((DagSpec(1, tuple(tasks)),)))


def uniprocessor(vw):
    return simulate(vw, SimConfig(Policy.REDAG, workers=1, record_events=False))


def test_criterion_01_rta_exactness():
    rng = random.Random(1001)
    t0 = time.perf_counter()
    checked = mismatches = 0
    for _ in range(N_SETS):
        vw = random_taskset(rng, (0.3, 0.95))
        assert hyperperiod(vw) <= 10**7
        pm = assign_rm_priorities(vw)
        trace = uniprocessor(vw)
        TRACES.append(("rta", trace))
        worst: dict[int, int] = {}
        for j in trace.completed_jobs():
            worst[j.task_id] = max(worst.get(j.task_id, 0), j.finish - j.release)
        for tid in vw.tasks:
            r = response_time(tid, vw, pm)
            if r.converged:
                checked += 1
                mismatches += worst.get(tid) != r.response
    elapsed = time.perf_counter() - t0
    record(1, mismatches == 0 and checked > 0 and elapsed < 60,
           f"{N_SETS} sets, {checked} schedulable tasks, {mismatches} mismatches, {elapsed:.1f}s")


def test_criterion_02_liu_layland_sufficiency():
    rng = random.Random(2002)
    kept = misses = 0
    while kept < N_SETS:
        vw = random_taskset(rng, (0.3, rm_utilization_bound))
        if total_utilization(vw) > rm_utilization_bound(len(vw.tasks)):
            continue  # rounding pushed it over the bound; not a member of the test population
        kept += 1
        trace = uniprocessor(vw)
        TRACES.append(("ll", trace))
        misses += sum(j.missed for j in trace.jobs) + len(trace.censored_jobs())
    record(2, misses == 0, f"{kept} sets under the bound, {misses} misses")


def test_criterion_03_bound_values():
    b1, b2, big = rm_utilization_bound(1), rm_utilization_bound(2), rm_utilization_bound(10_000)
    ok = b1 == 1.0 and abs(b2 - 0.828427124746) < 1e-9 and abs(big - math.log(2)) < 1e-4
    record(3, ok, f"bound(1)={b1!r} bound(2)={b2:.12f} |bound(1e4)-ln2|={abs(big - math.log(2)):.2e}")


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep_a")
    assert main(["sweep", "--out", str(out), "--no-plots"]) == 0
    (run_dir,) = out.iterdir()
    return run_dir, ex.read_results_csv(run_dir / "results.csv")


def test_criterion_04_enforcement_universality(default_sweep, tmp_path):
    run_dir, rows = default_sweep
    cells = {(r["workers"], r["deadline_scale"], r["cap1"], r["cap2"]) for r in rows}
    seeds = {r["seed"] for r in rows}
    errors = sum(1 for r in rows if r["error"])
    enforced = sum(1 for r in rows if r["all_enforced"] == "1")
    # spot-check through the file format: write a trace, read it back, replay it
    cfg = ex.default_sweep_config()
    w = ex.with_caps(ex.base_workload(cfg, 0), (2, 2))
    vw = validate_workload(w)
    trace = simulate(vw, SimConfig(Policy.REDAG, workers=4, horizon=cfg.horizon.value))
    write_events(trace, tmp_path / "t.jsonl")
    replay = verify_enforcement(read_events(tmp_path / "t.jsonl"), vw)
    ok = len(cells) >= 64 and len(seeds) >= 5 and errors == 0 and enforced == len(rows) and replay.all_enforced
    record(4, ok, f"{len(cells)} cells x {len(seeds)} seeds, {enforced}/{len(rows)} rows all_enforced, "
                  f"{errors} errors, replayed file trace enforced={replay.all_enforced}")


@pytest.fixture(scope="module")
def contended():
    out = []
    for seed in range(N_CONTENDED):
        vw = validate_workload(generate_workload(preset("contended", seed=seed)).workload)
        comp = ex.compare_policies(vw, 4, CONTENDED_HORIZON)
        for tr in comp.traces.values():
            TRACES.append(("contended", tr))
        out.append({r["policy"]: r for r in comp.rows})
    return out


def test_criterion_05_cross_system_ordering(contended):
    med = {p: statistics.median(s[p]["combined_mr"] for s in contended)
           for p in ("redag", "fifo-multi", "fifo-single")}
    wins = sum(s["redag"]["combined_mr"] < s["fifo-multi"]["combined_mr"] for s in contended)
    ok = med["redag"] < med["fifo-multi"] < med["fifo-single"] and wins >= math.ceil(0.9 * len(contended))
    record(5, ok, f"median MR redag={med['redag']:.4f} fifo-multi={med['fifo-multi']:.4f} "
                  f"fifo-single={med['fifo-single']:.4f}, redag<fifo-multi in {wins}/{len(contended)} seeds")


def test_criterion_06_tail_compression(contended):
    wins = sum(s["redag"]["p99_us"] < s["fifo-multi"]["p99_us"] for s in contended)
    reductions = [s["fifo-multi"]["p99_reduction"] for s in contended]
    med_red = statistics.median(reductions)
    ok = wins >= math.ceil(0.9 * len(contended)) and all(r is not None for r in reductions)
    record(6, ok, f"redag p99 < fifo-multi p99 in {wins}/{len(contended)} seeds, "
                  f"median relative p99 reduction {100 * med_red:.1f}%")


def _median_mr(rows, **match):
    vals = [float(r["combined_mr"]) for r in rows
            if r["policy"] == "redag" and all(r[k] == v for k, v in match.items())]
    return statistics.median(vals), len(vals)


def test_criterion_07_thread_scaling(default_sweep):
    _, rows = default_sweep
    m4, n4 = _median_mr(rows, workers="4")
    m8, n8 = _median_mr(rows, workers="8")
    record(7, m8 <= m4 and n4 > 0 and n8 > 0,
           f"median combined MR m=4 {m4:.4f} (n={n4}), m=8 {m8:.4f} (n={n8})")


def test_criterion_08_asymmetric_caps(default_sweep):
    _, rows = default_sweep
    deferred = sum(int(r["deferred"]) for r in rows if r["cap1"] == "2" and r["cap2"] == "2")
    m22, n22 = _median_mr(rows, cap1="2", cap2="2")
    m25, n25 = _median_mr(rows, cap1="2", cap2="5")
    record(8, m25 <= m22 and deferred > 0,
           f"median combined MR caps(2,5) {m25:.4f} (n={n25}) vs caps(2,2) {m22:.4f} (n={n22}); "
           f"cap deferrals at (2,2): {deferred}")


def _identity_failures(trace) -> list[str]:
    bad = []
    done = trace.completed_jobs()
    for j in done:
        if j.finish - j.deadline != (j.finish - j.release) - j.relative_deadline:
            bad.append(f"L != R - D for {j.task_id}#{j.instance}")
    if not done:
        return bad
    lat = [j.finish - j.deadline for j in done]
    if max_lateness(done) != max(0, max(lat)):
        bad.append("max lateness clamp")
    if miss_rate(done) != Fraction(sum(1 for x in lat if x > 0), len(done)):
        bad.append("miss-rate recount")
    if trace.events:
        miss_events = Counter(e.kind for e in trace.events)[DEADLINE_MISS]
        if miss_events != sum(1 for x in lat if x > 0):
            bad.append("DeadlineMiss event count")
    table = cdf_table(done)
    xs, fs = [x for x, _ in table], [f for _, f in table]
    if xs != sorted(set(xs)) or any(a >= b for a, b in zip(fs, fs[1:])) or fs[-1] != 1.0:
        bad.append("CDF not monotone")
    p50, p95, p99 = response_percentiles(done)
    if not p50 <= p95 <= p99:
        bad.append("percentile order")
    return bad


def test_criterion_09_metric_identities(default_sweep, contended):
    # the sweep rows hold no traces, so rebuild each cell's trace and check it agrees with its row
    _, rows = default_sweep
    cfg = ex.default_sweep_config()
    bases = {s: ex.base_workload(cfg, s) for s in cfg.seeds}
    row_mismatch = 0
    sweep_traces = 0
    for r in rows:
        caps = tuple(None if c == "unbounded" else int(c) for c in (r["cap1"], r["cap2"]))
        w = ex.with_caps(bases[int(r["seed"])], caps)
        vw = validate_workload(scale_deadlines(w, Fraction(r["deadline_scale"])))
        trace = simulate(vw, SimConfig(r["policy"], workers=int(r["workers"]), horizon=cfg.horizon.value))
        TRACES.append(("sweep", trace))
        sweep_traces += 1
        done = trace.completed_jobs()
        if f"{float(miss_rate(done)):.6f}" != r["combined_mr"] or str(response_percentiles(done)[2]) != r["p99_us"]:
            row_mismatch += 1
    failures = Counter()
    jobs = 0
    for label, trace in TRACES:
        jobs += len(trace.jobs)
        for f in _identity_failures(trace):
            failures[f"{label}: {f}"] += 1
    ok = not failures and row_mismatch == 0 and sweep_traces == len(rows)
    record(9, ok, f"{len(TRACES)} traces, {jobs} jobs, identity failures {dict(failures) or 0}, "
                  f"sweep rows disagreeing with their trace {row_mismatch}")


def test_criterion_10_determinism(default_sweep, tmp_path):
    run_dir, _ = default_sweep
    differing = []
    assert main(["sweep", "--out", str(tmp_path / "sweep"), "--no-plots", "--jobs", "2"]) == 0
    (again,) = (tmp_path / "sweep").iterdir()
    for f in sorted(run_dir.glob("*.csv")):
        if f.read_bytes() != (again / f.name).read_bytes():
            differing.append(f"sweep/{f.name}")
    wfile = tmp_path / "w.json"
    main(["gen", "--preset", "contended", "--seed", "3", "-o", str(wfile)])
    for cmd in ("run", "compare"):
        dirs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{cmd}_{tag}"
            main([cmd, str(wfile), "--horizon-us", str(CONTENDED_HORIZON), "--no-plots", "--out", str(out)])
            (d,) = out.iterdir()
            dirs.append(d)
        for f in sorted(dirs[0].glob("*.csv")):
            if f.read_bytes() != (dirs[1] / f.name).read_bytes():
                differing.append(f"{cmd}/{f.name}")
    n_files = len(list(run_dir.glob("*.csv")))
    record(10, not differing, f"{n_files} sweep CSVs (1 vs 2 processes) plus run and compare CSVs; "
                              f"differing: {differing or 'none'}")
