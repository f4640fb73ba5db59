"""Parameter sweeps and policy comparisons.

Every row is a pure function of (workload, policy, workers, deadline scale,
caps, horizon), so CSV output is byte-identical across runs and independent of
how many processes evaluate the cells.
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .generate import GenSpec, generate_workload, preset
from .metrics import cdf_table, metrics_report
from .model import ValidatedWorkload, Workload, hyperperiod, scale_deadlines, validate_workload
from .sim import Policy, SimConfig, SimTrace, simulate, verify_enforcement
from .workload_file import load_workload, workload_to_dict

log = logging.getLogger(__name__)

DEFAULT_WORKERS = (4, 6, 8, 10)
DEFAULT_SCALES = (0.8, 0.9, 1.1, 1.2)
DEFAULT_PAIRS = ((2, 2), (3, 2), (2, 5), (3, 3))

RESULTS_HEADER = (
    "seed,policy,workers,deadline_scale,cap1,cap2,dag1_mr,dag2_mr,combined_mr,max_lateness_us,"
    "mean_response_us,p50_us,p95_us,p99_us,all_enforced,deferred,executed,censored,error"
)


@dataclass(frozen=True)
class HorizonPolicy:
    """``kind`` is "hyperperiods" (value = how many) or "fixed" (value = microseconds)."""

    kind: str = "fixed"
    value: int = 1_000_000

    def __post_init__(self):
        if self.kind not in ("hyperperiods", "fixed"):
            raise ValueError(f"unknown horizon kind {self.kind!r}")
        if self.value < 1:
            raise ValueError("horizon value must be positive")

    def resolve(self, w, cap: int | None = None) -> int:
        if self.kind == "fixed":
            return self.value
        return self.value * hyperperiod(w, cap=cap)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


def _parse_cap(c):
    return None if c is None or c == "unbounded" else int(c)


@dataclass(frozen=True)
class SweepConfig:
    base: GenSpec | None = None
    workload_path: str | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    worker_counts: tuple[int, ...] = DEFAULT_WORKERS
    deadline_scales: tuple[float, ...] = DEFAULT_SCALES
    concurrency_pairs: tuple[tuple[int | None, int | None], ...] = DEFAULT_PAIRS
    policies: tuple[Policy, ...] = (Policy.REDAG,)
    horizon: HorizonPolicy = field(default_factory=HorizonPolicy)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "worker_counts", tuple(int(m) for m in self.worker_counts))
        object.__setattr__(self, "deadline_scales", tuple(float(d) for d in self.deadline_scales))
        object.__setattr__(
            self, "concurrency_pairs", tuple(tuple(_parse_cap(c) for c in p) for p in self.concurrency_pairs)
        )
        object.__setattr__(self, "policies", tuple(Policy.parse(p) for p in self.policies))
        if (self.base is None) == (self.workload_path is None):
            raise ValueError("give exactly one of a base generator spec or a workload file")
        for name in ("seeds", "worker_counts", "deadline_scales", "concurrency_pairs", "policies"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if any(len(p) != 2 for p in self.concurrency_pairs):
            raise ValueError("concurrency pairs must have two entries")

    @property
    def size(self) -> int:
        return (len(self.seeds) * len(self.worker_counts) * len(self.deadline_scales)
                * len(self.concurrency_pairs) * len(self.policies))

    def cells(self) -> list[tuple]:
        """(policy, workers, scale, caps, seed) in output order."""
        out = []
        for pol in sorted(self.policies, key=lambda p: p.value):
            for m in sorted(self.worker_counts):
                for d in sorted(self.deadline_scales):
                    for caps in sorted(self.concurrency_pairs, key=_cap_key):
                        for s in sorted(self.seeds):
                            out.append((pol, m, d, caps, s))
        return out

    @classmethod
    def from_dict(cls, d: dict, root: Path | None = None) -> "SweepConfig":
        d = dict(d)
        base = d.pop("base", None)
        if isinstance(base, str):
            base = preset(base)
        elif isinstance(base, dict):
            base = dict(base)
            name = base.pop("preset", None)
            base = preset(name, **base) if name else GenSpec.from_dict(base)
        wpath = d.pop("workload", None) or d.pop("workload_path", None)
        if wpath is not None and root is not None and not Path(wpath).is_absolute():
            wpath = str(root / wpath)
        horizon = d.pop("horizon", None)
        if isinstance(horizon, dict):
            horizon = HorizonPolicy(**horizon)
        elif isinstance(horizon, int):
            horizon = HorizonPolicy("fixed", horizon)
        kwargs = {k: v for k, v in d.items() if k in
                  ("seeds", "worker_counts", "deadline_scales", "concurrency_pairs", "policies")}
        unknown = set(d) - set(kwargs)
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(base=base, workload_path=wpath, horizon=horizon or HorizonPolicy(), **kwargs)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), root=path.parent)

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict() if self.base else None,
            "workload": self.workload_path,
            "seeds": list(self.seeds),
            "worker_counts": list(self.worker_counts),
            "deadline_scales": list(self.deadline_scales),
            "concurrency_pairs": [list(p) for p in self.concurrency_pairs],
            "policies": [p.value for p in self.policies],
            "horizon": self.horizon.to_dict(),
        }


def default_sweep_config(seeds: Sequence[int] = (0, 1, 2, 3, 4)) -> SweepConfig:
    return SweepConfig(base=preset("sweep_default"), seeds=tuple(seeds))


def _cap_key(caps):
    return tuple(10**9 if c is None else c for c in caps)


@dataclass(frozen=True)
class SweepResultRow:
    seed: int
    policy: str
    workers: int
    deadline_scale: float
    cap1: int | None
    cap2: int | None
    dag1_mr: float | None = None
    dag2_mr: float | None = None
    combined_mr: float | None = None
    max_lateness_us: int | None = None
    mean_response_us: float | None = None
    p50_us: int | None = None
    p95_us: int | None = None
    p99_us: int | None = None
    all_enforced: bool | None = None
    deferred: int | None = None
    executed: int | None = None
    censored: int | None = None
    error: str = ""
    runtime_s: float = field(default=0.0, compare=False)

    def sort_key(self):
        return (self.policy, self.workers, self.deadline_scale, _cap_key((self.cap1, self.cap2)), self.seed)

    def to_csv(self) -> str:
        def f(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return str(int(v))
            if isinstance(v, float):
                return f"{v:.6f}"
            return str(v)

        cap = lambda c: "unbounded" if c is None else str(c)  # noqa: E731
        err = self.error.replace(",", ";").replace("\n", " ")
        return ",".join(
            [f(self.seed), self.policy, f(self.workers), f"{self.deadline_scale:g}", cap(self.cap1),
             cap(self.cap2), f(self.dag1_mr), f(self.dag2_mr), f(self.combined_mr), f(self.max_lateness_us),
             f(self.mean_response_us), f(self.p50_us), f(self.p95_us), f(self.p99_us), f(self.all_enforced),
             f(self.deferred), f(self.executed), f(self.censored), err]
        )


def _r6(x) -> float | None:
    return None if x is None else round(float(x), 6)


def with_caps(w: Workload, caps: Sequence[int | None]) -> Workload:
    """Set max_active on the first len(caps) DAGs."""
    dags = list(w.dags)
    for i, c in enumerate(caps):
        if i < len(dags):
            dags[i] = replace(dags[i], max_active=c)
    return Workload(tuple(dags), w.deadline_scale)


def base_workload(cfg: SweepConfig, seed: int) -> Workload:
    if cfg.workload_path is not None:
        return load_workload(cfg.workload_path).workload
    return generate_workload(replace(cfg.base, seed=seed)).workload


def run_one(w: ValidatedWorkload, policy, workers: int, horizon: int, record_events: bool = True) -> SimTrace:
    return simulate(w, SimConfig(policy=policy, workers=workers, horizon=horizon, record_events=record_events))


def run_cell(w: Workload, policy: Policy, workers: int, scale: float, caps, seed: int,
             horizon: HorizonPolicy) -> SweepResultRow:
    ident = dict(seed=seed, policy=policy.value, workers=workers, deadline_scale=scale, cap1=caps[0], cap2=caps[1])
    t0 = time.perf_counter()
    try:
        cw = with_caps(w, caps)
        vw = validate_workload(scale_deadlines(cw, Fraction(repr(float(scale)))))
        trace = run_one(vw, policy, workers, horizon.resolve(vw))
        rep = metrics_report(trace)
        # enforcement is judged by replaying the trace, not by simulator state
        enf = verify_enforcement(trace.events, vw)
    except Exception as exc:  # recorded per row; the sweep carries on
        log.warning("cell %s failed: %s", ident, exc)
        return SweepResultRow(**ident, error=f"{type(exc).__name__}: {exc}")
    dag_ids = [d.dag_id for d in vw.dags]
    per_dag = rep.per_dag_miss_rate
    return SweepResultRow(
        **ident,
        dag1_mr=_r6(per_dag.get(dag_ids[0])) if dag_ids else None,
        dag2_mr=_r6(per_dag.get(dag_ids[1])) if len(dag_ids) > 1 else None,
        combined_mr=_r6(rep.combined_miss_rate),
        max_lateness_us=rep.combined.max_lateness,
        mean_response_us=_r6(rep.combined.mean_response),
        p50_us=rep.combined.p50,
        p95_us=rep.combined.p95,
        p99_us=rep.combined.p99,
        all_enforced=enf.all_enforced,
        deferred=trace.total_deferred,
        executed=trace.total_executed,
        censored=rep.censored,
        runtime_s=time.perf_counter() - t0,
    )


def _run_seed_group(args):
    cfg, seed, cells = args
    try:
        w = base_workload(cfg, seed)
    except Exception as exc:
        return [
            SweepResultRow(seed, pol.value, m, d, caps[0], caps[1], error=f"{type(exc).__name__}: {exc}")
            for pol, m, d, caps, _ in cells
        ]
    return [run_cell(w, pol, m, d, caps, seed, cfg.horizon) for pol, m, d, caps, _ in cells]


def run_sweep(cfg: SweepConfig, jobs: int = 1) -> list[SweepResultRow]:
    """Evaluate the full cartesian product; rows come back sorted."""
    groups: dict[int, list] = {}
    for cell in cfg.cells():
        groups.setdefault(cell[4], []).append(cell)
    work = [(cfg, seed, cells) for seed, cells in sorted(groups.items())]
    rows: list[SweepResultRow] = []
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_run_seed_group, work):
                rows.extend(part)
    else:
        for item in work:
            rows.extend(_run_seed_group(item))
    rows.sort(key=SweepResultRow.sort_key)
    return rows


def rows_to_csv(rows: Iterable[SweepResultRow]) -> str:
    return "\n".join([RESULTS_HEADER] + [r.to_csv() for r in rows]) + "\n"


def read_results_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# aggregate tables, all computed from the rounded row values so they can be
# recomputed from the CSV alone


def _median(xs):
    return statistics.median(xs) if xs else None


def _mean(xs):
    return sum(xs) / len(xs) if xs else None


def _ok(rows):
    return [r for r in rows if not r.error and r.combined_mr is not None]


def _group(rows, key):
    out: dict = {}
    for r in rows:
        out.setdefault(key(r), []).append(r)
    return out


def _rel(base, new):
    if base is None or new is None:
        return None
    return 0.0 if base == 0 else (base - new) / base


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def mr_vs_workers(rows: Sequence[SweepResultRow]) -> list[dict]:
    """Miss rates by worker count per policy; reduction is relative to the fewest workers."""
    out = []
    for pol, prow in sorted(_group(_ok(rows), lambda r: r.policy).items()):
        groups = _group(prow, lambda r: r.workers)
        ref = None
        for m in sorted(groups):
            g = groups[m]
            comb = [r.combined_mr for r in g]
            entry = {
                "policy": pol,
                "workers": m,
                "n": len(g),
                "dag1_mr_mean": _mean([r.dag1_mr for r in g if r.dag1_mr is not None]),
                "dag2_mr_mean": _mean([r.dag2_mr for r in g if r.dag2_mr is not None]),
                "combined_mr_mean": _mean(comb),
                "combined_mr_median": _median(comb),
            }
            if ref is None:
                ref = entry["combined_mr_mean"]
            entry["relative_reduction"] = _rel(ref, entry["combined_mr_mean"])
            out.append(entry)
    return out


def mr_vs_scale(rows: Sequence[SweepResultRow]) -> list[dict]:
    out = []
    for pol, prow in sorted(_group(_ok(rows), lambda r: r.policy).items()):
        groups = _group(prow, lambda r: r.deadline_scale)
        ref = None
        for d in sorted(groups):
            g = groups[d]
            comb = [r.combined_mr for r in g]
            entry = {
                "policy": pol,
                "deadline_scale": d,
                "n": len(g),
                "dag1_mr_mean": _mean([r.dag1_mr for r in g if r.dag1_mr is not None]),
                "dag2_mr_mean": _mean([r.dag2_mr for r in g if r.dag2_mr is not None]),
                "combined_mr_mean": _mean(comb),
                "combined_mr_median": _median(comb),
            }
            if ref is None:
                ref = entry["combined_mr_mean"]
            entry["relative_reduction"] = _rel(ref, entry["combined_mr_mean"])
            out.append(entry)
    return out


def cap_heatmap(rows: Sequence[SweepResultRow]) -> list[dict]:
    out = []
    for pol, prow in sorted(_group(_ok(rows), lambda r: r.policy).items()):
        groups = _group(prow, lambda r: (r.cap1, r.cap2))
        for caps in sorted(groups, key=_cap_key):
            comb = [r.combined_mr for r in groups[caps]]
            out.append({
                "policy": pol,
                "cap1": "unbounded" if caps[0] is None else caps[0],
                "cap2": "unbounded" if caps[1] is None else caps[1],
                "n": len(comb),
                "combined_mr_mean": _mean(comb),
                "combined_mr_median": _median(comb),
            })
    return out


def policy_summary(rows: Sequence[SweepResultRow], reference: str = Policy.REDAG.value) -> list[dict]:
    """Per-policy medians with relative reductions of the reference policy against each."""
    groups = _group(_ok(rows), lambda r: r.policy)
    med = {
        pol: {
            "combined_mr_median": _median([r.combined_mr for r in g]),
            "p99_us_median": _median([r.p99_us for r in g if r.p99_us is not None]),
            "n": len(g),
        }
        for pol, g in groups.items()
    }
    ref = med.get(reference)
    out = []
    for pol in sorted(med):
        e = {"policy": pol, **med[pol]}
        if ref is not None and pol != reference:
            e["mr_reduction_by_reference"] = _rel(e["combined_mr_median"], ref["combined_mr_median"])
            e["p99_reduction_by_reference"] = _rel(e["p99_us_median"], ref["p99_us_median"])
        else:
            e["mr_reduction_by_reference"] = None
            e["p99_reduction_by_reference"] = None
        out.append(e)
    return out


def table_to_csv(table: Sequence[dict], columns: Sequence[str]) -> str:
    lines = [",".join(columns)]
    for e in table:
        lines.append(",".join(_fmt(e.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def heatmap_matrix_csv(table: Sequence[dict], policy: str = Policy.REDAG.value) -> str:
    entries = [e for e in table if e["policy"] == policy]
    c1 = sorted({e["cap1"] for e in entries}, key=lambda c: (isinstance(c, str), c))
    c2 = sorted({e["cap2"] for e in entries}, key=lambda c: (isinstance(c, str), c))
    lookup = {(e["cap1"], e["cap2"]): e["combined_mr_mean"] for e in entries}
    lines = ["cap1\\cap2," + ",".join(str(c) for c in c2)]
    for a in c1:
        lines.append(str(a) + "," + ",".join(_fmt(lookup.get((a, b))) for b in c2))
    return "\n".join(lines) + "\n"


WORKERS_COLUMNS = ("policy", "workers", "n", "dag1_mr_mean", "dag2_mr_mean", "combined_mr_mean",
                   "combined_mr_median", "relative_reduction")
SCALE_COLUMNS = ("policy", "deadline_scale", "n", "dag1_mr_mean", "dag2_mr_mean", "combined_mr_mean",
                 "combined_mr_median", "relative_reduction")
HEATMAP_COLUMNS = ("policy", "cap1", "cap2", "n", "combined_mr_mean", "combined_mr_median")
POLICY_COLUMNS = ("policy", "n", "combined_mr_median", "p99_us_median", "mr_reduction_by_reference",
                  "p99_reduction_by_reference")


def write_sweep_outputs(rows: Sequence[SweepResultRow], out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results": (out / "results.csv", rows_to_csv(rows)),
        "mr_vs_workers": (out / "mr_vs_workers.csv", table_to_csv(mr_vs_workers(rows), WORKERS_COLUMNS)),
        "mr_vs_scale": (out / "mr_vs_scale.csv", table_to_csv(mr_vs_scale(rows), SCALE_COLUMNS)),
        "cap_heatmap": (out / "cap_heatmap.csv", table_to_csv(cap_heatmap(rows), HEATMAP_COLUMNS)),
        "cap_matrix": (out / "cap_heatmap_matrix.csv", heatmap_matrix_csv(cap_heatmap(rows))),
        "policy_summary": (out / "policy_summary.csv", table_to_csv(policy_summary(rows), POLICY_COLUMNS)),
    }
    for path, text in files.values():
        path.write_text(text)
    return {k: p for k, (p, _) in files.items()}


# policy comparison on one workload

COMPARE_HEADER = ("policy", "workers", "jobs", "censored", "combined_mr", "max_lateness_us", "mean_response_us",
                  "p50_us", "p95_us", "p99_us", "mr_improvement", "p99_reduction")


@dataclass
class Comparison:
    rows: list[dict]
    traces: dict[str, SimTrace]

    def to_csv(self) -> str:
        return table_to_csv(self.rows, COMPARE_HEADER)


def compare_policies(w: ValidatedWorkload, workers: int, horizon: int,
                     policies: Sequence[Policy] = (Policy.REDAG, Policy.FIFO_MULTI, Policy.FIFO_SINGLE)) -> Comparison:
    """Run each policy on the same workload; improvements are (base - redag) / base."""
    traces = {}
    rows = []
    for pol in policies:
        pol = Policy.parse(pol)
        tr = run_one(w, pol, workers, horizon, record_events=False)
        traces[pol.value] = tr
        rep = metrics_report(tr)
        rows.append({
            "policy": pol.value,
            "workers": tr.workers,
            "jobs": rep.combined.jobs,
            "censored": rep.censored,
            "combined_mr": _r6(rep.combined_miss_rate),
            "max_lateness_us": rep.combined.max_lateness,
            "mean_response_us": _r6(rep.combined.mean_response),
            "p50_us": rep.combined.p50,
            "p95_us": rep.combined.p95,
            "p99_us": rep.combined.p99,
        })
    ref = next((r for r in rows if r["policy"] == Policy.REDAG.value), None)
    for r in rows:
        if ref is None or r is ref:
            r["mr_improvement"] = r["p99_reduction"] = None
        else:
            r["mr_improvement"] = _r6(_rel(r["combined_mr"], ref["combined_mr"]))
            r["p99_reduction"] = _r6(_rel(r["p99_us"], ref["p99_us"]))
    return Comparison(rows, traces)


def cdf_rows(traces: dict[str, SimTrace], n_points: int | None = 200) -> dict[str, list[tuple[int, float]]]:
    out = {}
    for name, tr in traces.items():
        done = tr.completed_jobs()
        out[name] = cdf_table(done, n_points) if done else []
    return out


def run_id(*parts) -> str:
    """Content hash naming a run directory."""
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def workload_digest(w: Workload) -> dict:
    return workload_to_dict(w)
