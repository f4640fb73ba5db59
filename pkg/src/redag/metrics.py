"""Timing metrics over completed job records.

Censored jobs (unfinished at the horizon) never enter a finish-based metric;
they are counted separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .sim import Job, SimTrace

__all__ = [
    "IncompleteJob",
    "NoJobs",
    "TaskMetrics",
    "MetricsReport",
    "job_lateness",
    "max_lateness",
    "miss_rate",
    "combined_miss_rate",
    "mean_dag_miss_rate",
    "response_percentiles",
    "cdf_table",
    "metrics_report",
    "write_metrics_csv",
    "write_cdf_csv",
]


class IncompleteJob(ValueError):
    pass


class NoJobs(ValueError):
    pass


def _completed(jobs: Iterable[Job]) -> list[Job]:
    return [j for j in jobs if j.finish is not None]


def job_lateness(job: Job) -> int:
    """finish - absolute deadline; positive means the deadline was missed."""
    if job.finish is None:
        raise IncompleteJob(f"job {job.task_id}#{job.instance} did not complete")
    return job.finish - job.deadline


def max_lateness(jobs: Iterable[Job]) -> int:
    done = _completed(jobs)
    if not done:
        raise NoJobs("max_lateness needs at least one completed job")
    return max(max(0, job_lateness(j)) for j in done)


def miss_rate(jobs: Iterable[Job]) -> Fraction:
    done = _completed(jobs)
    if not done:
        raise NoJobs("miss_rate needs at least one completed job")
    return Fraction(sum(1 for j in done if j.finish > j.deadline), len(done))


def combined_miss_rate(per_dag: Mapping[int, Iterable[Job]] | Sequence[Iterable[Job]]) -> Fraction:
    """Job-weighted: all misses over all completed jobs, across DAGs."""
    groups = per_dag.values() if isinstance(per_dag, Mapping) else per_dag
    misses = total = 0
    for jobs in groups:
        done = _completed(jobs)
        total += len(done)
        misses += sum(1 for j in done if j.finish > j.deadline)
    if total == 0:
        raise NoJobs("combined_miss_rate needs at least one completed job")
    return Fraction(misses, total)


def mean_dag_miss_rate(per_dag: Mapping[int, Iterable[Job]]) -> Fraction:
    """Unweighted mean of per-DAG miss rates (DAGs without completed jobs skipped)."""
    rates = []
    for jobs in per_dag.values():
        done = _completed(jobs)
        if done:
            rates.append(miss_rate(done))
    if not rates:
        raise NoJobs("mean_dag_miss_rate needs at least one completed job")
    return sum(rates, Fraction(0)) / len(rates)


def _nearest_rank(sorted_values: Sequence[int], q: float) -> int:
    n = len(sorted_values)
    # exact ceil(q*n) for decimal quantiles such as 0.95
    rank = math.ceil(Fraction(str(q)) * n)
    return sorted_values[min(max(rank, 1), n) - 1]


def response_percentiles(jobs: Iterable[Job], quantiles: Sequence[float] = (0.5, 0.95, 0.99)) -> list[int]:
    """Nearest-rank percentiles of response time (ceil(q*n)-th order statistic)."""
    values = sorted(j.finish - j.release for j in _completed(jobs))
    if not values:
        raise NoJobs("response_percentiles needs at least one completed job")
    for q in quantiles:
        if not 0 < q <= 1:
            raise ValueError(f"quantile must be in (0, 1], got {q}")
    return [_nearest_rank(values, q) for q in quantiles]


def cdf_table(jobs: Iterable[Job], n_points: int | None = None) -> list[tuple[int, float]]:
    """Empirical CDF of response times.

    Without ``n_points`` the table has one row per distinct response value.
    With it, rows sit at the quantiles 1/n, 2/n, ..., 1 (duplicates merged).
    """
    values = sorted(j.finish - j.release for j in _completed(jobs))
    if not values:
        raise NoJobs("cdf_table needs at least one completed job")
    n = len(values)
    # fraction of samples <= each distinct value
    upto: dict[int, int] = {}
    for i, v in enumerate(values, 1):
        upto[v] = i
    if n_points is None:
        return [(v, c / n) for v, c in upto.items()]
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    out: list[tuple[int, float]] = []
    for i in range(1, n_points + 1):
        v = values[min(math.ceil(Fraction(i, n_points) * n), n) - 1]
        row = (v, upto[v] / n)
        if not out or out[-1] != row:
            out.append(row)
    return out


@dataclass(frozen=True)
class TaskMetrics:
    task_id: int
    dag_id: int
    jobs: int
    misses: int
    censored: int
    miss_rate: float | None
    max_lateness: int | None
    mean_response: float | None
    p50: int | None
    p95: int | None
    p99: int | None


@dataclass(frozen=True)
class MetricsReport:
    tasks: tuple[TaskMetrics, ...]
    dags: tuple[TaskMetrics, ...]  # task_id field is unused (0) for DAG rows
    combined: TaskMetrics
    combined_miss_rate: Fraction | None
    mean_dag_miss_rate: Fraction | None
    censored: int
    per_dag_miss_rate: dict[int, Fraction | None] = field(default_factory=dict)


def _summary(jobs: list[Job], task_id: int, dag_id: int) -> TaskMetrics:
    done = _completed(jobs)
    censored = len(jobs) - len(done)
    if not done:
        return TaskMetrics(task_id, dag_id, 0, 0, censored, None, None, None, None, None, None)
    misses = sum(1 for j in done if j.finish > j.deadline)
    p50, p95, p99 = response_percentiles(done)
    return TaskMetrics(
        task_id,
        dag_id,
        len(done),
        misses,
        censored,
        misses / len(done),
        max_lateness(done),
        sum(j.finish - j.release for j in done) / len(done),
        p50,
        p95,
        p99,
    )


def metrics_report(trace: SimTrace | Sequence[Job]) -> MetricsReport:
    jobs = trace.jobs if isinstance(trace, SimTrace) else list(trace)
    by_task: dict[int, list[Job]] = {}
    by_dag: dict[int, list[Job]] = {}
    for j in jobs:
        by_task.setdefault(j.task_id, []).append(j)
        by_dag.setdefault(j.dag_id, []).append(j)
    tasks = tuple(_summary(by_task[t], t, by_task[t][0].dag_id) for t in sorted(by_task))
    dags = tuple(_summary(by_dag[d], 0, d) for d in sorted(by_dag))
    combined = _summary(jobs, 0, 0)
    any_done = combined.jobs > 0
    per_dag = {d: (miss_rate(by_dag[d]) if _completed(by_dag[d]) else None) for d in sorted(by_dag)}
    return MetricsReport(
        tasks=tasks,
        dags=dags,
        combined=combined,
        combined_miss_rate=combined_miss_rate(by_dag) if any_done else None,
        mean_dag_miss_rate=mean_dag_miss_rate(by_dag) if any_done else None,
        censored=combined.censored,
        per_dag_miss_rate=per_dag,
    )


METRICS_CSV_HEADER = (
    "scope,task_id,dag_id,jobs,misses,censored,miss_rate,max_lateness_us,mean_response_us,p50_us,p95_us,p99_us"
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_metrics_csv(report: MetricsReport, path) -> None:
    """Rows: one per task, one per DAG, one combined. Percentiles are nearest-rank."""
    lines = [METRICS_CSV_HEADER]

    def row(scope: str, m: TaskMetrics, task: str, dag: str) -> str:
        return ",".join(
            [scope, task, dag, str(m.jobs), str(m.misses), str(m.censored), _fmt(m.miss_rate),
             _fmt(m.max_lateness), _fmt(m.mean_response), _fmt(m.p50), _fmt(m.p95), _fmt(m.p99)]
        )

    for m in report.tasks:
        lines.append(row("task", m, str(m.task_id), str(m.dag_id)))
    for m in report.dags:
        lines.append(row("dag", m, "", str(m.dag_id)))
    lines.append(row("combined", report.combined, "", ""))
    if report.mean_dag_miss_rate is not None:
        lines.append(f"dag_mean,,,,,,{float(report.mean_dag_miss_rate):.6f},,,,,")
    Path(path).write_text("\n".join(lines) + "\n")


def write_cdf_csv(table: Sequence[tuple[int, float]], path) -> None:
    lines = ["response_us,cumulative_fraction"] + [f"{v},{f:.6f}" for v, f in table]
    Path(path).write_text("\n".join(lines) + "\n")
