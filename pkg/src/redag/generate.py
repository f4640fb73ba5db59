"""Seeded synthetic multi-DAG workloads.

Per-task utilizations come from UUniFast (with discard above a per-task cap),
periods from a doubling chain (harmonic) or a log-uniform draw rounded to
100 us (non-harmonic), and each DAG is a layered random graph.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .model import DagSpec, Task, Workload, WorkloadError, total_utilization, validate_workload

__all__ = [
    "GENERATOR_VERSION",
    "GenSpec",
    "GeneratedWorkload",
    "InfeasibleSpec",
    "uunifast",
    "uunifast_discard",
    "harmonic_chain",
    "generate_workload",
    "regime_presets",
    "preset",
]

GENERATOR_VERSION = "redag-gen/1"
NON_HARMONIC_GRANULARITY = 100


class InfeasibleSpec(WorkloadError):
    def __init__(self, message: str, task_id: int | None = None):
        self.task_id = task_id
        super().__init__(message)


@dataclass(frozen=True)
class GenSpec:
    seed: int = 0
    n_dags: int = 2
    tasks_per_dag: int = 6
    target_utilization: float = 0.8
    period_mode: str = "non-harmonic"
    period_range: tuple[int, int] = (10_000, 100_000)
    edge_probability: float = 0.5
    max_active: tuple[int | None, ...] = ()
    deadline_scale: float = 1.0
    max_task_utilization: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "period_range", tuple(self.period_range))
        object.__setattr__(self, "max_active", tuple(self.max_active))
        if self.n_dags < 1 or self.tasks_per_dag < 1:
            raise ValueError("n_dags and tasks_per_dag must be >= 1")
        if self.target_utilization <= 0:
            raise ValueError("target_utilization must be positive")
        if self.period_mode not in ("harmonic", "non-harmonic"):
            raise ValueError("period_mode must be 'harmonic' or 'non-harmonic'")
        lo, hi = self.period_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad period_range {self.period_range}")
        if not 0 <= self.edge_probability <= 1:
            raise ValueError("edge_probability must lie in [0, 1]")
        if self.max_active and len(self.max_active) != self.n_dags:
            raise ValueError("max_active needs one entry per DAG")
        if any(c is not None and c < 1 for c in self.max_active):
            raise ValueError("max_active entries must be >= 1 or None")
        if self.deadline_scale <= 0:
            raise ValueError("deadline_scale must be positive")
        if not 0 < self.max_task_utilization <= 1:
            raise ValueError("max_task_utilization must lie in (0, 1]")
        n = self.n_dags * self.tasks_per_dag
        if self.target_utilization >= n * self.max_task_utilization:
            raise ValueError("target utilization unreachable with max_task_utilization")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["period_range"] = list(self.period_range)
        d["max_active"] = list(self.max_active)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        return cls(**d)


@dataclass(frozen=True)
class GeneratedWorkload:
    workload: Workload
    spec: GenSpec
    version: str = GENERATOR_VERSION

    @property
    def provenance(self) -> dict:
        return {"generator": self.version, "spec": self.spec.to_dict()}

    @property
    def utilization(self) -> Fraction:
        return total_utilization(self.workload)


def uunifast(rng: random.Random, total: float, n: int) -> list[float]:
    """Unbiased split of ``total`` into ``n`` non-negative parts."""
    utils = []
    remaining = total
    for i in range(1, n):
        nxt = remaining * rng.random() ** (1.0 / (n - i))
        utils.append(remaining - nxt)
        remaining = nxt
    utils.append(remaining)
    return utils


def uunifast_discard(rng: random.Random, total: float, n: int, cap: float = 1.0, max_tries: int = 100_000) -> list[float]:
    for _ in range(max_tries):
        utils = uunifast(rng, total, n)
        if max(utils) <= cap:
            return utils
    raise InfeasibleSpec(f"no UUniFast split of U={total} over {n} tasks kept every share <= {cap}")


def harmonic_chain(lo: int, hi: int) -> list[int]:
    chain = []
    p = lo
    while p <= hi:
        chain.append(p)
        p *= 2
    return chain


def _draw_period(rng: random.Random, spec: GenSpec) -> int:
    lo, hi = spec.period_range
    if spec.period_mode == "harmonic":
        return rng.choice(harmonic_chain(lo, hi))
    g = NON_HARMONIC_GRANULARITY
    lo_g = max(g, math.ceil(lo / g) * g)
    hi_g = max(lo_g, (hi // g) * g)
    raw = math.exp(rng.uniform(math.log(lo_g), math.log(hi_g)))
    return min(hi_g, max(lo_g, int(round(raw / g)) * g))


def _layers(n: int) -> list[int]:
    n_layers = math.ceil(math.sqrt(n))
    return [j * n_layers // n for j in range(n)]


def generate_workload(spec: GenSpec) -> GeneratedWorkload:
    """Build a workload from ``spec``. Same spec (seed included) gives the same workload.

    Periods inside a DAG are sorted so they never decrease along an edge;
    sources run at the highest rate.
    """
    rng = random.Random(spec.seed)
    n_total = spec.n_dags * spec.tasks_per_dag
    utils = uunifast_discard(rng, spec.target_utilization, n_total, spec.max_task_utilization)
    delta = Fraction(repr(float(spec.deadline_scale)))
    dags = []
    next_id = 1
    for k in range(spec.n_dags):
        dag_id = k + 1
        n = spec.tasks_per_dag
        periods = sorted(_draw_period(rng, spec) for _ in range(n))
        layer = _layers(n)
        ids = list(range(next_id, next_id + n))
        next_id += n
        tasks = []
        for j in range(n):
            u = utils[k * n + j]
            period = periods[j]
            wcet = max(1, math.floor(u * period + 0.5))
            deadline = math.floor(delta * period + Fraction(1, 2))
            if wcet > period or wcet > deadline:
                raise InfeasibleSpec(
                    f"task {ids[j]}: rounded WCET {wcet} exceeds deadline {deadline} / period {period}", ids[j]
                )
            tasks.append(Task(ids[j], dag_id, wcet, period, deadline, 0, f"dag{dag_id}_n{j}"))
        edges = []
        for a in range(n):
            for b in range(a + 1, n):
                if layer[b] == layer[a] + 1 and rng.random() < spec.edge_probability:
                    edges.append((ids[a], ids[b]))
        cap = spec.max_active[k] if spec.max_active else None
        dags.append(DagSpec(dag_id, tuple(tasks), tuple(edges), cap))
    w = Workload(tuple(dags), deadline_scale=delta)
    validate_workload(w)
    return GeneratedWorkload(w, spec)


_PRESETS = {
    "single_baseline": dict(
        n_dags=2,
        tasks_per_dag=6,
        target_utilization=0.6,
        period_mode="harmonic",
        period_range=(10_000, 160_000),
        edge_probability=0.5,
        max_active=(2, 2),
        max_task_utilization=0.5,
    ),
    "multi_baseline": dict(
        n_dags=2,
        tasks_per_dag=6,
        target_utilization=0.8,
        period_mode="non-harmonic",
        period_range=(5_000, 100_000),
        edge_probability=0.5,
        max_active=(2, 2),
        max_task_utilization=0.5,
    ),
    "contended": dict(
        n_dags=2,
        tasks_per_dag=12,
        target_utilization=3.2,
        period_mode="non-harmonic",
        period_range=(1_000, 1_000_000),
        edge_probability=0.5,
        max_active=(None, None),
        max_task_utilization=0.5,
    ),
    "sweep_default": dict(
        n_dags=2,
        tasks_per_dag=9,
        target_utilization=4.5,
        period_mode="non-harmonic",
        period_range=(5_000, 100_000),
        edge_probability=0.5,
        max_active=(2, 2),
        max_task_utilization=0.5,
    ),
}


def regime_presets(seed: int = 0) -> dict[str, GenSpec]:
    """Named generator settings for the three experiment regimes."""
    return {name: GenSpec(seed=seed, **params) for name, params in _PRESETS.items()}


def preset(name: str, seed: int = 0, **overrides) -> GenSpec:
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    params = {**_PRESETS[name], **overrides}
    return GenSpec(seed=seed, **params)
