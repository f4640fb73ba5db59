"""Multi-DAG periodic task model.

All durations are integer microseconds. A workload is a list of DAGs; every
task id is unique across the whole workload because priorities live in one
global space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

__all__ = [
    "UNBOUNDED",
    "Task",
    "DagSpec",
    "Workload",
    "ValidatedWorkload",
    "PriorityMap",
    "WorkloadError",
    "CycleDetected",
    "CrossDagEdge",
    "InvalidTiming",
    "DuplicateTaskId",
    "EmptyWorkload",
    "OverflowRisk",
    "WorkloadValidationError",
    "check_workload",
    "validate_workload",
    "assign_rm_priorities",
    "total_utilization",
    "dag_utilization",
    "hyperperiod",
    "scale_deadlines",
]

# max_active sentinel: no cap on concurrently running jobs of a DAG.
UNBOUNDED = None


class WorkloadError(Exception):
    """Base class for every structural or timing problem in a workload."""

    path = ""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class CycleDetected(WorkloadError):
    def __init__(self, dag_id: int, cycle: list[int], path: str = ""):
        self.dag_id = dag_id
        self.cycle = cycle
        super().__init__(f"DAG {dag_id} contains a cycle through tasks {cycle}", path)


class CrossDagEdge(WorkloadError):
    def __init__(self, edge: tuple[int, int], dag_id: int, path: str = ""):
        self.edge = edge
        self.dag_id = dag_id
        super().__init__(
            f"edge {edge[0]}->{edge[1]} in DAG {dag_id} references a task outside that DAG", path
        )


class InvalidTiming(WorkloadError):
    def __init__(self, task_id: int, reason: str, path: str = ""):
        self.task_id = task_id
        self.reason = reason
        super().__init__(f"task {task_id}: {reason}", path)


class DuplicateTaskId(WorkloadError):
    def __init__(self, task_id: int, path: str = ""):
        self.task_id = task_id
        super().__init__(f"task id {task_id} is used more than once", path)


class EmptyWorkload(WorkloadError):
    def __init__(self, path: str = ""):
        super().__init__("workload contains no tasks", path)


class OverflowRisk(WorkloadError):
    def __init__(self, value: int, cap: int):
        self.value = value
        self.cap = cap
        super().__init__(f"hyperperiod {value} us exceeds the configured cap of {cap} us")


class WorkloadValidationError(WorkloadError):
    """Raised by :func:`validate_workload`; carries every violation found."""

    def __init__(self, violations: list[WorkloadError]):
        self.violations = violations
        lines = [f"{v.path}: {v}" if v.path else str(v) for v in violations]
        super().__init__("invalid workload:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class Task:
    """One callback. ``criticality`` is stored but no scheduler reads it."""

    id: int
    dag_id: int
    wcet: int
    period: int
    deadline: int
    criticality: int = 0
    label: str = ""

    @property
    def utilization(self) -> Fraction:
        return Fraction(self.wcet, self.period)


@dataclass(frozen=True)
class DagSpec:
    dag_id: int
    tasks: tuple[Task, ...]
    edges: tuple[tuple[int, int], ...] = ()
    max_active: int | None = UNBOUNDED

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    @property
    def task_ids(self) -> list[int]:
        return [t.id for t in self.tasks]


@dataclass(frozen=True)
class Workload:
    dags: tuple[DagSpec, ...]
    deadline_scale: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "dags", tuple(self.dags))
        object.__setattr__(self, "deadline_scale", Fraction(self.deadline_scale))

    @property
    def tasks(self) -> list[Task]:
        return [t for d in self.dags for t in d.tasks]

    def dag(self, dag_id: int) -> DagSpec:
        for d in self.dags:
            if d.dag_id == dag_id:
                return d
        raise KeyError(dag_id)


@dataclass(frozen=True)
class ValidatedWorkload:
    """A workload that passed :func:`validate_workload`, plus derived lookups."""

    workload: Workload
    topo_order: Mapping[int, tuple[int, ...]]
    tasks: Mapping[int, Task] = field(repr=False)
    predecessors: Mapping[int, tuple[int, ...]] = field(repr=False)
    successors: Mapping[int, tuple[int, ...]] = field(repr=False)

    @property
    def dags(self) -> tuple[DagSpec, ...]:
        return self.workload.dags

    @property
    def deadline_scale(self) -> Fraction:
        return self.workload.deadline_scale

    def max_active(self, dag_id: int) -> int | None:
        return self.workload.dag(dag_id).max_active


@dataclass(frozen=True)
class PriorityMap:
    """task id -> rank; rank 0 is the highest priority."""

    ranks: Mapping[int, int]

    def __getitem__(self, task_id: int) -> int:
        return self.ranks[task_id]

    def __len__(self) -> int:
        return len(self.ranks)

    def order(self) -> list[int]:
        """Task ids from highest to lowest priority."""
        return sorted(self.ranks, key=self.ranks.__getitem__)

    def higher_priority(self, task_id: int) -> list[int]:
        r = self.ranks[task_id]
        return [t for t in self.order() if self.ranks[t] < r]


def _find_cycle(nodes: list[int], succ: dict[int, list[int]]) -> list[int] | None:
    # iterative DFS, white/grey/black colouring
    colour = {n: 0 for n in nodes}
    for root in nodes:
        if colour[root]:
            continue
        stack = [(root, iter(succ[root]))]
        path = [root]
        colour[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = 2
                stack.pop()
                path.pop()
            elif colour[nxt] == 1:
                return path[path.index(nxt):]
            elif colour[nxt] == 0:
                colour[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
                path.append(nxt)
    return None


def _topological_order(nodes: list[int], edges: Iterable[tuple[int, int]]) -> list[int]:
    # Kahn with ascending-id tie break so the order is deterministic
    import heapq

    indeg = {n: 0 for n in nodes}
    succ: dict[int, list[int]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    heap = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for s in succ[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, s)
    return order


def check_workload(w: Workload) -> list[WorkloadError]:
    """Return every violated invariant of ``w`` (empty list when valid)."""
    violations: list[WorkloadError] = []
    seen: set[int] = set()
    n_tasks = 0
    for di, dag in enumerate(w.dags):
        dpath = f"dags[{di}]"
        if dag.max_active is not UNBOUNDED and dag.max_active < 1:
            violations.append(
                WorkloadError(f"DAG {dag.dag_id}: max_active must be >= 1 or unbounded", f"{dpath}.max_active")
            )
        ids = set()
        for ti, t in enumerate(dag.tasks):
            n_tasks += 1
            tpath = f"{dpath}.tasks[{ti}]"
            if t.id in seen:
                violations.append(DuplicateTaskId(t.id, f"{tpath}.id"))
            seen.add(t.id)
            ids.add(t.id)
            if t.dag_id != dag.dag_id:
                violations.append(
                    InvalidTiming(t.id, f"dag_id {t.dag_id} does not match enclosing DAG {dag.dag_id}", tpath)
                )
            for name, value in (("wcet", t.wcet), ("period", t.period), ("deadline", t.deadline)):
                if not isinstance(value, int) or value <= 0:
                    violations.append(InvalidTiming(t.id, f"{name} must be a positive integer, got {value!r}", f"{tpath}.{name}"))
            if isinstance(t.wcet, int) and isinstance(t.period, int) and t.wcet > t.period > 0:
                violations.append(InvalidTiming(t.id, f"C exceeds T ({t.wcet} > {t.period})", f"{tpath}.wcet"))
            if isinstance(t.wcet, int) and isinstance(t.deadline, int) and t.wcet > t.deadline > 0:
                violations.append(InvalidTiming(t.id, f"C exceeds D ({t.wcet} > {t.deadline})", f"{tpath}.wcet"))

        good_edges = []
        for ei, (a, b) in enumerate(dag.edges):
            if a not in ids or b not in ids:
                violations.append(CrossDagEdge((a, b), dag.dag_id, f"{dpath}.edges[{ei}]"))
            else:
                good_edges.append((a, b))
        nodes = sorted(ids)
        succ: dict[int, list[int]] = {n: [] for n in nodes}
        for a, b in good_edges:
            succ[a].append(b)
        for n in nodes:
            succ[n].sort()
        cycle = _find_cycle(nodes, succ)
        if cycle is not None:
            violations.append(CycleDetected(dag.dag_id, cycle, f"{dpath}.edges"))
    if n_tasks == 0:
        violations.append(EmptyWorkload("dags"))
    return violations


def validate_workload(w: Workload) -> ValidatedWorkload:
    """Validate ``w`` and attach a topological order per DAG.

    Raises :class:`WorkloadValidationError` listing every violation.
    """
    violations = check_workload(w)
    if violations:
        raise WorkloadValidationError(violations)
    topo = {}
    preds: dict[int, list[int]] = {}
    succs: dict[int, list[int]] = {}
    for dag in w.dags:
        topo[dag.dag_id] = tuple(_topological_order(dag.task_ids, dag.edges))
        for t in dag.tasks:
            preds[t.id] = []
            succs[t.id] = []
        for a, b in dag.edges:
            preds[b].append(a)
            succs[a].append(b)
    return ValidatedWorkload(
        workload=w,
        topo_order=topo,
        tasks={t.id: t for t in w.tasks},
        predecessors={k: tuple(sorted(set(v))) for k, v in preds.items()},
        successors={k: tuple(sorted(set(v))) for k, v in succs.items()},
    )


def _as_workload(w: Workload | ValidatedWorkload) -> Workload:
    return w.workload if isinstance(w, ValidatedWorkload) else w


def assign_rm_priorities(w: Workload | ValidatedWorkload) -> PriorityMap:
    """Rate-monotonic ranks over all DAGs; equal periods ordered by task id."""
    tasks = sorted(_as_workload(w).tasks, key=lambda t: (t.period, t.id))
    return PriorityMap({t.id: rank for rank, t in enumerate(tasks)})


def total_utilization(w: Workload | ValidatedWorkload) -> Fraction:
    tasks = _as_workload(w).tasks
    if not tasks:
        raise EmptyWorkload()
    return sum((t.utilization for t in tasks), Fraction(0))


def dag_utilization(dag: DagSpec) -> Fraction:
    return sum((t.utilization for t in dag.tasks), Fraction(0))


def hyperperiod(w: Workload | ValidatedWorkload, cap: int | None = None) -> int:
    """Least common multiple of all periods.

    Raises :class:`OverflowRisk` when the result exceeds ``cap``.
    """
    periods = [t.period for t in _as_workload(w).tasks]
    if not periods:
        raise EmptyWorkload()
    h = 1
    for p in periods:
        h = math.lcm(h, p)
    if cap is not None and h > cap:
        raise OverflowRisk(h, cap)
    return h


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def scale_deadlines(w: Workload, delta) -> Workload:
    """Set every D to round(delta * T) (half-up) and record delta on the workload."""
    was_validated = isinstance(w, ValidatedWorkload)
    w = _as_workload(w)
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError(f"deadline scale must be positive, got {delta}")
    problems: list[WorkloadError] = []
    dags = []
    for di, dag in enumerate(w.dags):
        tasks = []
        for ti, t in enumerate(dag.tasks):
            d = _round_half_up(delta * t.period)
            if d < t.wcet:
                problems.append(
                    InvalidTiming(t.id, f"scaled deadline {d} is below C={t.wcet}", f"dags[{di}].tasks[{ti}]")
                )
            tasks.append(replace(t, deadline=d))
        dags.append(replace(dag, tasks=tuple(tasks)))
    if problems:
        if len(problems) == 1:
            raise problems[0]
        raise WorkloadValidationError(problems)
    scaled = Workload(tuple(dags), deadline_scale=delta)
    return validate_workload(scaled) if was_validated else scaled
