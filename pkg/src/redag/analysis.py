"""Fixed-priority schedulability analysis.

The response-time recurrence here is the classical uniprocessor form. It is
exact for independent, synchronously released tasks on one worker and only a
reference figure when several workers share the ready queue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

from .model import PriorityMap, ValidatedWorkload, assign_rm_priorities, total_utilization

__all__ = [
    "RtaResult",
    "SchedReport",
    "rm_utilization_bound",
    "interference_bound",
    "response_time",
    "schedulability_report",
]


@dataclass(frozen=True)
class RtaResult:
    task_id: int
    converged: bool
    response: int  # fixed point when converged, otherwise the iterate that exceeded D
    iterations: int
    hp_set: tuple[int, ...] = ()
    blocking: int = 0
    iterates: tuple[int, ...] = field(default=(), repr=False)

    @property
    def verdict(self) -> Literal["Converged", "Unschedulable"]:
        return "Converged" if self.converged else "Unschedulable"

    @property
    def last_response(self) -> int:
        return self.response


@dataclass(frozen=True)
class SchedReport:
    results: tuple[RtaResult, ...]
    utilization: Fraction
    rm_bound: float

    @property
    def bound_verdict(self) -> Literal["WithinBound", "AboveBound"]:
        return "WithinBound" if float(self.utilization) <= self.rm_bound else "AboveBound"

    @property
    def overall(self) -> Literal["AllSchedulable", "SomeUnschedulable"]:
        return "AllSchedulable" if all(r.converged for r in self.results) else "SomeUnschedulable"

    @property
    def schedulable(self) -> bool:
        return self.overall == "AllSchedulable"

    def result(self, task_id: int) -> RtaResult:
        for r in self.results:
            if r.task_id == task_id:
                return r
        raise KeyError(task_id)


def rm_utilization_bound(n: int) -> float:
    """Liu-Layland bound n(2^(1/n) - 1)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    # expm1 keeps full precision for large n where 2^(1/n) - 1 is tiny
    return n * math.expm1(math.log(2) / n)


def interference_bound(task_id: int, w: ValidatedWorkload, pm: PriorityMap) -> int:
    """Sum of WCETs of every strictly higher-ranked task, across all DAGs."""
    return sum(w.tasks[j].wcet for j in pm.higher_priority(task_id))


def response_time(task_id: int, w: ValidatedWorkload, pm: PriorityMap, blocking: int = 0) -> RtaResult:
    """Iterate R <- C + B + sum ceil(R/T_j) C_j until it repeats or passes D.

    Integer arithmetic throughout. ``blocking`` is a caller-supplied bound on
    lower-priority blocking; the default leaves it out.
    """
    if blocking < 0:
        raise ValueError("blocking must be non-negative")
    task = w.tasks[task_id]
    hp = tuple(pm.higher_priority(task_id))
    hp_tasks = [(w.tasks[j].wcet, w.tasks[j].period) for j in hp]
    base = task.wcet + blocking
    r = base
    iterates = [r]
    if r > task.deadline:
        return RtaResult(task_id, False, r, 0, hp, blocking, tuple(iterates))
    k = 0
    while True:
        nxt = base + sum(-(-r // t) * c for c, t in hp_tasks)
        k += 1
        iterates.append(nxt)
        if nxt == r:
            return RtaResult(task_id, True, r, k, hp, blocking, tuple(iterates))
        if nxt > task.deadline:
            return RtaResult(task_id, False, nxt, k, hp, blocking, tuple(iterates))
        r = nxt


def schedulability_report(w: ValidatedWorkload, pm: PriorityMap | None = None) -> SchedReport:
    pm = pm or assign_rm_priorities(w)
    results = tuple(response_time(tid, w, pm) for tid in pm.order())
    return SchedReport(results, total_utilization(w), rm_utilization_bound(len(pm)))
