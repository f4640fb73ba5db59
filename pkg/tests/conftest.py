"""Shared builders for small hand-made workloads."""

from __future__ import annotations

import pytest

from redag.model import DagSpec, Task, Workload, validate_workload

MS = 1000


def independent(pairs, dag_id=1, first_id=1):
    """Tasks from (C, T) pairs, implicit deadlines, no edges."""
    return [Task(first_id + i, dag_id, c, t, t) for i, (c, t) in enumerate(pairs)]


def one_dag(pairs, edges=(), cap=None):
    return validate_workload(Workload((DagSpec(1, tuple(independent(pairs)), tuple(edges), cap),)))


def multi_dag(*dags):
    """``dags`` are (pairs, edges, cap) triples; ids run on across DAGs."""
    specs = []
    next_id = 1
    for k, (pairs, edges, cap) in enumerate(dags, start=1):
        tasks = independent(pairs, dag_id=k, first_id=next_id)
        next_id += len(tasks)
        specs.append(DagSpec(k, tuple(tasks), tuple(edges), cap))
    return validate_workload(Workload(tuple(specs)))


@pytest.fixture
def rta_set():
    return one_dag([(1, 4), (2, 6), (3, 12)])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
