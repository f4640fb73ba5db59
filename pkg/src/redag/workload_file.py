"""JSON workload documents.

Schema::

    {
      "deadline_scale": 1.0,
      "dags": [
        {"dag_id": 1, "max_active": 2 | null,
         "tasks": [{"id": 1, "label": "cam", "wcet_us": 500, "period_us": 10000,
                    "deadline_us": 10000, "criticality": 0}],
         "edges": [[1, 2]]}
      ],
      "provenance": {...}            # optional, written by the generator
    }

``deadline_us`` defaults to ``period_us``. Errors carry the JSON path of the
offending element.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any

from .model import DagSpec, Task, Workload, WorkloadError, WorkloadValidationError, validate_workload


class WorkloadFormatError(WorkloadError):
    pass


def _require(obj: dict, key: str, path: str, kinds=(int,)):
    if key not in obj:
        raise WorkloadFormatError(f"missing required field '{key}'", f"{path}.{key}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise WorkloadFormatError(f"field '{key}' has wrong type {type(value).__name__}", f"{path}.{key}")
    return value


def _fraction(value) -> Fraction:
    # floats go through their shortest repr so 0.8 -> 4/5, not the binary expansion
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def workload_from_dict(doc: dict[str, Any]) -> Workload:
    if not isinstance(doc, dict):
        raise WorkloadFormatError("top-level document must be an object", "$")
    dags_raw = doc.get("dags")
    if not isinstance(dags_raw, list):
        raise WorkloadFormatError("'dags' must be an array", "$.dags")
    dags = []
    for di, d in enumerate(dags_raw):
        dpath = f"$.dags[{di}]"
        if not isinstance(d, dict):
            raise WorkloadFormatError("DAG entry must be an object", dpath)
        dag_id = _require(d, "dag_id", dpath)
        max_active = d.get("max_active")
        if max_active is not None and (isinstance(max_active, bool) or not isinstance(max_active, int)):
            raise WorkloadFormatError("max_active must be an integer or null", f"{dpath}.max_active")
        tasks = []
        for ti, t in enumerate(d.get("tasks", [])):
            tpath = f"{dpath}.tasks[{ti}]"
            if not isinstance(t, dict):
                raise WorkloadFormatError("task entry must be an object", tpath)
            period = _require(t, "period_us", tpath)
            deadline = t.get("deadline_us", period)
            if deadline is None:
                deadline = period
            tasks.append(
                Task(
                    id=_require(t, "id", tpath),
                    dag_id=dag_id,
                    wcet=_require(t, "wcet_us", tpath),
                    period=period,
                    deadline=deadline,
                    criticality=t.get("criticality", 0),
                    label=str(t.get("label", "")),
                )
            )
        edges = []
        for ei, e in enumerate(d.get("edges", [])):
            if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
                raise WorkloadFormatError("edge must be a [from_id, to_id] pair", f"{dpath}.edges[{ei}]")
            edges.append((e[0], e[1]))
        dags.append(DagSpec(dag_id=dag_id, tasks=tuple(tasks), edges=tuple(edges), max_active=max_active))
    scale = doc.get("deadline_scale", 1)
    try:
        scale = _fraction(scale)
    except (TypeError, ValueError):
        raise WorkloadFormatError("deadline_scale must be a number", "$.deadline_scale") from None
    return Workload(tuple(dags), deadline_scale=scale)


def _scale_out(f: Fraction):
    return int(f) if f.denominator == 1 else float(f)


def workload_to_dict(w: Workload, provenance: dict | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "deadline_scale": _scale_out(w.deadline_scale),
        "dags": [
            {
                "dag_id": d.dag_id,
                "max_active": d.max_active,
                "tasks": [
                    {
                        "id": t.id,
                        "label": t.label,
                        "wcet_us": t.wcet,
                        "period_us": t.period,
                        "deadline_us": t.deadline,
                        "criticality": t.criticality,
                    }
                    for t in d.tasks
                ],
                "edges": [list(e) for e in d.edges],
            }
            for d in w.dags
        ],
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return doc


def dumps_workload(w: Workload, provenance: dict | None = None) -> str:
    return json.dumps(workload_to_dict(w, provenance), indent=2, sort_keys=False) + "\n"


def save_workload(w: Workload, path, provenance: dict | None = None) -> None:
    Path(path).write_text(dumps_workload(w, provenance))


def load_workload(path, validate: bool = True):
    """Read a workload file. Returns a ValidatedWorkload unless ``validate`` is false."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WorkloadFormatError(f"not valid JSON: {exc}", "$") from None
    w = workload_from_dict(doc)
    if not validate:
        return w
    try:
        return validate_workload(w)
    except WorkloadValidationError as exc:
        # re-anchor model paths onto the document root
        for v in exc.violations:
            if v.path and not v.path.startswith("$"):
                v.path = "$." + v.path
        raise WorkloadValidationError(exc.violations) from None
