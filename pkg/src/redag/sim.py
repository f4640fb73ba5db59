"""Discrete-event simulation of the rate-priority executor and FIFO baselines.

Logical time is integer microseconds. At every timestamp the engine first
retires completing jobs (which may unblock successors), then creates the jobs
released at that instant, then dispatches.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple

from .model import PriorityMap, ValidatedWorkload, assign_rm_priorities, hyperperiod

__all__ = [
    "Policy",
    "SimConfig",
    "Job",
    "Event",
    "SimTrace",
    "ReadyQueue",
    "EnforcementResult",
    "SimulationError",
    "HorizonOverflow",
    "InternalInvariantViolation",
    "MalformedTrace",
    "NoCompletedJobs",
    "simulate",
    "verify_enforcement",
    "worst_case_response_from_trace",
    "write_events",
    "read_events",
    "write_jobs_csv",
    "JOB_CSV_HEADER",
]

RELEASE = "Release"
READY = "Ready"
DEFERRED = "DeferredByCap"
DISPATCH = "Dispatch"
PREEMPT = "Preempt"
COMPLETE = "Complete"
DEADLINE_MISS = "DeadlineMiss"
EVENT_KINDS = (RELEASE, READY, DEFERRED, DISPATCH, PREEMPT, COMPLETE, DEADLINE_MISS)

DEFAULT_HORIZON_CAP = 10**10


class SimulationError(Exception):
    pass


class HorizonOverflow(SimulationError):
    pass


class InternalInvariantViolation(SimulationError):
    pass


class MalformedTrace(SimulationError):
    pass


class NoCompletedJobs(SimulationError):
    pass


class Policy(str, Enum):
    REDAG = "redag"
    FIFO_SINGLE = "fifo-single"
    FIFO_MULTI = "fifo-multi"

    @classmethod
    def parse(cls, value: "Policy | str") -> "Policy":
        if isinstance(value, Policy):
            return value
        aliases = {"redagrt": cls.REDAG, "redag-rt": cls.REDAG, "fifosingle": cls.FIFO_SINGLE,
                   "fifomulti": cls.FIFO_MULTI}
        v = value.strip().lower()
        return aliases.get(v.replace("_", ""), None) or cls(v.replace("_", "-"))


@dataclass(frozen=True)
class SimConfig:
    """Simulation knobs.

    ``horizon`` of None means one hyperperiod. ``release_offsets`` maps task id
    to the time of its first release (synchronous release when omitted).
    ``successor_release`` selects how non-source tasks are released:
    ``"periodic"`` (timer and predecessors both gate a job) or ``"event"``
    (a job is released the moment its predecessors' instances complete).
    """

    policy: Policy = Policy.REDAG
    workers: int = 1
    horizon: int | None = None
    context_switch_cost: int = 0
    release_offsets: dict[int, int] | None = None
    successor_release: str = "periodic"
    horizon_cap: int = DEFAULT_HORIZON_CAP
    record_events: bool = True

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy.parse(self.policy))
        if self.policy is Policy.FIFO_SINGLE:
            object.__setattr__(self, "workers", 1)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.context_switch_cost < 0:
            raise ValueError("context_switch_cost must be non-negative")
        if self.successor_release not in ("periodic", "event"):
            raise ValueError("successor_release must be 'periodic' or 'event'")


@dataclass(eq=False, slots=True)
class Job:
    task_id: int
    dag_id: int
    instance: int
    release: int
    deadline: int
    relative_deadline: int
    wcet: int
    remaining: int
    key: tuple = ()
    ready: int | None = None
    start: int | None = None
    finish: int | None = None
    executed: int = 0
    preemptions: int = 0
    deferred_by_cap: bool = False
    deferrals: int = 0
    # run-time bookkeeping, meaningless once the job is finished
    worker: int | None = None
    exec_start: int = 0
    finish_at: int = 0
    deferring: bool = False

    @property
    def completed(self) -> bool:
        return self.finish is not None

    @property
    def response(self) -> int | None:
        return None if self.finish is None else self.finish - self.release

    @property
    def lateness(self) -> int | None:
        return None if self.finish is None else self.finish - self.deadline

    @property
    def missed(self) -> bool:
        return self.finish is not None and self.finish > self.deadline


class Event(NamedTuple):
    timestamp: int
    kind: str
    task_id: int
    instance: int
    worker: int | None = None


@dataclass
class SimTrace:
    policy: Policy
    workers: int
    horizon: int
    events: list[Event]
    jobs: list[Job]
    released: dict[int, int] = field(default_factory=dict)
    executed: dict[int, int] = field(default_factory=dict)
    deferred: dict[int, int] = field(default_factory=dict)

    def completed_jobs(self) -> list[Job]:
        return [j for j in self.jobs if j.finish is not None]

    def censored_jobs(self) -> list[Job]:
        return [j for j in self.jobs if j.finish is None]

    def jobs_of(self, task_id: int) -> list[Job]:
        return [j for j in self.jobs if j.task_id == task_id]

    @property
    def total_deferred(self) -> int:
        return sum(self.deferred.values())

    @property
    def total_executed(self) -> int:
        return sum(self.executed.values())


class ReadyQueue:
    """Ready jobs held in one heap per DAG so cap checks stay cheap.

    Jobs are ordered by their ``key``: (rank, release, task id, instance) for
    the rate-priority policy, (ready time, arrival sequence) for FIFO.
    """

    def __init__(self, dag_ids: Iterable[int]):
        self._heaps: dict[int, list[tuple[tuple, Job]]] = {d: [] for d in dag_ids}
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, job: Job) -> None:
        heapq.heappush(self._heaps[job.dag_id], (job.key, job))
        self._size += 1

    def peek(self, eligible_dags: Iterable[int] | None = None) -> Job | None:
        """Best job overall, or best among ``eligible_dags`` when given."""
        best = None
        dags = self._heaps if eligible_dags is None else eligible_dags
        for d in dags:
            h = self._heaps[d]
            if h and (best is None or h[0][0] < best.key):
                best = h[0][1]
        return best

    def pop(self, job: Job) -> Job:
        h = self._heaps[job.dag_id]
        if not h or h[0][1] is not job:
            raise InternalInvariantViolation(f"job {job.task_id}#{job.instance} is not at the head of its queue")
        heapq.heappop(h)
        self._size -= 1
        return job

    def jobs(self, dag_id: int) -> list[Job]:
        return [j for _, j in self._heaps[dag_id]]


def simulate(w: ValidatedWorkload, cfg: SimConfig, pm: PriorityMap | None = None) -> SimTrace:
    pm = pm or assign_rm_priorities(w)
    horizon = cfg.horizon
    if horizon is None:
        hp = hyperperiod(w)
        if hp > cfg.horizon_cap:
            raise HorizonOverflow(f"hyperperiod {hp} us exceeds horizon cap {cfg.horizon_cap} us")
        horizon = hp
    elif horizon > cfg.horizon_cap:
        raise HorizonOverflow(f"horizon {horizon} us exceeds horizon cap {cfg.horizon_cap} us")

    policy = cfg.policy
    m = cfg.workers
    preemptive = policy is Policy.REDAG
    fifo = not preemptive
    caps = {d.dag_id: (d.max_active if preemptive else None) for d in w.dags}
    tasks = w.tasks
    preds = w.predecessors
    succs = w.successors
    offsets = cfg.release_offsets or {}
    event_driven = cfg.successor_release == "event"
    record = cfg.record_events
    switch_cost = cfg.context_switch_cost

    events: list[Event] = []
    emit = events.append
    jobs: list[Job] = []
    released = {tid: 0 for tid in tasks}
    executed = {tid: 0 for tid in tasks}
    deferred = {tid: 0 for tid in tasks}
    done = {tid: 0 for tid in tasks}
    next_instance = {tid: 0 for tid in tasks}
    pending: dict[int, deque[Job]] = {tid: deque() for tid in tasks}
    queue = ReadyQueue(caps)
    running_count = {d: 0 for d in caps}
    worker_jobs: list[Job | None] = [None] * m
    seq = 0

    releases: list[tuple[int, int]] = []
    for tid, t in tasks.items():
        if event_driven and preds[tid]:
            continue
        first = offsets.get(tid, 0)
        if first < 0:
            raise ValueError(f"release offset of task {tid} is negative")
        if first < horizon:
            releases.append((first, tid))
    heapq.heapify(releases)

    def release(tid: int, now: int) -> Job:
        t = tasks[tid]
        k = next_instance[tid]
        next_instance[tid] = k + 1
        job = Job(tid, t.dag_id, k, now, now + t.deadline, t.deadline, t.wcet, t.wcet)
        jobs.append(job)
        released[tid] += 1
        if record:
            emit(Event(now, RELEASE, tid, k))
        return job

    def make_ready(job: Job, now: int) -> None:
        nonlocal seq
        job.ready = now
        seq += 1
        job.key = (now, seq) if fifo else (pm[job.task_id], job.release, job.task_id, job.instance)
        queue.push(job)
        if record:
            emit(Event(now, READY, job.task_id, job.instance))

    def gate_open(tid: int, k: int) -> bool:
        return all(done[p] > k for p in preds[tid])

    def admit(tid: int, now: int) -> None:
        p = pending[tid]
        while p and gate_open(tid, p[0].instance):
            make_ready(p.popleft(), now)

    def dispatch(job: Job, wid: int, now: int, preempting: bool) -> None:
        queue.pop(job)
        if worker_jobs[wid] is not None:
            raise InternalInvariantViolation(f"worker {wid} is busy")
        worker_jobs[wid] = job
        job.worker = wid
        if job.start is None:
            job.start = now
        job.exec_start = now + (switch_cost if preempting else 0)
        job.finish_at = job.exec_start + job.remaining
        job.deferring = False
        running_count[job.dag_id] += 1
        cap = caps[job.dag_id]
        if cap is not None and running_count[job.dag_id] > cap:
            raise InternalInvariantViolation(f"DAG {job.dag_id} exceeded max_active={cap}")
        if record:
            emit(Event(now, DISPATCH, job.task_id, job.instance, wid))

    def preempt(job: Job, now: int) -> int:
        wid = job.worker
        ran = max(0, now - job.exec_start)
        job.remaining -= ran
        job.executed += ran
        if job.remaining <= 0:
            raise InternalInvariantViolation(f"preempting finished job {job.task_id}#{job.instance}")
        job.preemptions += 1
        job.worker = None
        worker_jobs[wid] = None
        running_count[job.dag_id] -= 1
        queue.push(job)
        if record:
            emit(Event(now, PREEMPT, job.task_id, job.instance, wid))
        return wid

    def eligible_dags() -> list[int]:
        return [d for d, c in caps.items() if c is None or running_count[d] < c]

    def improving_move(free: bool) -> tuple[Job, Job | None] | None:
        # best (candidate, victim) pair; victim None means "use a free worker"
        best = None
        for d, cap in caps.items():
            cand = queue.peek((d,))
            if cand is None or (best is not None and best[0].key < cand.key):
                continue
            if cap is None or running_count[d] < cap:
                if free:
                    best = (cand, None)
                    continue
                victim = max(worker_jobs, key=lambda j: j.key)
            else:
                # at cap: may only displace the weakest running job of its own DAG
                victim = max((j for j in worker_jobs if j is not None and j.dag_id == d), key=lambda j: j.key)
            if cand.key < victim.key:
                best = (cand, victim)
        return best

    def schedule(now: int) -> None:
        if not preemptive:
            while len(queue):
                cand = queue.peek()
                try:
                    wid = worker_jobs.index(None)
                except ValueError:
                    break
                dispatch(cand, wid, now, False)
            return
        while len(queue):
            free = None in worker_jobs
            move = improving_move(free)
            if move is None:
                break
            cand, victim = move
            if victim is None:
                dispatch(cand, worker_jobs.index(None), now, False)
            else:
                dispatch_wid = preempt(victim, now)
                dispatch(cand, dispatch_wid, now, True)
        if len(queue):
            mark_deferrals(now)

    def mark_deferrals(now: int) -> None:
        free = None in worker_jobs
        worst = None if free else max(j.key for j in worker_jobs)
        for d, cap in caps.items():
            if cap is None or running_count[d] < cap:
                continue
            for job in queue.jobs(d):
                if job.deferring:
                    continue
                if free or job.key < worst:
                    job.deferring = True
                    job.deferred_by_cap = True
                    job.deferrals += 1
                    deferred[job.task_id] += 1
                    if record:
                        emit(Event(now, DEFERRED, job.task_id, job.instance))

    def complete(job: Job, now: int) -> None:
        wid = job.worker
        job.executed += now - job.exec_start
        job.remaining = 0
        if job.executed != job.wcet:
            raise InternalInvariantViolation(
                f"job {job.task_id}#{job.instance} executed {job.executed} us, expected {job.wcet}"
            )
        job.finish = now
        job.worker = None
        worker_jobs[wid] = None
        running_count[job.dag_id] -= 1
        if running_count[job.dag_id] < 0:
            raise InternalInvariantViolation("negative running count")
        tid = job.task_id
        done[tid] += 1
        executed[tid] += 1
        if record:
            emit(Event(now, COMPLETE, tid, job.instance, wid))
            if now > job.deadline:
                emit(Event(now, DEADLINE_MISS, tid, job.instance, wid))

    while True:
        t_rel = releases[0][0] if releases else None
        t_done = min((j.finish_at for j in worker_jobs if j is not None), default=None)
        if t_rel is None and t_done is None:
            break
        now = min(x for x in (t_rel, t_done) if x is not None)
        if now > horizon:
            break

        # completions, in worker order
        finished_tasks = []
        for j in list(worker_jobs):
            if j is not None and j.finish_at == now:
                complete(j, now)
                finished_tasks.append(j.task_id)
        for tid in finished_tasks:
            for s in succs[tid]:
                if event_driven:
                    k = next_instance[s]
                    while now < horizon and gate_open(s, k):
                        make_ready(release(s, now), now)
                        k = next_instance[s]
                else:
                    admit(s, now)

        # releases, ascending task id
        while releases and releases[0][0] == now:
            _, tid = heapq.heappop(releases)
            job = release(tid, now)
            pending[tid].append(job)
            admit(tid, now)
            nxt = now + tasks[tid].period
            if nxt < horizon:
                heapq.heappush(releases, (nxt, tid))

        if now < horizon:
            schedule(now)

    return SimTrace(policy, m, horizon, events, jobs, released, executed, deferred)


@dataclass(frozen=True)
class EnforcementResult:
    all_enforced: bool
    violations: tuple[tuple[int, int, int], ...]  # (timestamp, dag_id, running count)
    peak: dict[int, int] = field(default_factory=dict)


def verify_enforcement(trace, w) -> EnforcementResult:
    """Replay Dispatch/Preempt/Complete events and check every per-DAG cap.

    ``trace`` may be a :class:`SimTrace` or any iterable of :class:`Event`.
    Jobs still running when the trace ends (censored at the horizon) are fine;
    a Preempt or Complete without a matching Dispatch, or a second Dispatch of a
    running job, is malformed.
    """
    events = trace.events if isinstance(trace, SimTrace) else list(trace)
    workload = w.workload if isinstance(w, ValidatedWorkload) else w
    dag_of = {t.id: t.dag_id for t in workload.tasks}
    caps = {d.dag_id: d.max_active for d in workload.dags}
    count = {d: 0 for d in caps}
    peak = {d: 0 for d in caps}
    running: dict[tuple[int, int], int | None] = {}
    busy: dict[int, tuple[int, int]] = {}
    violations = []
    last_t = None
    for ev in events:
        if last_t is not None and ev.timestamp < last_t:
            raise MalformedTrace(f"timestamps go backwards at {ev.timestamp}")
        last_t = ev.timestamp
        if ev.kind not in (DISPATCH, PREEMPT, COMPLETE):
            continue
        if ev.task_id not in dag_of:
            raise MalformedTrace(f"event references unknown task {ev.task_id}")
        key = (ev.task_id, ev.instance)
        dag = dag_of[ev.task_id]
        if ev.kind == DISPATCH:
            if key in running:
                raise MalformedTrace(f"job {key} dispatched twice without preemption or completion")
            if ev.worker is not None and ev.worker in busy:
                raise MalformedTrace(f"worker {ev.worker} dispatched while running {busy[ev.worker]}")
            running[key] = ev.worker
            if ev.worker is not None:
                busy[ev.worker] = key
            count[dag] += 1
            peak[dag] = max(peak[dag], count[dag])
            cap = caps[dag]
            if cap is not None and count[dag] > cap:
                violations.append((ev.timestamp, dag, count[dag]))
        else:
            if key not in running:
                raise MalformedTrace(f"{ev.kind} of job {key} at {ev.timestamp} has no matching Dispatch")
            wid = running.pop(key)
            if wid is not None:
                busy.pop(wid, None)
            count[dag] -= 1
    return EnforcementResult(not violations, tuple(violations), peak)


def worst_case_response_from_trace(trace: SimTrace, task_id: int) -> int:
    responses = [j.finish - j.release for j in trace.jobs if j.task_id == task_id and j.finish is not None]
    if not responses:
        raise NoCompletedJobs(f"task {task_id} has no completed jobs in the trace")
    return max(responses)


def write_events(trace: SimTrace, path) -> None:
    """One JSON object per line: timestamp_us, kind, task_id, instance, worker."""
    with open(path, "w") as fh:
        for ev in trace.events:
            fh.write(
                json.dumps(
                    {
                        "timestamp_us": ev.timestamp,
                        "kind": ev.kind,
                        "task_id": ev.task_id,
                        "instance": ev.instance,
                        "worker": ev.worker,
                    }
                )
                + "\n"
            )


def read_events(path) -> list[Event]:
    events = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            ev = Event(int(d["timestamp_us"]), d["kind"], int(d["task_id"]), int(d["instance"]), d.get("worker"))
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedTrace(f"line {lineno}: {exc}") from None
        if ev.kind not in EVENT_KINDS:
            raise MalformedTrace(f"line {lineno}: unknown event kind {ev.kind!r}")
        events.append(ev)
    return events


JOB_CSV_HEADER = (
    "task_id,instance,release_us,start_us,finish_us,deadline_us,response_us,lateness_us,missed,preemptions,deferred"
)


def write_jobs_csv(trace: SimTrace, path) -> None:
    def cell(v):
        return "" if v is None else str(v)

    rows = [JOB_CSV_HEADER]
    for j in sorted(trace.jobs, key=lambda j: (j.task_id, j.instance)):
        rows.append(
            ",".join(
                [
                    str(j.task_id),
                    str(j.instance),
                    str(j.release),
                    cell(j.start),
                    cell(j.finish),
                    str(j.deadline),
                    cell(j.response),
                    cell(j.lateness),
                    "" if j.finish is None else str(int(j.missed)),
                    str(j.preemptions),
                    str(j.deferrals),
                ]
            )
        )
    Path(path).write_text("\n".join(rows) + "\n")
