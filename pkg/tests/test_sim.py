from collections import Counter

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from redag.analysis import response_time
from redag.generate import GenSpec, generate_workload
from redag.model import assign_rm_priorities, validate_workload
from redag.sim import (
    COMPLETE,
    DEFERRED,
    DISPATCH,
    PREEMPT,
    Event,
    HorizonOverflow,
    MalformedTrace,
    NoCompletedJobs,
    Policy,
    SimConfig,
    read_events,
    simulate,
    verify_enforcement,
    worst_case_response_from_trace,
    write_events,
)

from conftest import MS, multi_dag, one_dag


def kinds(trace):
    return Counter(e.kind for e in trace.events)


def test_single_task_no_contention():
    vw = one_dag([(1 * MS, 4 * MS)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=12 * MS))
    assert len(tr.jobs) == 3
    assert [j.response for j in tr.jobs] == [1 * MS] * 3
    assert not any(j.missed for j in tr.jobs)
    assert kinds(tr)[PREEMPT] == 0


def test_two_tasks_short_b_runs_without_preemption():
    # A(1,4), B(3,8): B fills [1,4) and is done before A's second release.
    vw = one_dag([(1, 4), (3, 8)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=8))
    b = tr.jobs_of(2)[0]
    assert (b.start, b.finish, b.preemptions) == (1, 4, 0)
    assert worst_case_response_from_trace(tr, 2) == 4
    assert response_time(2, vw, assign_rm_priorities(vw)).response == 4


def test_two_tasks_preempted_b():
    # With C_B = 4, A's release at 4 preempts B, which resumes at 5 and finishes at 6.
    vw = one_dag([(1, 4), (4, 8)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=8))
    b = tr.jobs_of(2)[0]
    assert (b.start, b.finish, b.preemptions) == (1, 6, 1)
    assert kinds(tr)[PREEMPT] == 1
    assert [e for e in tr.events if e.kind == PREEMPT] == [Event(4, PREEMPT, 2, 0, 0)]
    assert worst_case_response_from_trace(tr, 2) == 6
    assert response_time(2, vw, assign_rm_priorities(vw)).response == 6


def test_cap_of_one_serialises_parallel_sources():
    vw = one_dag([(2, 10), (2, 10)], cap=1)
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=2, horizon=10))
    a, b = tr.jobs
    assert (a.start, a.finish) == (0, 2)
    assert (b.start, b.finish) == (2, 4)
    assert b.deferred_by_cap and not a.deferred_by_cap
    assert [(e.timestamp, e.task_id) for e in tr.events if e.kind == DEFERRED] == [(0, 2)]
    res = verify_enforcement(tr, vw)
    assert res.all_enforced and res.peak == {1: 1}


def test_precedence_gate_orders_instances():
    vw = one_dag([(3, 10), (1, 10)], edges=[(1, 2)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=2, horizon=30))
    for a, b in zip(tr.jobs_of(1), tr.jobs_of(2)):
        assert b.start >= a.finish
        assert b.release == a.release  # release stays on the period boundary
        assert b.ready == a.finish


def test_event_driven_successors_release_on_completion():
    vw = one_dag([(3, 10), (1, 10)], edges=[(1, 2)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=2, horizon=30, successor_release="event"))
    assert [j.release for j in tr.jobs_of(2)] == [3, 13, 23]


def test_rm_preempts_across_dags():
    vw = multi_dag(([(5, 100)], (), None), ([(1, 2)], (), None))
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=100))
    slow = tr.jobs_of(1)[0]
    assert slow.preemptions >= 1
    assert all(not j.missed for j in tr.jobs_of(2))


def test_fifo_is_non_preemptive():
    vw = multi_dag(([(5, 100)], (), None), ([(1, 2)], (), None))
    for pol in (Policy.FIFO_SINGLE, Policy.FIFO_MULTI):
        tr = simulate(vw, SimConfig(pol, workers=1, horizon=100))
        assert kinds(tr)[PREEMPT] == 0
        assert any(j.missed for j in tr.jobs_of(2))


def test_fifo_single_forces_one_worker():
    assert SimConfig(Policy.FIFO_SINGLE, workers=8).workers == 1
    assert Policy.parse("FifoMulti") is Policy.FIFO_MULTI


def test_overloaded_workload_misses():
    vw = one_dag([(3, 4), (3, 6)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1))
    assert any(j.missed for j in tr.completed_jobs())


def test_censored_jobs_at_horizon():
    vw = one_dag([(5, 10)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=13))
    assert len(tr.jobs) == 2
    assert len(tr.censored_jobs()) == 1
    assert tr.censored_jobs()[0].finish is None


def test_horizon_cap():
    vw = one_dag([(1, 7), (1, 11), (1, 13)])
    with pytest.raises(HorizonOverflow):
        simulate(vw, SimConfig(Policy.REDAG, horizon_cap=1000))


def test_context_switch_cost_delays_resumed_job():
    vw = one_dag([(1, 4), (4, 8)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=8, context_switch_cost=1))
    assert tr.jobs_of(1)[1].finish == 6  # A#1 dispatched at 4 by preemption pays 1 us


def test_no_completed_jobs_error():
    vw = one_dag([(5, 10)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1, horizon=3))
    with pytest.raises(NoCompletedJobs):
        worst_case_response_from_trace(tr, 1)


def test_forged_trace_violation():
    vw = one_dag([(2, 10), (2, 10)], cap=1)
    forged = [Event(0, DISPATCH, 1, 0, 0), Event(0, DISPATCH, 2, 0, 1), Event(2, COMPLETE, 1, 0, 0),
              Event(2, COMPLETE, 2, 0, 1)]
    res = verify_enforcement(forged, vw)
    assert not res.all_enforced
    assert res.violations == ((0, 1, 2),)


def test_uncapped_is_vacuous():
    vw = one_dag([(2, 10), (2, 10)])
    assert verify_enforcement(simulate(vw, SimConfig(Policy.REDAG, workers=2)), vw).all_enforced


@pytest.mark.parametrize(
    "events",
    [
        [Event(2, DISPATCH, 1, 0, 0), Event(1, COMPLETE, 1, 0, 0)],
        [Event(0, COMPLETE, 1, 0, 0)],
        [Event(0, DISPATCH, 1, 0, 0), Event(0, DISPATCH, 1, 0, 1)],
        [Event(0, DISPATCH, 1, 0, 0), Event(0, DISPATCH, 2, 0, 0)],
        [Event(0, DISPATCH, 9, 0, 0)],
    ],
)
def test_malformed_traces(events):
    with pytest.raises(MalformedTrace):
        verify_enforcement(events, one_dag([(2, 10), (2, 10)]))


def test_trace_round_trip(tmp_path):
    vw = one_dag([(1, 4), (4, 8)])
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=1))
    write_events(tr, tmp_path / "t.jsonl")
    assert read_events(tmp_path / "t.jsonl") == tr.events
    (tmp_path / "bad.jsonl").write_text('{"timestamp_us": 0}\n')
    with pytest.raises(MalformedTrace):
        read_events(tmp_path / "bad.jsonl")


def _check_invariants(vw, tr, m):
    # the FIFO baselines model stock executors, which have no per-DAG cap
    if tr.policy is Policy.REDAG:
        assert verify_enforcement(tr, vw).all_enforced
    for j in tr.completed_jobs():
        assert j.executed == j.wcet
        assert j.release <= j.ready <= j.start < j.finish
        assert j.finish - j.start >= j.wcet
        for p in vw.predecessors[j.task_id]:
            pred = tr.jobs_of(p)[j.instance]
            assert pred.finish is not None and pred.finish <= j.ready
    busy = Counter()
    running = set()
    for e in tr.events:
        if e.kind == DISPATCH:
            running.add((e.task_id, e.instance))
        elif e.kind in (PREEMPT, COMPLETE):
            running.discard((e.task_id, e.instance))
        busy[e.timestamp] = max(busy[e.timestamp], len(running))
    assert max(busy.values(), default=0) <= m


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(
    seed=st.integers(0, 10_000),
    policy=st.sampled_from(list(Policy)),
    workers=st.integers(1, 4),
    caps=st.tuples(st.sampled_from([None, 1, 2, 3]), st.sampled_from([None, 1, 2, 3])),
)
def test_random_workload_invariants(seed, policy, workers, caps):
    spec = GenSpec(seed=seed, n_dags=2, tasks_per_dag=5, target_utilization=1.5, period_range=(1000, 20_000),
                   max_active=caps, max_task_utilization=0.5)
    vw = validate_workload(generate_workload(spec).workload)
    tr = simulate(vw, SimConfig(policy, workers=workers, horizon=100_000))
    _check_invariants(vw, tr, tr.workers)


def test_redag_is_work_conserving_when_uncapped():
    spec = GenSpec(seed=3, n_dags=2, tasks_per_dag=5, target_utilization=1.5, period_range=(1000, 20_000),
                   edge_probability=0.0, max_task_utilization=0.5)
    vw = validate_workload(generate_workload(spec).workload)
    tr = simulate(vw, SimConfig(Policy.REDAG, workers=2, horizon=50_000))
    # replay: whenever fewer than m jobs run after an instant, nothing is left waiting
    ready, running = set(), set()
    by_time = {}
    for e in tr.events:
        by_time.setdefault(e.timestamp, []).append(e)
    for t in sorted(by_time):
        for e in by_time[t]:
            key = (e.task_id, e.instance)
            if e.kind == "Ready":
                ready.add(key)
            elif e.kind == DISPATCH:
                ready.discard(key)
                running.add(key)
            elif e.kind == PREEMPT:
                running.discard(key)
                ready.add(key)
            elif e.kind == COMPLETE:
                running.discard(key)
        if t < tr.horizon:
            assert len(running) == 2 or not ready
