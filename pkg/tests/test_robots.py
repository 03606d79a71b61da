import dataclasses

import pytest

from agentpipe.agents import Insert
from agentpipe.analysis import export_gantt, utilization, verify_mer
from agentpipe.domain import FREE, ProtocolError, StateId, ValidationError
from agentpipe.engine import Engine, run
from agentpipe.robots import Busy, RemovalPolicy, ResourceTable, acquire, new_robot, release
from agentpipe.scenario import RobotAddAt, RobotRemoveAt, RobotSpec, SeqEditAt, WorkloadSpec, load_preset

from conftest import explicit, seq_job, task


def test_acquire_and_release():
    table = ResourceTable()
    r1, r2 = new_robot("R1"), new_robot("R2")
    acquire(r1, {"a", "b"}, table)
    assert r1.held_resources == {"a", "b"}
    with pytest.raises(Busy) as exc:
        acquire(r2, {"c", "b"}, table)
    assert exc.value.holder == "R1" and r2.held_resources == set()
    acquire(r2, set(), table)
    release(r1, {"a"}, table)
    acquire(r2, {"a"}, table)
    with pytest.raises(ProtocolError):
        release(r1, {"a"}, table)


def test_free_state_requires_empty_hands():
    table = ResourceTable()
    r = new_robot("R1")
    acquire(r, {"a"}, table)
    with pytest.raises(ProtocolError):
        r.set_state(FREE)
    release(r, {"a"}, table)
    r.bound_job = "J1"
    r.set_state(FREE)
    assert r.bound_job is None


def test_next_state_follows_transition_db():
    r = new_robot("R1", ("T1", "T2", "T3"))
    default = StateId("J1", "T9")
    assert r.next_state("J1", "T1", default, True) == StateId("J1", "T2")
    r.done_tasks.add("T2")
    assert r.next_state("J1", "T1", default, True) == StateId("J1", "T3")
    assert r.next_state("J1", "T3", default, True) == FREE
    assert r.next_state("J1", "T1", default, False) == default
    assert r.next_state("J1", "T7", default, True) == default


def test_remove_after_current_job():
    result = run(load_preset("removal_fig8"))
    assert result.status == "completed"
    assert set(result.jobs.values()) == {"done"}
    assert verify_mer(result.trace) == []
    gone = [e for e in result.trace if e.kind == "RobotRemove" and e.robot_id == "R2"]
    assert len(gone) == 1
    assert all(e.robot_id != "R2" for e in result.trace if e.seq > gone[0].seq)
    later = {r.robot for r in export_gantt(result.trace) if r.begin >= gone[0].at}
    assert later <= {"R1", "R3"} and later


def test_remove_only_robot_immediately():
    s = explicit([seq_job(f"J{i}", task("T1", "a", d=500), task("T2", "b", d=500)) for i in (1, 2)],
                 robots=1)
    s.interventions = [RobotRemoveAt(700, "R1", RemovalPolicy.IMMEDIATE)]
    result = run(s)
    assert result.status == "incomplete"
    assert verify_mer(result.trace) == []
    abort = [e for e in result.trace if e.kind == "RobotRemove" and e.task_id]
    assert len(abort) == 1 and abort[0].at == 700
    assert "done" not in result.jobs.values()


def _pipeline(robots, jobs, hop=0):
    s = explicit([], robots=robots, hop=hop, ret=hop)
    s.workload = WorkloadSpec(jobs=jobs, tasks_per_job=3, duration=task("x", "x", d=1000).duration)
    return s


def test_remove_then_add_resumes_like_a_fresh_run():
    two_phase = _pipeline(1, 4)
    two_phase.interventions = [RobotRemoveAt(100, "R1"), RobotAddAt(20_000, RobotSpec("R9"))]
    result = run(two_phase)
    assert result.status == "completed" and verify_mer(result.trace) == []
    after = [(r.job, r.task, r.begin - 20_000, r.end - 20_000)
             for r in export_gantt(result.trace) if r.robot == "R9"]
    # oracle: the three remaining jobs on one robot starting from an empty system
    rest = run(dataclasses.replace(_pipeline(1, 3)))
    renumber = {"J1": "J2", "J2": "J3", "J3": "J4"}
    expected = [(renumber[r.job], r.task, r.begin, r.end) for r in export_gantt(rest.trace)]
    assert after == expected


def test_added_robot_gets_the_edited_sequence():
    s = load_preset("otfp_fig7")
    s.interventions = list(s.interventions[:1]) + [RobotAddAt(6000, RobotSpec("R4"))]
    eng = Engine(s)
    eng.run()
    assert eng.robots["R4"].transition_db == ("T1", "T2", "T2A", "T3", "T4")


def test_robot_added_without_links_is_never_matched():
    s = explicit([seq_job("J1", task("T1", "a"))], robots=0)
    s.interventions = [RobotAddAt(0, RobotSpec("R1"), connect=[])]
    result = run(s)
    assert result.status == "incomplete"
    assert result.trace.of_kind("ExecBegin") == []


def test_fourth_robot_fills_the_pipeline():
    base = _pipeline(3, 10)
    s = dataclasses.replace(base, workload=dataclasses.replace(base.workload, tasks_per_job=4))
    before = run(s).trace
    assert max(utilization(before, t) for t in range(0, 20_000, 250)) == 3
    s.interventions = [RobotAddAt(1000, RobotSpec("R4"))]
    after = run(s).trace
    assert max(utilization(after, t) for t in range(0, 20_000, 250)) == 4
    assert verify_mer(after) == []


def test_every_state_change_is_attributed():
    for name in ("otfp_fig7", "removal_fig8", "mixed_jobs"):
        trace = run(load_preset(name)).trace
        assert all(e.agent_id for e in trace.of_kind("StateUpdate"))


def test_battery_threshold_retires_robot():
    s = _pipeline(2, 6)
    s.battery = (2500, 0)
    s.robot_count = 2
    result = run(s)
    removed = [e.robot_id for e in result.trace if e.kind == "RobotRemove"]
    assert sorted(removed) == ["R1", "R2"]
    assert verify_mer(result.trace) == []


def test_unknown_removal_is_rejected():
    eng = Engine(explicit([], robots=1))
    with pytest.raises(ValidationError):
        eng.remove_robot("R7", RemovalPolicy.IMMEDIATE, 0)
