import json
import random
from collections import defaultdict

import pytest

from agentpipe.agents import (
    Delete,
    Insert,
    Inspecting,
    Migrating,
    MobileAgent,
    Reorder,
    Resident,
    agent_step,
    apply_edit,
    sample_duration,
    substream,
)
from agentpipe.domain import FREE, Fixed, Jitter, NodeKind, StateId, TaskSpec
from agentpipe.engine import Engine, run
from agentpipe.jobdist import AgentAssignment
from agentpipe.network import Topology
from agentpipe.robots import ResourceTable, new_robot
from agentpipe.scenario import load_preset

from conftest import explicit, seq_job, task
from corpus import random_scenario


class FakeWorld:
    """Just enough world for single-transition checks."""

    def __init__(self, topology, robots):
        self.topology = topology
        self.robots = robots
        self.hop_latency = topology.hop_latency
        self.return_latency = 1
        self.table = ResourceTable()
        self.events, self.scheduled, self.parked = [], [], []

    def emit(self, kind, at, **fields):
        self.events.append((kind, at, fields.get("robot")))

    def schedule_agent(self, agent, at):
        self.scheduled.append(at)

    def acquire(self, robot, resources):
        self.table.acquire(robot, resources)

    def release(self, robot, resources):
        self.table.release(robot, resources)

    def robot_settled(self, robot, at, by):
        pass

    def reachable_robots(self, node):
        return frozenset(r for r in self.topology.reachable(node) if r in self.robots)

    def hop_cap(self):
        return 1000

    def park(self, agent, at):
        self.parked.append(agent.agent_id)

    def is_usable(self, node):
        return True

    def drain_battery(self, robot, ticks):
        pass


def one_step_agent(match=FREE, nxt=FREE, res="a"):
    t = TaskSpec("T1", frozenset({res}), Fixed(100))
    from agentpipe.domain import SIStep

    a = AgentAssignment("mu1", "J1", 0, (SIStep(match, t, nxt),), frozenset({res}))
    return MobileAgent(a, "R1", rng=substream(0, "mu1"))


def tiny_world(state=FREE):
    g = Topology(hop_latency=2)
    for n, k in [("R1", NodeKind.ROBOTIC), ("R2", NodeKind.ROBOTIC),
                 ("N1", NodeKind.SECONDARY), ("N2", NodeKind.SECONDARY)]:
        g.add_node(n, k)
    g.connect("R1", "N1").connect("R1", "N2").connect("N1", "R2")
    r1 = new_robot("R1")
    r1.state = state
    return FakeWorld(g, {"R1": r1, "R2": new_robot("R2")})


def test_match_on_free_robot_goes_resident():
    w = tiny_world()
    agent = one_step_agent(nxt=FREE)
    agent_step(agent, w, 0)
    assert isinstance(agent.phase, Resident) and agent.phase.until == 100
    assert w.robots["R1"].held_resources == {"a"} and w.robots["R1"].bound_job == "J1"
    assert [k for k, _, _ in w.events] == ["AgentInspect", "ResourceAcquire", "ExecBegin"]


def test_mismatch_migrates_to_least_recently_visited():
    w = tiny_world(state=StateId("J9", "T4"))
    agent = one_step_agent()
    agent.history.record("N1", 0)
    agent_step(agent, w, 5)
    assert agent.phase == Migrating("N2", 7)
    assert w.scheduled == [7]


def test_first_match_sets_next_state():
    result = run(explicit([seq_job("J1", task("T1", "a"), task("T2", "b"))], robots=1))
    ups = [(e.task_id, e.state_from, e.state_to) for e in result.trace.of_kind("StateUpdate")]
    assert ups == [("T1", "S*", "J1:T2"), ("T2", "J1:T2", "S*")]
    begins = result.trace.of_kind("ExecBegin")
    assert [e.agent_id for e in begins] == ["mu1", "mu2"]


def test_interdependent_tasks_run_back_to_back_on_one_robot():
    result = run(explicit([seq_job("J1", task("T1", "a"), task("T2", "a"))], robots=3))
    begins = result.trace.of_kind("ExecBegin")
    ends = result.trace.of_kind("ExecEnd")
    assert {e.agent_id for e in begins} == {"mu1"}
    assert len({e.robot_id for e in begins}) == 1
    assert begins[1].at == ends[0].at  # no migration in between
    ret = result.trace.of_kind("AgentReturn")
    assert len(ret) == 1 and ret[0].at >= ends[1].at


def test_sample_duration_models(fixtures):
    rng = random.Random(0)
    assert sample_duration(TaskSpec("T", {"a"}, Fixed(2000)), rng) == 2000
    assert sample_duration(TaskSpec("T", {"a"}, Jitter(2000, 0)), rng) == 2000
    golden = json.loads((fixtures / "jitter_seed42.json").read_text())
    t = TaskSpec("T", {"a"}, Jitter(golden["base"], golden["spread"]))
    stream = substream(golden["seed"], golden["stream"])
    draws = [sample_duration(t, stream) for _ in golden["draws"]]
    assert draws == golden["draws"]
    assert all(1500 <= d <= 2500 for d in draws)


def test_substreams_are_independent_and_stable():
    a = [substream(7, "mu1").random() for _ in range(2)]
    assert a[0] == a[1]
    assert substream(7, "mu1").random() != substream(7, "mu2").random()


def test_apply_edit():
    db = ("T1", "T2", "T3")
    t = TaskSpec("T1p", {"x"}, Fixed(5))
    assert apply_edit(db, Insert("T1", t)) == ("T1", "T1p", "T2", "T3")
    assert apply_edit(db, Insert(None, t)) == ("T1p", "T1", "T2", "T3")
    assert apply_edit(db, Insert("nope", t)) == db
    assert apply_edit(db, Delete("T2")) == ("T1", "T3")
    assert apply_edit(db, Reorder(("T3", "T1", "T2"))) == ("T3", "T1", "T2")


def test_sequence_agent_edits_every_robot():
    s = load_preset("otfp_fig7")
    eng = Engine(s)
    trace = eng.run().trace
    dbs = {r.transition_db for r in eng.robots.values()}
    assert dbs == {("T1", "T2", "T2A", "T3", "T4")}
    edits = trace.of_kind("SeqEdit")
    per_agent = defaultdict(set)
    for e in edits:
        if e.robot_id != "JD":
            per_agent[e.agent_id].add(e.robot_id)
    assert all(v == {"R1", "R2", "R3"} for v in per_agent.values())
    assert len(per_agent) == 3


def test_sequence_agent_without_robots_terminates():
    s = explicit([], robots=0)
    eng = Engine(s)
    eng.release_seq_edit(Reorder(()), 0)
    trace = eng.run().trace
    assert eng.seq_agents == {}
    assert [e.kind for e in trace] == ["SeqEdit"]


def test_booking_and_token_exclusivity_on_random_runs():
    for seed in range(40):
        trace = run(random_scenario(seed)).trace
        robot_of = defaultdict(set)
        spans = defaultdict(list)
        open_ = {}
        for e in trace:
            if e.kind == "ExecBegin":
                robot_of[e.agent_id].add(e.robot_id)
                assert e.agent_id not in open_
                open_[e.agent_id] = e.at
            elif e.kind == "ExecEnd":
                spans[e.agent_id].append((open_.pop(e.agent_id), e.at))
        assert all(len(v) == 1 for v in robot_of.values()), seed
        assert not open_


@pytest.mark.parametrize("seed", range(15))
def test_progress_to_resident_within_walk_bound(seed):
    from agentpipe.scenario import TopologySpec

    s = explicit([seq_job("J1", task("T1", "a"))], robots=1 + seed % 3, hop=1)
    s.topology = TopologySpec(layout="random_connected", secondary_nodes=seed % 7, seed=seed,
                              extra_edges=seed % 4)
    eng = Engine(s)
    result = eng.run()
    g = s.build_topology()
    bound = len(g.nodes()) * max(1, g.diameter()) * s.engine.hop_latency
    begin = result.trace.of_kind("ExecBegin")[0]
    assert begin.at <= bound
