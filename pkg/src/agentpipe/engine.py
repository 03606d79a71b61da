"""Deterministic discrete-event engine.

Events are processed in ``(at, seq)`` order where ``seq`` is assigned when the
event is scheduled. The decentralized run hosts the Job Distributor, the
robots and the mobile agents. The centralized run replaces the agents with a
single FIFO server that grants every task start by message.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import itertools
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from .agents import (Gone, Inspecting, MobileAgent, Parked, Resident, Returning, SequenceAgent,
                     abort, agent_step, apply_edit, sample_duration, seq_agent_step, substream)
from .domain import FREE, JobSpec, NodeKind, ProtocolError, StateId, TaskSpec, ValidationError
from .jobdist import JobDistributor, merge_chains
from .network import Topology
from .robots import RemovalPolicy, ResourceTable, RobotNode, RobotStatus, new_robot
from .scenario import (JD_NODE, RobotAddAt, RobotRemoveAt, RobotSpec, Scenario, SeqEditAt,
                       WorkflowJob)


class EventKind(str, Enum):
    JOB_ARRIVAL = "JobArrival"
    AGENT_HOP = "AgentHop"
    AGENT_INSPECT = "AgentInspect"
    EXEC_BEGIN = "ExecBegin"
    EXEC_END = "ExecEnd"
    RESOURCE_ACQUIRE = "ResourceAcquire"
    RESOURCE_RELEASE = "ResourceRelease"
    STATE_UPDATE = "StateUpdate"
    AGENT_RETURN = "AgentReturn"
    SEQ_EDIT = "SeqEdit"
    ROBOT_ADD = "RobotAdd"
    ROBOT_REMOVE = "RobotRemove"
    CENTRAL_MSG_SEND = "CentralMsgSend"
    CENTRAL_MSG_RECV = "CentralMsgRecv"


KINDS = {k.value for k in EventKind}
COLUMNS = ("at", "seq", "kind", "agent_id", "robot_id", "job_id", "task_id", "resources",
           "state_from", "state_to")


class TraceFormatError(ValueError):
    """A trace file could not be parsed."""


@dataclass(frozen=True)
class Event:
    """One trace record. Empty strings stand for non-applicable columns."""

    at: int
    seq: int
    kind: str
    agent_id: str = ""
    robot_id: str = ""
    job_id: str = ""
    task_id: str = ""
    resources: tuple[str, ...] = ()
    state_from: str = ""
    state_to: str = ""

    def row(self) -> list[str]:
        return [str(self.at), str(self.seq), self.kind, self.agent_id, self.robot_id, self.job_id,
                self.task_id, ";".join(self.resources), self.state_from, self.state_to]


@dataclass
class Trace:
    events: list[Event] = field(default_factory=list)
    fingerprint: str = ""

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def dumps(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for e in self.events:
            w.writerow(e.row())
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def loads(cls, text: str) -> Trace:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != COLUMNS:
            raise TraceFormatError("line 1: missing or wrong header row")
        events = []
        for n, row in enumerate(rows[1:], start=2):
            if len(row) != len(COLUMNS):
                raise TraceFormatError(f"line {n}: expected {len(COLUMNS)} fields, got {len(row)}")
            try:
                at, seq = int(row[0]), int(row[1])
            except ValueError as exc:
                raise TraceFormatError(f"line {n}: non-integer time or seq") from exc
            if row[2] not in KINDS:
                raise TraceFormatError(f"line {n}: unknown event kind {row[2]!r}")
            events.append(Event(at, seq, row[2], row[3], row[4], row[5], row[6],
                                tuple(x for x in row[7].split(";") if x), row[8], row[9]))
        return cls(events)

    @classmethod
    def read(cls, path: str | Path) -> Trace:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


@dataclass
class RunResult:
    trace: Trace
    status: str  # completed | incomplete | t_max
    jobs: dict[str, str]
    mode: str = "decentralized"
    engine: Any = None

    @property
    def ok(self) -> bool:
        return self.status == "completed"


def fingerprint(s: Scenario) -> str:
    from .scenario import dumps_scenario

    return hashlib.sha256(dumps_scenario(s).encode()).hexdigest()[:16]


class EventQueue:
    """Min-heap on ``(at, seq)``; ``seq`` grows with every schedule call."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, Callable[[int], None]]] = []
        self._seq = itertools.count()
        self.now = 0

    def schedule(self, at: int, action: Callable[[int], None]) -> int:
        if at < self.now:
            raise ProtocolError(f"event scheduled in the past: {at} < {self.now}")
        seq = next(self._seq)
        heapq.heappush(self._heap, (at, seq, action))
        return seq

    def advance(self) -> bool:
        """Pop and run one event; False on quiescence."""
        if not self._heap:
            return False
        at, _, action = heapq.heappop(self._heap)
        self.now = at
        action(at)
        return True

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


class _Recorder:
    def __init__(self) -> None:
        self.events: list[Event] = []
        self._seq = itertools.count()

    def emit(self, kind: str, at: int, agent=None, robot: str = "", job: str = "", task: str = "",
             resources: Iterable[str] = (), state_from: StateId | str = "",
             state_to: StateId | str = "") -> None:
        agent_id = ""
        if agent is not None:
            agent_id = agent if isinstance(agent, str) else agent.agent_id
            if not job and isinstance(agent, MobileAgent):
                job = agent.job_id
        self.events.append(Event(at, next(self._seq), kind, agent_id, robot, job, task,
                                 tuple(sorted(resources)), str(state_from), str(state_to)))


# -- decentralized engine ----------------------------------------------------


class Engine(_Recorder):
    """The world the agents live in."""

    def __init__(self, scenario: Scenario) -> None:
        super().__init__()
        self.scenario = scenario
        cfg = scenario.engine
        self.seed = cfg.seed
        self.hop_latency = cfg.hop_latency
        self.return_latency = cfg.return_latency
        self.t_max = cfg.t_max
        self.queue = EventQueue()
        self.topology: Topology = scenario.build_topology()
        self.workflow = scenario.workflow_tasks()
        seq = tuple(t.task_id for t in self.workflow)
        self.robots: dict[str, RobotNode] = {
            r.robot_id: new_robot(r.robot_id, seq, r.battery, r.battery_threshold)
            for r in scenario.robot_specs()}
        self.table = ResourceTable()
        self.jdist = JobDistributor(JD_NODE, cfg.ordered_admission, tuple(self.workflow))
        self.agents: dict[str, MobileAgent] = {}
        self.seq_agents: dict[str, SequenceAgent] = {}
        self.parked: dict[str, Any] = {}
        self._epoch: dict[str, int] = {}
        self._reach: dict[str, frozenset[str]] = {}
        self._cap: int | None = None
        self._seq_ids = itertools.count(1)
        self.removed_at: dict[str, int] = {}
        for job in scenario.all_jobs():
            self.queue.schedule(job.arrival_time, lambda now, j=job: self._arrive(j, now))
        for iv in sorted(scenario.interventions, key=lambda i: i.at):
            self.queue.schedule(iv.at, lambda now, i=iv: self._intervene(i, now))

    # -- scheduling ----------------------------------------------------

    def schedule(self, at: int, action: Callable[[int], None]) -> int:
        return self.queue.schedule(at, action)

    def schedule_agent(self, agent, at: int) -> None:
        epoch = self._epoch.get(agent.agent_id, 0)
        step = seq_agent_step if isinstance(agent, SequenceAgent) else agent_step

        def fire(now: int) -> None:
            if self._epoch.get(agent.agent_id, 0) == epoch:
                step(agent, self, now)

        self.queue.schedule(at, fire)

    def _cancel(self, agent) -> None:
        self._epoch[agent.agent_id] = self._epoch.get(agent.agent_id, 0) + 1

    def run(self) -> RunResult:
        status = "completed"
        while True:
            nxt = self.queue.peek_time()
            if nxt is None:
                break
            if nxt > self.t_max:
                status = "t_max"
                break
            self.queue.advance()
        jobs = {jid: rec.status for jid, rec in self.jdist.jobs.items()}
        if status == "completed" and (any(s != "done" for s in jobs.values()) or self.jdist.ledger.pending):
            status = "incomplete"
        trace = Trace(self.events, fingerprint(self.scenario))
        return RunResult(trace, status, jobs, "decentralized", self)

    # -- world services used by agents ------------------------------------

    def acquire(self, robot: RobotNode, resources: frozenset[str]) -> None:
        self.table.acquire(robot, resources)

    def release(self, robot: RobotNode, resources: frozenset[str]) -> None:
        self.table.release(robot, resources)

    def is_usable(self, node: str) -> bool:
        if node not in self.topology:
            return False
        robot = self.robots.get(node)
        return robot is None or robot.active

    def _topology_changed(self) -> None:
        self._reach.clear()
        self._cap = None

    def reachable_robots(self, node: str) -> frozenset[str]:
        hit = self._reach.get(node)
        if hit is None:
            reach = self.topology.reachable(node) if node in self.topology else {node}
            hit = frozenset(r for r in reach if r in self.robots and self.robots[r].active)
            self._reach[node] = hit
        return hit

    def hop_cap(self) -> int:
        if self._cap is None:
            v = len(self.topology.kinds)
            self._cap = v * (self.topology.diameter() + 1) + v
        return self._cap

    def park(self, agent, now: int) -> None:
        agent.phase = Parked(agent.location)
        self.parked[agent.agent_id] = agent

    def _wake(self, agent, now: int) -> None:
        self.parked.pop(agent.agent_id, None)
        agent.phase = Inspecting(agent.location)
        agent.hops_since_wake = 0
        self.schedule_agent(agent, now)

    def _wake_all(self, now: int) -> None:
        for aid in sorted(self.parked, key=_id_key):
            agent = self.parked[aid]
            if isinstance(agent, MobileAgent):
                agent.swept.clear()
            self._wake(agent, now)

    def relocate(self, agent, now: int) -> None:
        """Bring a stranded agent back to the distributor node."""
        self.parked.pop(agent.agent_id, None)
        agent.location = JD_NODE
        agent.phase = Inspecting(JD_NODE)
        agent.hops_since_wake = 0
        if isinstance(agent, MobileAgent):
            agent.swept.clear()
        at = now + self.return_latency
        epoch = self._epoch.get(agent.agent_id, 0)
        self.queue.schedule(at, lambda t: self.emit("AgentHop", t, agent=agent, robot=JD_NODE)
                            if self._epoch.get(agent.agent_id, 0) == epoch else None)
        self.schedule_agent(agent, at)

    def robot_settled(self, robot: RobotNode, now: int, by: str) -> None:
        """``robot`` finished a task and sits idle in its new state."""
        if robot.retiring and robot.state.is_free:
            self._finalize_removal(robot, now)
            return
        self._robot_available(robot, now)

    def _robot_available(self, robot: RobotNode, now: int) -> None:
        for aid in sorted(self.agents, key=_id_key):
            agent = self.agents[aid]
            if agent.sought != robot.state:
                continue
            agent.swept.discard(robot.node_id)
            if isinstance(agent.phase, Parked):
                self._wake(agent, now)

    def drain_battery(self, robot: RobotNode, ticks: int) -> None:
        if robot.battery is None:
            return
        robot.battery -= ticks
        if robot.battery <= robot.battery_threshold:
            robot.retiring = True

    def agent_returned(self, agent: MobileAgent, now: int, failed: bool) -> None:
        self.emit("AgentReturn", now, agent=agent, robot=JD_NODE,
                  resources=agent.assignment.resource_claim)
        agent.phase = Gone()
        self.agents.pop(agent.agent_id, None)
        released = self.jdist.on_agent_return(agent.agent_id, now, agent.chain_done, failed)
        self._after_jdist(released, now)

    def _after_jdist(self, released: list[MobileAgent], now: int) -> None:
        for aid in self.jdist.drain_recalls():
            agent = self.agents.pop(aid, None)
            if agent is None:
                continue
            if isinstance(agent.phase, Resident):
                raise ProtocolError(f"recalled {aid} while it executes on {agent.phase.robot}")
            self._cancel(agent)
            self.parked.pop(aid, None)
            agent.phase = Gone()
            self.emit("AgentReturn", now, agent=agent, robot=JD_NODE,
                      resources=agent.assignment.resource_claim)
        for agent in released:
            self._launch(agent, now)

    def _launch(self, agent: MobileAgent, now: int) -> None:
        agent.rng = substream(self.seed, agent.agent_id)
        agent.location = JD_NODE
        agent.phase = Inspecting(JD_NODE)
        self.agents[agent.agent_id] = agent
        self.emit("AgentHop", now, agent=agent, robot=JD_NODE, resources=agent.assignment.resource_claim)
        self.schedule_agent(agent, now)

    # -- job stream and interventions ----------------------------------

    def _arrive(self, job: JobSpec | WorkflowJob, now: int) -> None:
        if isinstance(job, WorkflowJob):
            job = self.jdist.workflow_job(job.job_id, job.arrival_time)
        self.emit("JobArrival", now, job=job.job_id)
        self._after_jdist(self.jdist.submit_job(job, now), now)

    def _intervene(self, iv, now: int) -> None:
        if isinstance(iv, SeqEditAt):
            self.release_seq_edit(iv.edit, now)
        elif isinstance(iv, RobotRemoveAt):
            self.remove_robot(iv.robot_id, iv.policy, now)
        elif isinstance(iv, RobotAddAt):
            self.add_robot(iv.robot, now, iv.connect)

    def release_seq_edit(self, edit, now: int) -> SequenceAgent:
        from .agents import Delete, Insert, Reorder

        if isinstance(edit, Insert):
            released = self.jdist.insert_task(edit.after_task, edit.task, now)
            label = edit.task.task_id
        elif isinstance(edit, Delete):
            resident = {a.agent_id for a in self.agents.values() if isinstance(a.phase, Resident)}
            released = self.jdist.delete_task(edit.task_id, now, resident)
            label = edit.task_id
        else:
            self.jdist.reorder(list(edit.sequence))
            released = []
            label = ">".join(edit.sequence)
        agent = SequenceAgent(f"seq{next(self._seq_ids)}", edit, JD_NODE,
                              {r for r, node in self.robots.items() if node.active})
        self.seq_agents[agent.agent_id] = agent
        self.emit("SeqEdit", now, agent=agent, robot=JD_NODE, task=label)
        self._after_jdist(released, now)
        self.schedule_agent(agent, now)
        return agent

    def apply_seq_edit(self, agent: SequenceAgent, robot: RobotNode, now: int) -> None:
        from .agents import Delete

        old = robot.transition_db
        robot.transition_db = apply_edit(old, agent.edit)
        label = agent.edit.task_id if isinstance(agent.edit, Delete) else (
            agent.edit.task.task_id if hasattr(agent.edit, "task") else ">".join(agent.edit.sequence))
        self.emit("SeqEdit", now, agent=agent, robot=robot.node_id, task=label)
        st = robot.state
        if (isinstance(agent.edit, Delete) and robot.executing is None and not st.is_free
                and st.task_id == agent.edit.task_id):
            # the deleted task will never come: skip ahead along the old sequence
            nxt = FREE
            if st.task_id in old:
                for t in old[old.index(st.task_id) + 1:]:
                    if t not in robot.done_tasks and t in robot.transition_db:
                        nxt = StateId(st.job_id, t)
                        break
            robot.set_state(nxt)
            self.emit("StateUpdate", now, agent=agent, robot=robot.node_id, job=st.job_id,
                      task=st.task_id, state_from=st, state_to=nxt)
            if nxt.is_free:
                self._after_jdist(self.jdist.finish_chain(st.job_id, now), now)
            self.robot_settled(robot, now, agent.agent_id)

    def seq_agent_done(self, agent: SequenceAgent, now: int) -> None:
        self.seq_agents.pop(agent.agent_id, None)

    # -- robot population -------------------------------------------------

    def remove_robot(self, robot_id: str, policy: RemovalPolicy, now: int) -> None:
        robot = self.robots.get(robot_id)
        if robot is None:
            raise ValidationError(f"unknown robot {robot_id!r}")
        if not robot.active:
            raise ValidationError(f"robot {robot_id!r} is already removed")
        policy = RemovalPolicy(policy)
        idle_free = robot.state.is_free and robot.executing is None
        if policy is RemovalPolicy.AFTER_CURRENT_JOB and not idle_free:
            robot.retiring = True
            return
        if robot.executing is not None:
            agent = self.agents[robot.executing]
            task = agent.current.task
            self._cancel(agent)
            self.emit("RobotRemove", now, agent=agent, robot=robot_id, task=task.task_id,
                      resources=task.resource_ids)
            self.table.release(robot, task.resource_ids)
            self.emit("ResourceRelease", now, agent=agent, robot=robot_id, task=task.task_id,
                      resources=task.resource_ids)
            robot.executing = None
            if agent.current.match_state.is_free and robot.state.is_free:
                robot.bound_job = None  # nothing of the job ran here yet
            abort(agent, self, now)
        if robot.bound_job is not None:
            self._after_jdist(self.jdist.fail_job(robot.bound_job, now), now)
        self._finalize_removal(robot, now)

    def _finalize_removal(self, robot: RobotNode, now: int) -> None:
        if robot.held_resources:
            self.table.release_all(robot)
        robot.state = FREE
        robot.bound_job = None
        robot.done_tasks.clear()
        robot.status = RobotStatus.REMOVED
        robot.retiring = False
        self.removed_at[robot.node_id] = now
        self.emit("RobotRemove", now, robot=robot.node_id)
        self.topology.isolate(robot.node_id)
        self._topology_changed()
        for aid in sorted(self.parked, key=_id_key):
            agent = self.parked[aid]
            if agent.location == robot.node_id:
                self.relocate(agent, now)
        self._wake_all(now)

    def add_robot(self, spec: RobotSpec, now: int, connect: Iterable[str] = (JD_NODE,)) -> str:
        if spec.robot_id in self.topology or spec.robot_id in self.robots:
            raise ValidationError(f"duplicate node id {spec.robot_id!r}")
        seq = tuple(t.task_id for t in self.jdist.workflow)
        robot = new_robot(spec.robot_id, seq, spec.battery, spec.battery_threshold)
        self.topology.add_node(spec.robot_id, NodeKind.ROBOTIC)
        for n in connect:
            if n in self.topology and self.is_usable(n):
                self.topology.connect(spec.robot_id, n)
        self.robots[spec.robot_id] = robot
        self._topology_changed()
        self.emit("RobotAdd", now, robot=spec.robot_id)
        self._wake_all(now)
        return spec.robot_id


def _id_key(s: str) -> tuple[str, int]:
    head = s.rstrip("0123456789")
    tail = s[len(head):]
    return (head, int(tail) if tail else -1)


def run(scenario: Scenario) -> RunResult:
    """Run the decentralized protocol to quiescence or ``t_max``."""
    return Engine(scenario).run()


# -- centralized baseline ----------------------------------------------------


@dataclass
class CentralServerModel:
    """Single FIFO server. Every message received or sent costs ``service_time``."""

    service_time: int = 5
    message_latency: int = 1
    inbox: list = field(default_factory=list)
    busy_until: int = 0
    holder: dict[str, str] = field(default_factory=dict)  # permission table
    messages: int = 0


class CentralEngine(_Recorder):
    """Centralized coordination: robots ask the server before every task.

    A robot that finishes a task reports completion, which doubles as the
    request for its next task (or for new work). The server grants a task
    once its resources are free in the permission table, then broadcasts the
    updated table to every client so each node keeps a consistent view.
    """

    SERVER = "server"

    def __init__(self, scenario: Scenario) -> None:
        super().__init__()
        self.scenario = scenario
        cfg = scenario.engine
        self.seed = cfg.seed
        self.t_max = cfg.t_max
        self.queue = EventQueue()
        self.server = CentralServerModel(cfg.central_service_time, cfg.message_latency)
        self.robots = [r.robot_id for r in scenario.robot_specs()]
        self.table = ResourceTable()
        self.nodes = {r: new_robot(r) for r in self.robots}
        self.clients = len(self.robots) + len(scenario.resource_specs())
        self.workflow = scenario.workflow_tasks()
        self.chains: list[tuple[str, tuple[TaskSpec, ...]]] = []  # arrived, unassigned
        self.waiting: list[tuple[str, str, tuple[TaskSpec, ...], int]] = []  # robot, job, chain, idx
        self.idle: list[str] = []
        self.jobs: dict[str, dict] = {}
        self._processing = False
        for job in scenario.all_jobs():
            self.queue.schedule(job.arrival_time, lambda now, j=job: self._job(j, now))
        for r in self.robots:
            self.queue.schedule(0, lambda now, r=r: self._robot_send(r, ("idle", r), now))

    def run(self) -> RunResult:
        status = "completed"
        while True:
            nxt = self.queue.peek_time()
            if nxt is None:
                break
            if nxt > self.t_max:
                status = "t_max"
                break
            self.queue.advance()
        jobs = {j: ("done" if v["left"] == 0 else "pending") for j, v in self.jobs.items()}
        if status == "completed" and any(v != "done" for v in jobs.values()):
            status = "incomplete"
        return RunResult(Trace(self.events, fingerprint(self.scenario)), status, jobs, "centralized", self)

    def _job(self, job, now: int) -> None:
        if isinstance(job, WorkflowJob):
            job = JobSpec(job.job_id, (tuple(self.workflow),), job.arrival_time)
        self.emit("JobArrival", now, job=job.job_id)
        merged = merge_chains(job)
        self.jobs[job.job_id] = {"left": len(merged)}
        self.chains.extend((job.job_id, c) for c in merged)
        self._server_deliver(("arrival", job.job_id), now)

    # messages --------------------------------------------------------

    def _robot_send(self, robot: str, msg: tuple, now: int) -> None:
        self.emit("CentralMsgSend", now, robot=robot, job=_msg_job(msg), task=_msg_task(msg))
        self.server.messages += 1
        self.queue.schedule(now + self.server.message_latency,
                            lambda t: self._server_deliver(msg, t))

    def _server_deliver(self, msg: tuple, now: int) -> None:
        self.server.inbox.append(msg)
        if not self._processing:
            self._serve(now)

    def _serve(self, now: int) -> None:
        """Process the head of the inbox; one message at a time."""
        if not self.server.inbox:
            self._processing = False
            return
        self._processing = True
        msg = self.server.inbox.pop(0)
        cost = self.server.service_time if msg[0] != "arrival" else 0
        self.queue.schedule(now + cost, lambda t: self._handle(msg, t))

    def _handle(self, msg: tuple, now: int) -> None:
        kind = msg[0]
        broadcast = False
        if kind != "arrival":
            self.emit("CentralMsgRecv", now, agent=self.SERVER, robot=msg[1],
                      job=_msg_job(msg), task=_msg_task(msg))
        if kind == "idle":
            self.idle.append(msg[1])
        elif kind == "done":
            _, robot, job, chain, idx = msg
            for r in chain[idx].resource_ids:
                del self.server.holder[r]
            broadcast = True
            if idx + 1 < len(chain):
                self.waiting.append((robot, job, chain, idx + 1))
            else:
                self.jobs[job]["left"] -= 1
                self.idle.append(robot)
        grants = self._grants()
        t = now
        for robot, job, chain, idx in grants:
            t += self.server.service_time
            self._server_send(robot, job, chain, idx, t)
        if broadcast and self.clients:
            t += self.server.service_time * self.clients
            self.server.messages += self.clients
            self.emit("CentralMsgSend", t, agent=self.SERVER, robot="*")
        self.queue.schedule(t, self._serve)

    def _grants(self) -> list[tuple[str, str, tuple[TaskSpec, ...], int]]:
        out = []
        holder = self.server.holder
        blocked: set[str] = set()
        for item in list(self.waiting):
            robot, job, chain, idx = item
            need = chain[idx].resource_ids
            if not need & blocked and not any(r in holder for r in need):
                for r in need:
                    holder[r] = robot
                self.waiting.remove(item)
                out.append(item)
            blocked |= need
        for job, chain in list(self.chains):
            if not self.idle:
                break
            need = chain[0].resource_ids
            if not need & blocked and not any(r in holder for r in need):
                robot = self.idle.pop(0)
                for r in need:
                    holder[r] = robot
                self.chains.remove((job, chain))
                out.append((robot, job, chain, 0))
            blocked |= need
        return out

    def _server_send(self, robot: str, job: str, chain, idx: int, now: int) -> None:
        task = chain[idx]
        self.server.messages += 1
        self.emit("CentralMsgSend", now, agent=self.SERVER, robot=robot, job=job, task=task.task_id)
        self.queue.schedule(now + self.server.message_latency,
                            lambda t: self._granted(robot, job, chain, idx, t))

    def _granted(self, robot: str, job: str, chain, idx: int, now: int) -> None:
        task = chain[idx]
        node = self.nodes[robot]
        self.emit("CentralMsgRecv", now, agent=self.SERVER, robot=robot, job=job, task=task.task_id)
        self.table.acquire(node, task.resource_ids)
        self.emit("ResourceAcquire", now, robot=robot, job=job, task=task.task_id, resources=task.resource_ids)
        self.emit("ExecBegin", now, robot=robot, job=job, task=task.task_id, resources=task.resource_ids)
        rng = substream(self.seed, f"central:{job}:{task.task_id}")
        self.queue.schedule(now + sample_duration(task, rng),
                            lambda t: self._finished(robot, job, chain, idx, t))

    def _finished(self, robot: str, job: str, chain, idx: int, now: int) -> None:
        task = chain[idx]
        node = self.nodes[robot]
        self.emit("ExecEnd", now, robot=robot, job=job, task=task.task_id, resources=task.resource_ids)
        self.table.release(node, task.resource_ids)
        self.emit("ResourceRelease", now, robot=robot, job=job, task=task.task_id, resources=task.resource_ids)
        before = node.state
        after = StateId(job, chain[idx + 1].task_id) if idx + 1 < len(chain) else FREE
        node.set_state(after)
        self.emit("StateUpdate", now, robot=robot, job=job, task=task.task_id, state_from=before, state_to=after)
        self._robot_send(robot, ("done", robot, job, chain, idx), now)


def _msg_job(msg: tuple) -> str:
    return msg[2] if msg[0] == "done" else ""


def _msg_task(msg: tuple) -> str:
    return msg[3][msg[4]].task_id if msg[0] == "done" else ""


def run_centralized(scenario: Scenario) -> RunResult:
    """Run the same workload under the single-server baseline."""
    return CentralEngine(scenario).run()


def run_mode(scenario: Scenario, mode: str | None = None) -> list[RunResult]:
    mode = mode or scenario.engine.mode
    if mode == "decentralized":
        return [run(scenario)]
    if mode == "centralized":
        return [run_centralized(scenario)]
    if mode == "both":
        return [run(scenario), run_centralized(scenario)]
    raise ValidationError(f"unknown mode {mode!r}")
