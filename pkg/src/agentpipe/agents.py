"""Mobile agents and the sequence agent.

An agent is a small state machine. Each call to :func:`agent_step` performs a
single protocol transition and asks the world to schedule the next one. The
world (the engine) owns the topology, the robots, the resource table, the
trace and the clock.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol, Union

from .domain import FREE, Fixed, Jitter, ProtocolError, SIStep, StateId, TaskSpec
from .network import NoRoute, VisitHistory, next_hop_conscientious
from .robots import Busy, RobotNode

if TYPE_CHECKING:
    from .jobdist import AgentAssignment


# -- phases ------------------------------------------------------------------


@dataclass(frozen=True)
class Migrating:
    toward: str
    arrive_at: int


@dataclass(frozen=True)
class Inspecting:
    at: str


@dataclass(frozen=True)
class Resident:
    robot: str
    step_index: int
    until: int
    began: int = 0


@dataclass(frozen=True)
class Returning:
    arrive_at: int
    failed: bool = False


@dataclass(frozen=True)
class Parked:
    """Every reachable robot was inspected without a match; sleep until woken."""

    at: str


@dataclass(frozen=True)
class Gone:
    """Returned, recalled or terminated."""


Phase = Union[Migrating, Inspecting, Resident, Returning, Parked, Gone]


def substream(seed: int, key: str) -> random.Random:
    """Independent RNG stream for one agent, stable across runs and platforms."""
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def sample_duration(task: TaskSpec, rng: random.Random) -> int:
    d = task.duration
    if isinstance(d, Fixed):
        return d.ticks
    if isinstance(d, Jitter):
        return rng.randint(d.base - d.spread, d.base + d.spread)
    raise TypeError(f"unknown duration model {d!r}")


@dataclass
class MobileAgent:
    assignment: AgentAssignment
    location: str
    created_at: int = 0
    phase: Phase = field(default=None)  # type: ignore[assignment]
    step_cursor: int = 0
    history: VisitHistory = field(default_factory=VisitHistory)
    bound_job: str | None = None
    # robots inspected without a match since the agent last had reason to hope
    swept: set[str] = field(default_factory=set)
    hops_since_wake: int = 0
    rng: random.Random | None = None
    chain_done: bool = False  # set when the robot went free after our last step

    def __post_init__(self) -> None:
        if self.phase is None:
            self.phase = Inspecting(self.location)

    @property
    def agent_id(self) -> str:
        return self.assignment.agent_id

    @property
    def job_id(self) -> str:
        return self.assignment.job_id

    @property
    def steps(self) -> tuple[SIStep, ...]:
        return self.assignment.steps

    @property
    def current(self) -> SIStep:
        return self.steps[self.step_cursor]

    @property
    def sought(self) -> StateId | None:
        """Robot state this agent is looking for, or None when not searching."""
        if self.step_cursor >= len(self.steps) or isinstance(self.phase, (Resident, Returning, Gone)):
            return None
        return self.current.match_state

    def matches(self, robot: RobotNode) -> bool:
        if not robot.active or robot.executing is not None:
            return False
        step = self.current
        if robot.state != step.match_state:
            return False
        if step.match_state.is_free and robot.retiring:
            return False
        return robot.bound_job is None or robot.bound_job == self.job_id


# -- sequence agent ----------------------------------------------------------


@dataclass(frozen=True)
class Insert:
    after_task: str | None  # None inserts at the head of the sequence
    task: TaskSpec


@dataclass(frozen=True)
class Delete:
    task_id: str


@dataclass(frozen=True)
class Reorder:
    sequence: tuple[str, ...]


Edit = Union[Insert, Delete, Reorder]


def apply_edit(db: tuple[str, ...], edit: Edit) -> tuple[str, ...]:
    """The transition database after ``edit``; unknown anchors leave it unchanged."""
    if isinstance(edit, Insert):
        if edit.task.task_id in db:
            return db
        if edit.after_task is None:
            return (edit.task.task_id,) + db
        if edit.after_task not in db:
            return db
        i = db.index(edit.after_task) + 1
        return db[:i] + (edit.task.task_id,) + db[i:]
    if isinstance(edit, Delete):
        return tuple(t for t in db if t != edit.task_id)
    if isinstance(edit, Reorder):
        return tuple(edit.sequence)
    raise TypeError(f"unknown edit {edit!r}")


@dataclass
class SequenceAgent:
    agent_id: str
    edit: Edit
    location: str
    pending_robots: set[str]
    visited: set[str] = field(default_factory=set)
    history: VisitHistory = field(default_factory=VisitHistory)
    phase: Phase = field(default=None)  # type: ignore[assignment]
    hops_since_wake: int = 0

    def __post_init__(self) -> None:
        if self.phase is None:
            self.phase = Inspecting(self.location)

    @property
    def finished(self) -> bool:
        return self.pending_robots <= self.visited


# -- world interface -----------------------------------------------------------


class World(Protocol):
    """What agents need from the engine."""

    topology: object
    robots: dict[str, RobotNode]
    hop_latency: int
    return_latency: int

    def emit(self, kind: str, at: int, **fields) -> None: ...
    def schedule_agent(self, agent, at: int) -> None: ...
    def acquire(self, robot: RobotNode, resources: frozenset[str]) -> None: ...
    def release(self, robot: RobotNode, resources: frozenset[str]) -> None: ...
    def robot_settled(self, robot: RobotNode, at: int, by: str) -> None: ...
    def reachable_robots(self, node: str) -> frozenset[str]: ...
    def hop_cap(self) -> int: ...
    def park(self, agent, at: int) -> None: ...
    def apply_seq_edit(self, agent: SequenceAgent, robot: RobotNode, at: int) -> None: ...
    def relocate(self, agent, at: int) -> None: ...


# -- transitions -------------------------------------------------------------


def _depart(agent, world: World, now: int) -> None:
    """Leave the current node toward the least recently visited neighbour."""
    try:
        nxt = next_hop_conscientious(world.topology, agent.history, agent.location, now)
    except NoRoute:
        if not world.is_usable(agent.location):
            world.relocate(agent, now)
            return
        world.park(agent, now)
        return
    agent.hops_since_wake += 1
    agent.phase = Migrating(nxt, now + world.hop_latency)
    world.schedule_agent(agent, now + world.hop_latency)


def _begin(agent: MobileAgent, robot: RobotNode, world: World, now: int) -> None:
    step = agent.current
    task = step.task
    try:
        world.acquire(robot, task.resource_ids)
    except Busy as exc:
        raise ProtocolError(f"{agent.agent_id} on {robot.node_id}: {exc}") from exc
    world.emit("ResourceAcquire", now, agent=agent, robot=robot.node_id, task=task.task_id,
               resources=task.resource_ids)
    robot.executing = agent.agent_id
    robot.bound_job = agent.job_id
    if agent.bound_job is None:
        agent.bound_job = agent.job_id
    dur = sample_duration(task, agent.rng)
    world.emit("ExecBegin", now, agent=agent, robot=robot.node_id, task=task.task_id,
               resources=task.resource_ids)
    agent.phase = Resident(robot.node_id, agent.step_cursor, now + dur, now)
    world.schedule_agent(agent, now + dur)


def agent_step(agent: MobileAgent, world: World, now: int) -> None:
    """Perform one protocol transition for ``agent`` at time ``now``."""
    phase = agent.phase
    if isinstance(phase, Migrating):
        if not world.is_usable(phase.toward):
            world.relocate(agent, now)
            return
        agent.location = phase.toward
        agent.phase = Inspecting(phase.toward)
        world.emit("AgentHop", now, agent=agent, robot=phase.toward)
        world.schedule_agent(agent, now)
    elif isinstance(phase, Inspecting):
        robot = world.robots.get(phase.at)
        if robot is not None and robot.active:
            world.emit("AgentInspect", now, agent=agent, robot=robot.node_id,
                       state_from=robot.state)
            if agent.matches(robot):
                _begin(agent, robot, world, now)
                return
            agent.swept.add(robot.node_id)
            reach = world.reachable_robots(phase.at)
            if reach <= agent.swept or agent.hops_since_wake > world.hop_cap():
                world.park(agent, now)
                return
        elif agent.hops_since_wake > world.hop_cap() or not world.reachable_robots(phase.at) - agent.swept:
            world.park(agent, now)
            return
        _depart(agent, world, now)
    elif isinstance(phase, Resident):
        _finish(agent, world.robots[phase.robot], world, now)
    elif isinstance(phase, Returning):
        world.agent_returned(agent, now, phase.failed)
    else:
        raise ProtocolError(f"{agent.agent_id} stepped in phase {phase!r}")


def _finish(agent: MobileAgent, robot: RobotNode, world: World, now: int) -> None:
    step = agent.current
    task = step.task
    world.emit("ExecEnd", now, agent=agent, robot=robot.node_id, task=task.task_id,
               resources=task.resource_ids)
    world.release(robot, task.resource_ids)
    world.emit("ResourceRelease", now, agent=agent, robot=robot.node_id, task=task.task_id,
               resources=task.resource_ids)
    world.drain_battery(robot, agent.phase.until - agent.phase.began)
    robot.executing = None
    robot.done_tasks.add(task.task_id)
    before = robot.state
    after = robot.next_state(agent.job_id, task.task_id, step.next_state,
                             agent.assignment.follows_workflow)
    robot.set_state(after)
    world.emit("StateUpdate", now, agent=agent, robot=robot.node_id, task=task.task_id,
               state_from=before, state_to=after)
    agent.step_cursor += 1
    agent.swept.clear()
    agent.hops_since_wake = 0
    if agent.step_cursor == len(agent.steps):
        agent.phase = Returning(now + world.return_latency)
        agent.chain_done = after.is_free
        world.schedule_agent(agent, now + world.return_latency)
        world.robot_settled(robot, now, agent.agent_id)
        return
    if agent.matches(robot):
        _begin(agent, robot, world, now)
        return
    world.robot_settled(robot, now, agent.agent_id)
    agent.phase = Inspecting(robot.node_id)
    _depart(agent, world, now)


def abort(agent: MobileAgent, world: World, now: int) -> None:
    """The robot hosting ``agent`` vanished mid-task.

    An agent that had not yet bound a robot to its job looks for another
    robot. One that was mid-chain cannot continue anywhere else and returns
    with a failure report.
    """
    assert isinstance(agent.phase, Resident)
    if agent.current.match_state.is_free:
        agent.swept.clear()
        agent.hops_since_wake = 0
        agent.phase = Inspecting(agent.location)
        world.relocate(agent, now)
    else:
        agent.phase = Returning(now + world.return_latency, failed=True)
        agent.chain_done = False
        world.schedule_agent(agent, now + world.return_latency)


def seq_agent_step(agent: SequenceAgent, world: World, now: int) -> None:
    """Visit robots one hop at a time, editing each database once."""
    phase = agent.phase
    if isinstance(phase, Migrating):
        if not world.is_usable(phase.toward):
            world.relocate(agent, now)
            return
        agent.location = phase.toward
        agent.phase = Inspecting(phase.toward)
        world.emit("AgentHop", now, agent=agent, robot=phase.toward)
        world.schedule_agent(agent, now)
        return
    if not isinstance(phase, Inspecting):
        raise ProtocolError(f"{agent.agent_id} stepped in phase {phase!r}")
    agent.pending_robots = {r for r in agent.pending_robots
                            if r in world.robots and world.robots[r].active}
    robot = world.robots.get(phase.at)
    if robot is not None and robot.node_id in agent.pending_robots and robot.node_id not in agent.visited:
        world.apply_seq_edit(agent, robot, now)
        agent.visited.add(robot.node_id)
    if agent.finished:
        agent.phase = Gone()
        world.seq_agent_done(agent, now)
        return
    if not (agent.pending_robots - agent.visited) & world.reachable_robots(phase.at):
        world.park(agent, now)
        return
    _depart(agent, world, now)
