"""Robotic nodes: state, transition database and resource holding."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .domain import FREE, ProtocolError, StateId, ValidationError


class RobotStatus(str, Enum):
    ACTIVE = "active"
    REMOVED = "removed"


class RemovalPolicy(str, Enum):
    AFTER_CURRENT_JOB = "after_current_job"
    IMMEDIATE = "immediate"


class Busy(Exception):
    """A requested resource is held by another robot."""

    def __init__(self, resource_id: str, holder: str) -> None:
        super().__init__(f"resource {resource_id!r} is held by {holder!r}")
        self.resource_id = resource_id
        self.holder = holder


@dataclass
class RobotNode:
    node_id: str
    state: StateId = FREE
    transition_db: tuple[str, ...] = ()
    held_resources: set[str] = field(default_factory=set)
    bound_job: str | None = None
    battery: int | None = None
    battery_threshold: int = 0
    status: RobotStatus = RobotStatus.ACTIVE
    retiring: bool = False
    # tasks of the bound job already executed here; guards against re-execution
    done_tasks: set[str] = field(default_factory=set)
    executing: str | None = None  # agent id while a task runs

    @property
    def active(self) -> bool:
        return self.status is RobotStatus.ACTIVE

    def set_state(self, new: StateId) -> None:
        if new.is_free and self.held_resources:
            raise ProtocolError(f"{self.node_id} enters the free state holding {sorted(self.held_resources)}")
        self.state = new
        if new.is_free:
            self.bound_job = None
            self.done_tasks.clear()

    def next_state(self, job_id: str, task_id: str, default: StateId, follows_workflow: bool) -> StateId:
        """Successor state after ``task_id`` of ``job_id`` completes here.

        Workflow jobs consult the local transition database and skip tasks the
        job already ran; other jobs (or tasks absent from the database) use the
        agent's carried ``default``.
        """
        if not follows_workflow or task_id not in self.transition_db:
            return default
        idx = self.transition_db.index(task_id)
        for nxt in self.transition_db[idx + 1:]:
            if nxt not in self.done_tasks and nxt != task_id:
                return StateId(job_id, nxt)
        return FREE


class ResourceTable:
    """System-wide view of which robot physically holds each resource."""

    def __init__(self) -> None:
        self.holder: dict[str, str] = {}

    def acquire(self, robot: RobotNode, resources: frozenset[str] | set[str]) -> None:
        """All-or-nothing acquisition; raises :class:`Busy` naming a conflict."""
        if not robot.active:
            raise ProtocolError(f"{robot.node_id} is not active")
        for r in sorted(resources):
            h = self.holder.get(r)
            if h is not None and h != robot.node_id:
                raise Busy(r, h)
        for r in resources:
            self.holder[r] = robot.node_id
            robot.held_resources.add(r)

    def release(self, robot: RobotNode, resources: frozenset[str] | set[str]) -> None:
        missing = sorted(r for r in resources if r not in robot.held_resources)
        if missing:
            raise ProtocolError(f"{robot.node_id} releases unheld resources {missing}")
        for r in resources:
            robot.held_resources.discard(r)
            del self.holder[r]

    def release_all(self, robot: RobotNode) -> frozenset[str]:
        held = frozenset(robot.held_resources)
        self.release(robot, held)
        return held


def acquire(robot: RobotNode, resources, table: ResourceTable) -> None:
    table.acquire(robot, frozenset(resources))


def release(robot: RobotNode, resources, table: ResourceTable) -> None:
    table.release(robot, frozenset(resources))


def new_robot(node_id: str, sequence: tuple[str, ...] = (), battery: int | None = None,
              battery_threshold: int = 0) -> RobotNode:
    if not node_id:
        raise ValidationError("robot id must be non-empty")
    return RobotNode(node_id, transition_db=tuple(sequence), battery=battery,
                     battery_threshold=battery_threshold)
