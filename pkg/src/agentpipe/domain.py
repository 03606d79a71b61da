"""Core vocabulary: tasks, jobs, robot states, SI chains and node kinds.

All types here are immutable. Constructors validate their invariants and raise
:class:`ValidationError` naming the violated rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Union


class ValidationError(ValueError):
    """Raised when a value violates a domain invariant."""


class ProtocolError(RuntimeError):
    """Raised when the coordination protocol reaches a state it should never reach."""


def _require(cond: bool, rule: str) -> None:
    if not cond:
        raise ValidationError(rule)


# -- durations ---------------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    """Deterministic execution time in ticks."""

    ticks: int

    def __post_init__(self) -> None:
        _require(isinstance(self.ticks, int) and self.ticks > 0,
                 f"Fixed duration must be a positive integer, got {self.ticks!r}")

    def scaled(self, factor: int) -> Fixed:
        return Fixed(self.ticks * factor)


@dataclass(frozen=True)
class Jitter:
    """Uniform integer duration in ``[base - spread, base + spread]``."""

    base: int
    spread: int

    def __post_init__(self) -> None:
        _require(isinstance(self.base, int) and self.base > 0,
                 f"Jitter base must be a positive integer, got {self.base!r}")
        _require(isinstance(self.spread, int) and self.spread >= 0,
                 f"Jitter spread must be a non-negative integer, got {self.spread!r}")
        _require(self.spread < self.base,
                 f"Jitter spread {self.spread} must be smaller than base {self.base}")

    def scaled(self, factor: int) -> Jitter:
        return Jitter(self.base * factor, self.spread * factor)


DurationModel = Union[Fixed, Jitter]


# -- tasks and jobs ----------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    resource_ids: frozenset[str]
    duration: DurationModel
    program_tag: str = ""

    def __post_init__(self) -> None:
        _require(bool(self.task_id), "task_id must be non-empty")
        object.__setattr__(self, "resource_ids", frozenset(self.resource_ids))
        _require(len(self.resource_ids) > 0,
                 f"task {self.task_id}: resource_ids must be non-empty")
        _require(isinstance(self.duration, (Fixed, Jitter)),
                 f"task {self.task_id}: duration must be Fixed or Jitter")


@dataclass(frozen=True)
class JobSpec:
    """A job: independent chains of sequential tasks.

    ``follows_workflow`` marks repetitive jobs whose successor states are taken
    from each robot's transition database, so sequence edits reach them.
    """

    job_id: str
    chains: tuple[tuple[TaskSpec, ...], ...]
    arrival_time: int = 0
    follows_workflow: bool = False

    def __post_init__(self) -> None:
        _require(bool(self.job_id), "job_id must be non-empty")
        chains = tuple(tuple(c) for c in self.chains)
        object.__setattr__(self, "chains", chains)
        _require(len(chains) > 0, f"job {self.job_id}: at least one chain is required")
        _require(all(len(c) > 0 for c in chains),
                 f"job {self.job_id}: every chain must be non-empty")
        ids = [t.task_id for c in chains for t in c]
        _require(len(ids) == len(set(ids)),
                 f"job {self.job_id}: task_ids must be unique within a job")
        _require(isinstance(self.arrival_time, int) and self.arrival_time >= 0,
                 f"job {self.job_id}: arrival_time must be a non-negative integer")

    @property
    def tasks(self) -> list[TaskSpec]:
        return [t for c in self.chains for t in c]


# -- states and SI chains ----------------------------------------------------


@dataclass(frozen=True)
class StateId:
    """Robot state: the free state, or waiting to run ``task_id`` of ``job_id``."""

    job_id: str | None = None
    task_id: str | None = None

    def __post_init__(self) -> None:
        _require((self.job_id is None) == (self.task_id is None),
                 "StateId is either free (no job, no task) or carries both")

    @property
    def is_free(self) -> bool:
        return self.job_id is None

    def __str__(self) -> str:
        return "S*" if self.is_free else f"{self.job_id}:{self.task_id}"

    @classmethod
    def parse(cls, text: str) -> StateId:
        if text == "S*":
            return FREE
        job, sep, task = text.partition(":")
        _require(bool(sep) and bool(job) and bool(task), f"malformed state label {text!r}")
        return cls(job, task)


FREE = StateId()


@dataclass(frozen=True)
class SIStep:
    match_state: StateId
    task: TaskSpec
    next_state: StateId


@dataclass(frozen=True)
class SIChain:
    """Full state-information program of one chain: free -> ... -> free."""

    steps: tuple[SIStep, ...]

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        _require(len(steps) > 0, "SIChain must have at least one step")
        _require(steps[0].match_state.is_free, "SIChain must start from the free state")
        _require(steps[-1].next_state.is_free, "SIChain must end in the free state")
        for k in range(len(steps) - 1):
            _require(steps[k].next_state == steps[k + 1].match_state,
                     f"SIChain discontinuity between steps {k} and {k + 1}")

    @classmethod
    def for_tasks(cls, job_id: str, tasks: Iterable[TaskSpec]) -> SIChain:
        tasks = list(tasks)
        states = [FREE] + [StateId(job_id, t.task_id) for t in tasks[1:]] + [FREE]
        return cls(tuple(SIStep(states[i], t, states[i + 1]) for i, t in enumerate(tasks)))


# -- nodes and resources -----------------------------------------------------


class NodeKind(str, Enum):
    ROBOTIC = "robotic"
    SHARED_RESOURCE = "shared_resource"
    SECONDARY = "secondary"
    JOB_DISTRIBUTOR = "job_distributor"


@dataclass(frozen=True)
class ResourceSpec:
    resource_id: str
    host_node: str | None = None

    def __post_init__(self) -> None:
        _require(bool(self.resource_id), "resource_id must be non-empty")


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    kind: NodeKind

    def __post_init__(self) -> None:
        _require(bool(self.node_id), "node_id must be non-empty")
        object.__setattr__(self, "kind", NodeKind(self.kind))


def check_unique_distributor(nodes: Iterable[NodeSpec]) -> None:
    count = sum(1 for n in nodes if n.kind is NodeKind.JOB_DISTRIBUTOR)
    _require(count == 1, f"exactly one JobDistributor node is required, found {count}")


def check_unique_resources(resources: Iterable[ResourceSpec]) -> None:
    ids = [r.resource_id for r in resources]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    _require(not dup, f"duplicate resource ids: {dup}")

