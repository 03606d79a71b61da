"""The Job Distributor: partitions jobs into agent assignments, keeps the
resource ledger, dispatches agents and takes them back.

Dispatch unit. Tasks whose resource sets overlap (transitively) form one
group and travel in one agent. Groups whose step ranges interleave inside a
chain are dispatched together as one *block*; a chain's blocks are released
in order.

Admission. With ``ordered_admission`` (the default) a block may leave only if

* every earlier block of its chain has left,
* its whole claim is unbound,
* no earlier pending block claims an overlapping resource, and
* for a chain's first block, every earlier chain with an overlapping claim
  has had its own first block come back.

Blocks with disjoint claims still overtake each other freely. Together these
rules keep a robot that waits for its next agent from ever depending, through
the ledger, on an agent that itself waits for a free robot.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

from .domain import FREE, ProtocolError, SIChain, SIStep, StateId, TaskSpec, JobSpec, ValidationError

if TYPE_CHECKING:
    from .agents import MobileAgent


@dataclass(frozen=True)
class TaskGroup:
    """Tasks of one merged chain that must travel in the same agent."""

    job_id: str
    chain_index: int
    si_chain: SIChain
    step_indices: tuple[int, ...]

    @property
    def steps(self) -> tuple[SIStep, ...]:
        return tuple(self.si_chain.steps[i] for i in self.step_indices)

    @property
    def tasks(self) -> tuple[TaskSpec, ...]:
        return tuple(s.task for s in self.steps)

    @cached_property
    def claim(self) -> frozenset[str]:
        return frozenset().union(*(t.resource_ids for t in self.tasks))


@dataclass(frozen=True)
class AgentAssignment:
    agent_id: str
    job_id: str
    chain_index: int
    steps: tuple[SIStep, ...]
    resource_claim: frozenset[str]
    follows_workflow: bool = False

    def __post_init__(self) -> None:
        union = frozenset().union(*(s.task.resource_ids for s in self.steps))
        if union != self.resource_claim:
            raise ValidationError(f"{self.agent_id}: claim {sorted(self.resource_claim)} "
                                  f"differs from task resources {sorted(union)}")


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return sorted(out.values())


def merge_chains(job: JobSpec) -> list[tuple[TaskSpec, ...]]:
    """Concatenate chains whose resource sets intersect, in chain-index order."""
    claims = [frozenset().union(*(t.resource_ids for t in c)) for c in job.chains]
    uf = _UnionFind(len(claims))
    for i, j in itertools.combinations(range(len(claims)), 2):
        if claims[i] & claims[j]:
            uf.union(i, j)
    return [tuple(t for i in members for t in job.chains[i]) for members in uf.groups()]


def partition_job(job: JobSpec) -> list[TaskGroup]:
    """Split a job into agent-sized groups.

    Chains sharing resources are merged first. Inside a merged chain the tasks
    are grouped by connected components of the resource-overlap relation.
    Disjoint tasks therefore get one agent each, and overlapping ones share a
    single agent that keeps their chain order.
    """
    out: list[TaskGroup] = []
    for ci, tasks in enumerate(merge_chains(job)):
        chain = SIChain.for_tasks(job.job_id, tasks)
        uf = _UnionFind(len(tasks))
        for i, j in itertools.combinations(range(len(tasks)), 2):
            if tasks[i].resource_ids & tasks[j].resource_ids:
                uf.union(i, j)
        for members in uf.groups():
            out.append(TaskGroup(job.job_id, ci, chain, tuple(members)))
    return out


def blocks_of(groups: list[TaskGroup]) -> list[list[TaskGroup]]:
    """Gather groups of one chain into contiguous, non-interleaving blocks."""
    spans = sorted(groups, key=lambda g: g.step_indices[0])
    blocks: list[list[TaskGroup]] = []
    end = -1
    for g in spans:
        lo, hi = g.step_indices[0], g.step_indices[-1]
        if blocks and lo <= end:
            blocks[-1].append(g)
            end = max(end, hi)
        else:
            blocks.append([g])
            end = hi
    return blocks


class ResourceLedger:
    """Which in-flight agent each resource is assigned to, plus the waiting queue."""

    def __init__(self) -> None:
        self.bound: dict[str, str] = {}
        self.pending: list[_Unit] = []

    def is_free(self, claim: frozenset[str]) -> bool:
        return self.bound.keys().isdisjoint(claim)

    def bind(self, agent_id: str, claim: frozenset[str]) -> None:
        clash = sorted(r for r in claim if r in self.bound)
        if clash:
            raise ProtocolError(f"{agent_id}: resources {clash} already bound to "
                                f"{[self.bound[r] for r in clash]}")
        for r in claim:
            self.bound[r] = agent_id

    def unbind(self, agent_id: str, claim: frozenset[str]) -> None:
        for r in claim:
            if self.bound.get(r) != agent_id:
                raise ProtocolError(f"{agent_id} does not hold ledger entry {r!r}")
            del self.bound[r]

    def holder_of(self, resource: str) -> str | None:
        return self.bound.get(resource)


@dataclass
class _Unit:
    """One dispatch block waiting in the ledger queue."""

    order: int
    job_id: str
    chain_index: int
    block_index: int  # -1 for units added by sequence edits
    groups: list[TaskGroup]
    follows_workflow: bool
    claim: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        self.claim = frozenset().union(*(g.claim for g in self.groups))


@dataclass
class _Chain:
    job_id: str
    index: int
    order: int
    claim: frozenset[str]
    n_blocks: int
    next_block: int = 0
    first_out: set[str] = field(default_factory=set)  # agents of block 0 still out
    first_back: bool = False
    done: bool = False
    failed: bool = False
    agents_out: set[str] = field(default_factory=set)

    @property
    def settled(self) -> bool:
        return self.first_back or self.done or self.failed


@dataclass
class JobRecord:
    spec: JobSpec
    chains: list[_Chain]
    status: str = "pending"  # pending | running | done | failed
    finished_at: int | None = None
    completed: set[str] = field(default_factory=set)  # tasks whose agents came back


class JobDistributor:
    """Single Job Distributor node (J_Dist)."""

    def __init__(self, node_id: str = "JD", ordered_admission: bool = True,
                 workflow: tuple[TaskSpec, ...] = ()) -> None:
        self.node_id = node_id
        self.ordered_admission = ordered_admission
        self.ledger = ResourceLedger()
        self.jobs: dict[str, JobRecord] = {}
        self.workflow: list[TaskSpec] = list(workflow)
        self.assignments: dict[str, AgentAssignment] = {}
        self._agent_chain: dict[str, _Chain] = {}
        self._chains: list[_Chain] = []
        self._universe: set[str] = set()  # every resource ever claimed
        self._order = itertools.count()
        self._agent_ids = itertools.count(1)
        self._recalls: list[str] = []

    # -- submission ------------------------------------------------------

    def workflow_job(self, job_id: str, arrival_time: int = 0) -> JobSpec:
        """A repetitive job built from the current global task sequence."""
        if not self.workflow:
            raise ValidationError("no workflow defined")
        return JobSpec(job_id, (tuple(self.workflow),), arrival_time, follows_workflow=True)

    def submit_job(self, job: JobSpec, now: int) -> list[MobileAgent]:
        if job.job_id in self.jobs:
            raise ValidationError(f"duplicate job_id {job.job_id!r}")
        groups = partition_job(job)
        chains: list[_Chain] = []
        for ci in sorted({g.chain_index for g in groups}):
            mine = [g for g in groups if g.chain_index == ci]
            blocks = blocks_of(mine)
            chain = _Chain(job.job_id, ci, next(self._order),
                           frozenset().union(*(g.claim for g in mine)), len(blocks))
            chains.append(chain)
            self._chains.append(chain)
            for bi, block in enumerate(blocks):
                unit = _Unit(next(self._order), job.job_id, ci, bi, block, job.follows_workflow)
                self._universe |= unit.claim
                self.ledger.pending.append(unit)
        self.jobs[job.job_id] = JobRecord(job, chains)
        return self.try_dispatch(now)

    # -- dispatch --------------------------------------------------------

    def _chain(self, job_id: str, index: int) -> _Chain:
        return self.jobs[job_id].chains[index]

    def _admissible(self, unit: _Unit, ahead: set[str], ahead_claims: set[frozenset[str]],
                    unsettled: list[_Chain]) -> bool:
        claim = unit.claim
        if not self.ledger.is_free(claim):
            return False
        if not self.ordered_admission:
            return claim not in ahead_claims
        chain = self._chain(unit.job_id, unit.chain_index)
        if unit.block_index >= 0 and unit.block_index != chain.next_block:
            return False
        if claim & ahead:
            return False
        if unit.block_index == 0:
            for other in unsettled:
                if other.order >= chain.order:
                    break
                if other.claim & chain.claim:
                    return False
        return True

    def try_dispatch(self, now: int) -> list[MobileAgent]:
        """Release every admissible pending block in one FIFO pass.

        A single pass is exact: releasing a block only binds more resources,
        except that it unlocks the next block of its own chain, which sits
        later in the queue and is therefore still ahead of the scan.
        """
        from .agents import MobileAgent

        released: list[MobileAgent] = []
        keep: list[_Unit] = []
        ahead: set[str] = set()
        ahead_claims: set[frozenset[str]] = set()
        unsettled = [c for c in self._chains if not c.settled]
        pending = self.ledger.pending
        for i, unit in enumerate(pending):
            if self.ordered_admission and len(ahead) == len(self._universe):
                keep.extend(pending[i:])  # every resource is queued for already
                break
            if self._admissible(unit, ahead, ahead_claims, unsettled):
                released.extend(MobileAgent(a, self.node_id, now) for a in self._release(unit))
            else:
                keep.append(unit)
                ahead |= unit.claim
                ahead_claims.add(unit.claim)
        self.ledger.pending = keep
        self._chains = unsettled  # settled is permanent
        return released

    def _release(self, unit: _Unit) -> list[AgentAssignment]:
        chain = self._chain(unit.job_id, unit.chain_index)
        if unit.block_index >= 0:
            chain.next_block = unit.block_index + 1
        record = self.jobs[unit.job_id]
        if record.status == "pending":
            record.status = "running"
        out = []
        for g in unit.groups:
            a = AgentAssignment(f"mu{next(self._agent_ids)}", unit.job_id, unit.chain_index,
                                g.steps, g.claim, unit.follows_workflow)
            self.ledger.bind(a.agent_id, a.resource_claim)
            self.assignments[a.agent_id] = a
            self._agent_chain[a.agent_id] = chain
            chain.agents_out.add(a.agent_id)
            if unit.block_index == 0:
                chain.first_out.add(a.agent_id)
            out.append(a)
        return out

    # -- returns ---------------------------------------------------------

    def on_agent_return(self, agent_id: str, now: int, chain_done: bool = False,
                        failed: bool = False) -> list[MobileAgent]:
        """Take an agent back, free its claim and dispatch whatever became possible."""
        assignment = self.assignments.pop(agent_id, None)
        if assignment is None:
            raise ProtocolError(f"unknown or already returned agent {agent_id!r}")
        self.ledger.unbind(agent_id, assignment.resource_claim)
        if not failed:
            self.jobs[assignment.job_id].completed.update(s.task.task_id for s in assignment.steps)
        chain = self._agent_chain.pop(agent_id)
        chain.agents_out.discard(agent_id)
        if agent_id in chain.first_out:
            chain.first_out.discard(agent_id)
            if not chain.first_out:
                chain.first_back = True
        if failed:
            self._close_chain(chain, now, failed=True)
        elif chain_done:
            self._close_chain(chain, now, failed=False)
        return self.try_dispatch(now)

    def _close_chain(self, chain: _Chain, now: int, failed: bool) -> None:
        chain.done = not failed
        chain.failed = failed
        self.ledger.pending = [u for u in self.ledger.pending
                               if not (u.job_id == chain.job_id and u.chain_index == chain.index)]
        for aid in sorted(chain.agents_out, key=_agent_num):
            self._recall(aid)
        record = self.jobs[chain.job_id]
        if failed:
            record.status = "failed"
            record.finished_at = now
        elif all(c.done for c in record.chains):
            record.status = "done"
            record.finished_at = now

    def _recall(self, agent_id: str) -> None:
        assignment = self.assignments.pop(agent_id)
        self.ledger.unbind(agent_id, assignment.resource_claim)
        chain = self._agent_chain.pop(agent_id)
        chain.agents_out.discard(agent_id)
        chain.first_out.discard(agent_id)
        if not chain.first_out and chain.next_block > 0:
            chain.first_back = True
        self._recalls.append(agent_id)

    def finish_chain(self, job_id: str, now: int, chain_index: int = 0) -> list[MobileAgent]:
        """A robot finished ``job_id``'s chain without an agent reporting it."""
        chain = self._chain(job_id, chain_index)
        if not (chain.done or chain.failed):
            self._close_chain(chain, now, failed=False)
        return self.try_dispatch(now)

    def fail_job(self, job_id: str, now: int) -> list[MobileAgent]:
        """Abandon every unfinished chain of ``job_id`` and recall its agents."""
        for chain in self.jobs[job_id].chains:
            if not (chain.done or chain.failed):
                self._close_chain(chain, now, failed=True)
        return self.try_dispatch(now)

    def drain_recalls(self) -> list[str]:
        out, self._recalls = self._recalls, []
        return out

    # -- sequence edits --------------------------------------------------

    def unfinished_workflow_jobs(self) -> list[str]:
        return [jid for jid, rec in self.jobs.items()
                if rec.spec.follows_workflow and rec.status in ("pending", "running")]

    def insert_task(self, after_task: str | None, task: TaskSpec, now: int) -> list[MobileAgent]:
        """Add ``task`` to the workflow and queue an agent for it per unfinished job."""
        ids = [t.task_id for t in self.workflow]
        if task.task_id in ids:
            raise ValidationError(f"task {task.task_id!r} already in the workflow")
        if after_task is None:
            pos = 0
        elif after_task in ids:
            pos = ids.index(after_task) + 1
        else:
            raise ValidationError(f"unknown workflow task {after_task!r}")
        self.workflow.insert(pos, task)
        succ = self.workflow[pos + 1].task_id if pos + 1 < len(self.workflow) else None
        for jid in self.unfinished_workflow_jobs():
            rec = self.jobs[jid]
            if (rec.completed if after_task is None else after_task in rec.completed):
                continue  # this job is already past the insertion point
            match = FREE if pos == 0 else StateId(jid, task.task_id)
            nxt = FREE if succ is None else StateId(jid, succ)
            # a one-step chain view so the group carries a valid SI program
            chain = _single_step_chain(match, task, nxt)
            group = TaskGroup(jid, 0, chain, (0,))
            self._universe |= task.resource_ids
            self.ledger.pending.append(_Unit(next(self._order), jid, 0, -1, [group], True))
        return self.try_dispatch(now)

    def delete_task(self, task_id: str, now: int, resident: set[str] = frozenset()) -> list[MobileAgent]:
        """Remove ``task_id`` from the workflow; drop its queued and idle agents."""
        ids = [t.task_id for t in self.workflow]
        if task_id not in ids:
            raise ValidationError(f"unknown workflow task {task_id!r}")
        del self.workflow[ids.index(task_id)]
        keep = []
        for u in self.ledger.pending:
            if u.follows_workflow and all(t.task_id == task_id for g in u.groups for t in g.tasks):
                chain = self._chain(u.job_id, u.chain_index)
                if u.block_index >= 0 and u.block_index == chain.next_block:
                    chain.next_block += 1
                continue
            keep.append(u)
        self.ledger.pending = keep
        for aid, a in sorted(self.assignments.items(), key=lambda kv: _agent_num(kv[0])):
            if (a.follows_workflow and aid not in resident
                    and all(s.task.task_id == task_id for s in a.steps)):
                self._recall(aid)
        return self.try_dispatch(now)

    def reorder(self, sequence: list[str]) -> None:
        by_id = {t.task_id: t for t in self.workflow}
        if sorted(sequence) != sorted(by_id):
            raise ValidationError("reorder must be a permutation of the workflow tasks")
        self.workflow = [by_id[t] for t in sequence]

    # -- queries ---------------------------------------------------------

    def quiet(self) -> bool:
        return not self.ledger.pending

    def job_status(self, job_id: str) -> str:
        return self.jobs[job_id].status


def _agent_num(agent_id: str) -> int:
    return int(agent_id[2:]) if agent_id[2:].isdigit() else 0


class _OpenChain(SIChain):
    """SI program slice that need not start or end in the free state."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))


def _single_step_chain(match: StateId, task: TaskSpec, nxt: StateId) -> SIChain:
    return _OpenChain((SIStep(match, task, nxt),))
