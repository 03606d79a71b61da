"""Post-hoc checks and metrics computed from traces.

Time is handled as half-open integer intervals ``[begin, end)``: a release
and the next acquire at the same tick do not overlap.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .engine import Event, Trace, TraceFormatError

Interval = tuple[int, int]


# -- usage matrix and mutual exclusion ------------------------------------------


@dataclass
class UsageMatrix:
    """Intervals during which each robot held each resource."""

    intervals: dict[tuple[str, str], list[Interval]] = field(default_factory=dict)

    @classmethod
    def from_trace(cls, trace: Trace | Iterable[Event]) -> UsageMatrix:
        events = list(trace)
        end_of_trace = max((e.at for e in events), default=0)
        open_: dict[tuple[str, str], int] = {}
        out: dict[tuple[str, str], list[Interval]] = defaultdict(list)
        for e in events:
            if e.kind == "ResourceAcquire":
                for r in e.resources:
                    key = (e.robot_id, r)
                    if key in open_:
                        raise TraceFormatError(f"seq {e.seq}: {e.robot_id} acquires {r} twice")
                    open_[key] = e.at
            elif e.kind == "ResourceRelease":
                for r in e.resources:
                    key = (e.robot_id, r)
                    if key not in open_:
                        raise TraceFormatError(f"seq {e.seq}: {e.robot_id} releases unheld {r}")
                    out[key].append((open_.pop(key), e.at))
        for key, begin in open_.items():
            # still held when the trace stops
            out[key].append((begin, max(end_of_trace, begin) + 1))
        return cls({k: sorted(v) for k, v in sorted(out.items())})

    def by_resource(self) -> dict[str, list[tuple[str, int, int]]]:
        res: dict[str, list[tuple[str, int, int]]] = defaultdict(list)
        for (robot, r), ivs in self.intervals.items():
            res[r].extend((robot, b, e) for b, e in ivs)
        return {r: sorted(v, key=lambda x: (x[1], x[2], x[0])) for r, v in sorted(res.items())}

    def held_at(self, t: int) -> set[tuple[str, str]]:
        return {k for k, ivs in self.intervals.items() if any(b <= t < e for b, e in ivs)}


@dataclass(frozen=True)
class MerViolation:
    resource: str
    intervals: tuple[tuple[str, int, int], ...]

    @property
    def robots(self) -> tuple[str, ...]:
        return tuple(sorted({r for r, _, _ in self.intervals}))


def verify_mer(trace: Trace | Iterable[Event]) -> list[MerViolation]:
    """Every cluster of overlapping holds of one resource, if any."""
    out = []
    for res, ivs in UsageMatrix.from_trace(trace).by_resource().items():
        cluster: list[tuple[str, int, int]] = []
        reach = None
        for iv in ivs:
            if iv[2] <= iv[1]:
                continue  # empty interval holds nothing
            if cluster and iv[1] < reach:
                cluster.append(iv)
                reach = max(reach, iv[2])
                continue
            if len(cluster) > 1:
                out.append(MerViolation(res, tuple(cluster)))
            cluster, reach = [iv], iv[2]
        if len(cluster) > 1:
            out.append(MerViolation(res, tuple(cluster)))
    return out


def utilization(trace: Trace | Iterable[Event], t: int) -> int:
    """Number of robots holding at least one resource at instant ``t``."""
    return len({robot for robot, _ in UsageMatrix.from_trace(trace).held_at(t)})


# -- Gantt rows, makespan, idle periods ----------------------------------------


@dataclass(frozen=True)
class GanttRow:
    robot: str
    job: str
    task: str
    begin: int
    end: int

    @property
    def duration(self) -> int:
        return self.end - self.begin


def export_gantt(trace: Trace | Iterable[Event]) -> list[GanttRow]:
    """One row per executed (or aborted) task, ordered by robot then start."""
    running: dict[tuple[str, str, str], int] = {}
    rows = []
    for e in trace:
        key = (e.robot_id, e.job_id, e.task_id)
        if e.kind == "ExecBegin":
            running[key] = e.at
        elif e.kind == "ExecEnd" or (e.kind == "RobotRemove" and key in running):
            rows.append(GanttRow(e.robot_id, e.job_id, e.task_id, running.pop(key), e.at))
    return sorted(rows, key=lambda r: (r.robot, r.begin, r.job, r.task))


def gantt_table(rows: list[GanttRow], sep: str = "\t") -> str:
    lines = [sep.join(("robot", "job", "task", "begin", "end", "duration"))]
    lines += [sep.join((r.robot, r.job, r.task, str(r.begin), str(r.end), str(r.duration))) for r in rows]
    return "\n".join(lines) + "\n"


def makespan(trace: Trace | Iterable[Event]) -> int:
    """Last task completion minus first job arrival."""
    events = list(trace)
    arrivals = [e.at for e in events if e.kind == "JobArrival"]
    ends = [e.at for e in events if e.kind == "ExecEnd"]
    if not arrivals or not ends:
        return 0
    return max(ends) - min(arrivals)


def speedup(trace_k: Trace, trace_1: Trace) -> float:
    mk = makespan(trace_k)
    if mk == 0:
        raise ValueError("trace_k completed no work")
    return makespan(trace_1) / mk


def idle_periods(trace: Trace | Iterable[Event]) -> list[tuple[str, int, int]]:
    """``(robot, begin, end)`` gaps between consecutive tasks on each robot."""
    per: dict[str, list[GanttRow]] = defaultdict(list)
    for row in export_gantt(trace):
        per[row.robot].append(row)
    return [(robot, a.end, b.begin) for robot, rows in sorted(per.items())
            for a, b in zip(rows, rows[1:]) if b.begin > a.end]


def average_time_per_task(trace: Trace | Iterable[Event]) -> list[tuple[int, int, float]]:
    """Running ``(t, completed, busy/completed)`` at each task completion."""
    busy = 0
    n = 0
    out = []
    for row in sorted(export_gantt(trace), key=lambda r: (r.end, r.robot)):
        busy += row.duration
        n += 1
        out.append((row.end, n, busy / n))
    return out


def average_completion_time(trace: Trace | Iterable[Event]) -> float:
    """Makespan divided by the number of completed tasks."""
    events = list(trace)
    done = sum(1 for e in events if e.kind == "ExecEnd")
    return makespan(events) / done if done else 0.0


def metrics(trace: Trace | Iterable[Event]) -> dict[str, object]:
    events = list(trace)
    rows = export_gantt(events)
    robots = sorted({r.robot for r in rows})
    gaps = idle_periods(events)
    return {
        "makespan": makespan(events),
        "tasks_completed": sum(1 for e in events if e.kind == "ExecEnd"),
        "jobs": sum(1 for e in events if e.kind == "JobArrival"),
        "robots_used": len(robots),
        "agent_hops": sum(1 for e in events if e.kind == "AgentHop"),
        "central_messages": sum(1 for e in events if e.kind in ("CentralMsgSend", "CentralMsgRecv")),
        "idle_periods": len(gaps),
        "idle_ticks": sum(b - a for _, a, b in gaps),
        "avg_completion_time": round(average_completion_time(events), 3),
        "mer_violations": len(verify_mer(events)),
    }


def format_metrics(m: dict[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in m.items())


# -- dependency graph and Kahn's algorithm -------------------------------------


@dataclass(frozen=True)
class ExecNode:
    robot: str
    agent: str
    job: str
    task: str
    resources: tuple[str, ...] = ()
    begin: int = 0


@dataclass
class DependencyGraph:
    nodes: list = field(default_factory=list)
    edges: set[tuple] = field(default_factory=set)

    def add_edge(self, u, v) -> None:
        self.edges.add((u, v))


@dataclass(frozen=True)
class TotalOrder:
    order: tuple
    levels: dict

    def __len__(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class CycleWitness:
    cycle: tuple

    def __len__(self) -> int:
        return len(self.cycle)


def dependency_graph(trace: Trace | Iterable[Event]) -> DependencyGraph:
    """Execution instances linked by robot order, resource hand-off and agent order."""
    g = DependencyGraph()
    last_robot: dict[str, ExecNode] = {}
    last_res: dict[str, ExecNode] = {}
    last_agent: dict[str, ExecNode] = {}
    for e in trace:
        if e.kind != "ExecBegin":
            continue
        node = ExecNode(e.robot_id, e.agent_id, e.job_id, e.task_id, e.resources, e.at)
        g.nodes.append(node)
        if e.robot_id in last_robot:
            g.add_edge(last_robot[e.robot_id], node)
        for r in e.resources:
            if r in last_res:
                g.add_edge(last_res[r], node)
            last_res[r] = node
        if e.agent_id and e.agent_id in last_agent:
            g.add_edge(last_agent[e.agent_id], node)
        last_robot[e.robot_id] = node
        if e.agent_id:
            last_agent[e.agent_id] = node
    return g


def dependency_graph_from_pipeline(robots: int, tasks: int, jobs: int | None = None) -> DependencyGraph:
    """Static structure of repetitive jobs spread round-robin over robots.

    Node ``(j, t)`` is task ``t`` of job ``j``. A job's tasks run in order on
    one robot; task ``t`` of consecutive jobs shares resource ``t``; a robot
    takes its next job only after finishing the previous one.
    """
    jobs = robots if jobs is None else jobs
    g = DependencyGraph(nodes=[(j, t) for j in range(jobs) for t in range(tasks)])
    for j in range(jobs):
        for t in range(tasks):
            if t + 1 < tasks:
                g.add_edge((j, t), (j, t + 1))
            if j + 1 < jobs:
                g.add_edge((j, t), (j + 1, t))
        if j + robots < jobs:
            g.add_edge((j, tasks - 1), (j + robots, 0))
    return g


def kahn_check(graph: DependencyGraph) -> TotalOrder | CycleWitness:
    """Topological order with the level (pipeline slot) of each node, or a cycle."""
    index = {n: i for i, n in enumerate(graph.nodes)}
    for u, v in graph.edges:
        for x in (u, v):
            if x not in index:
                index[x] = len(index)
    nodes = sorted(index, key=index.get)
    succ: dict = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for u, v in sorted(graph.edges, key=lambda e: (index[e[0]], index[e[1]])):
        succ[u].append(v)
        indeg[v] += 1
    level = {n: 0 for n in nodes}
    ready = [(index[n], n) for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, n = heapq.heappop(ready)
        order.append(n)
        for m in succ[n]:
            level[m] = max(level[m], level[n] + 1)
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, (index[m], m))
    if len(order) == len(nodes):
        return TotalOrder(tuple(order), level)
    # every leftover node has a leftover predecessor; walk back until a repeat
    pred: dict = defaultdict(list)
    for u, v in graph.edges:
        if indeg[u] > 0 and indeg[v] > 0:
            pred[v].append(u)
    start = min((n for n in nodes if indeg[n] > 0), key=index.get)
    seen: dict = {}
    path = []
    n = start
    while n not in seen:
        seen[n] = len(path)
        path.append(n)
        n = min(pred[n], key=index.get)
    cycle = path[seen[n]:]
    cycle.reverse()
    return CycleWitness(tuple(cycle))


# -- stall detection ------------------------------------------------------------


@dataclass(frozen=True)
class StallReport:
    """A wait-for cycle. ``chain`` alternates waiting parties (robots and agents)."""

    at: int
    chain: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.chain)


def _cycle(edges: dict[str, list[str]]) -> tuple[str, ...] | None:
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(n: str) -> tuple[str, ...] | None:
        color[n] = 1
        stack.append(n)
        for m in edges.get(n, ()):
            if color.get(m) == 1:
                return tuple(stack[stack.index(m):])
            if m not in color:
                found = visit(m)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in sorted(edges):
        if n not in color:
            found = visit(n)
            if found:
                return found
    return None


def _wait_for_live(engine) -> dict[str, list[str]]:
    from .agents import Resident, Returning, Gone

    robots = {rid: r for rid, r in engine.robots.items() if r.active}
    by_job = {r.bound_job: rid for rid, r in robots.items() if r.bound_job is not None}
    searching = {aid: a for aid, a in engine.agents.items()
                 if not isinstance(a.phase, (Resident, Returning, Gone))}
    edges: dict[str, list[str]] = defaultdict(list)
    ledger = engine.jdist.ledger
    for rid, robot in sorted(robots.items()):
        if robot.executing is not None or robot.state.is_free:
            continue
        wanted = robot.state
        if any(a.sought == wanted for a in searching.values()):
            continue  # its agent is on the way
        for unit in ledger.pending:
            if unit.job_id != wanted.job_id:
                continue
            if any(s.match_state == wanted for g in unit.groups for s in g.steps):
                blockers = sorted({ledger.bound[r] for r in unit.claim if r in ledger.bound})
                edges[rid].extend(blockers)
    for aid, agent in sorted(searching.items()):
        s = agent.sought
        if s is None:
            continue
        if s.is_free:
            if any(r.state.is_free and r.executing is None and not r.retiring for r in robots.values()):
                continue
            edges[aid].extend(rid for rid, r in sorted(robots.items()) if r.executing is None)
        elif s.job_id in by_job:
            rid = by_job[s.job_id]
            if robots[rid].state != s:
                edges[aid].append(rid)
    return edges


def _wait_for_trace(events: list[Event], threshold: int) -> tuple[int, tuple[str, ...]] | None:
    end = max((e.at for e in events), default=0)
    state: dict[str, tuple[str, int]] = {}
    busy: set[str] = set()
    for e in events:
        if e.kind == "ExecBegin":
            busy.add(e.robot_id)
        elif e.kind == "ExecEnd":
            busy.discard(e.robot_id)
        elif e.kind == "StateUpdate":
            state[e.robot_id] = (e.state_to, e.at)
        elif e.kind == "RobotRemove" and not e.agent_id:
            state.pop(e.robot_id, None)
            busy.discard(e.robot_id)
    outstanding = set()
    for e in events:
        if e.kind == "AgentHop" and e.robot_id == "JD" and e.resources:
            outstanding.add(e.agent_id)
        elif e.kind == "AgentReturn":
            outstanding.discard(e.agent_id)
    stuck = tuple(sorted(r for r, (s, t) in state.items()
                         if s != "S*" and r not in busy and end - t >= threshold))
    if not stuck:
        return None
    return end, stuck + tuple(sorted(outstanding))


def detect_stall(source, threshold: int = 0) -> StallReport | None:
    """Wait-for cycle among idle non-free robots and unmatched agents.

    ``source`` is a live engine, a run result, or a trace. A trace carries no
    ledger, so for traces a stall is reported when some robot sits idle in a
    job state for at least ``threshold`` ticks at the end of the trace.
    """
    engine = getattr(source, "engine", source)
    if hasattr(engine, "jdist"):
        cyc = _cycle(_wait_for_live(engine))
        return StallReport(engine.queue.now, cyc) if cyc else None
    events = list(source)
    found = _wait_for_trace(events, threshold)
    return StallReport(*found) if found else None



# -- well-formedness and rendering -----------------------------------------------


def check_trace(trace: Trace | Iterable[Event]) -> list[str]:
    """Structural problems: time order, unmatched executions or holds."""
    problems = []
    last_at, last_seq = None, None
    running: dict[tuple[str, str, str], int] = {}
    held: set[tuple[str, str]] = set()
    for e in trace:
        if last_at is not None and e.at < last_at:
            problems.append(f"seq {e.seq}: time goes backwards ({e.at} < {last_at})")
        if last_seq is not None and e.seq <= last_seq:
            problems.append(f"seq {e.seq}: sequence numbers must increase")
        last_at, last_seq = e.at, e.seq
        key = (e.robot_id, e.job_id, e.task_id)
        if e.kind == "ExecBegin":
            if key in running:
                problems.append(f"seq {e.seq}: {key} begins twice")
            running[key] = e.seq
        elif e.kind == "ExecEnd" or (e.kind == "RobotRemove" and e.task_id):
            if running.pop(key, None) is None:
                problems.append(f"seq {e.seq}: {e.kind} for {key} without ExecBegin")
        elif e.kind == "ResourceAcquire":
            for r in e.resources:
                if (e.robot_id, r) in held:
                    problems.append(f"seq {e.seq}: {e.robot_id} acquires {r} twice")
                held.add((e.robot_id, r))
        elif e.kind == "ResourceRelease":
            for r in e.resources:
                if (e.robot_id, r) not in held:
                    problems.append(f"seq {e.seq}: {e.robot_id} releases unheld {r}")
                held.discard((e.robot_id, r))
    for key in sorted(running):
        problems.append(f"{key} never ends")
    for robot, r in sorted(held):
        problems.append(f"{robot} never releases {r}")
    return problems


_PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7",
            "#9c755f", "#bab0ac")


def gantt_svg(rows: list[GanttRow], ticks_per_second: int = 1000, title: str = "") -> str:
    """Minimal SVG: one lane per job, boxes coloured by robot."""
    from xml.sax.saxutils import escape

    jobs = sorted({r.job for r in rows}, key=lambda j: (len(j), j))
    robots = sorted({r.robot for r in rows})
    colour = {rb: _PALETTE[i % len(_PALETTE)] for i, rb in enumerate(robots)}
    end = max((r.end for r in rows), default=0)
    scale = 800 / end if end else 1.0
    lane, left, top = 28, 60, 30
    h = top + lane * len(jobs) + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + 820}" height="{h}" '
           f'font-family="sans-serif" font-size="11">']
    if title:
        out.append(f'<text x="{left}" y="16">{escape(title)}</text>')
    for i, j in enumerate(jobs):
        out.append(f'<text x="4" y="{top + i * lane + 17}">{escape(j)}</text>')
    for r in rows:
        y = top + jobs.index(r.job) * lane
        x, w = left + r.begin * scale, max(1.0, r.duration * scale)
        out.append(f'<rect x="{x:.1f}" y="{y + 3}" width="{w:.1f}" height="{lane - 6}" '
                   f'fill="{colour[r.robot]}" stroke="#222"><title>{escape(r.robot)} {escape(r.task)} '
                   f'[{r.begin}, {r.end})</title></rect>')
        out.append(f'<text x="{x + 3:.1f}" y="{y + 17}" fill="#fff">{escape(r.task)}</text>')
    axis_y = top + lane * len(jobs) + 14
    for k, rb in enumerate(robots):
        out.append(f'<rect x="{left + k * 70}" y="{axis_y}" width="10" height="10" fill="{colour[rb]}"/>'
                   f'<text x="{left + k * 70 + 14}" y="{axis_y + 9}">{escape(rb)}</text>')
    secs = end / ticks_per_second if ticks_per_second else 0
    out.append(f'<text x="{left + 700}" y="{axis_y + 9}">{secs:g} s</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
