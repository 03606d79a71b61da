"""Scenario files: strict YAML schema, loading, writing and presets.

A scenario declares the network, the robots, the resources, the job stream
and any scheduled interventions. Loading is strict: unknown keys and dangling
ids are rejected, and every error carries the line it came from.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Any, Union

import yaml

from .agents import Delete, Edit, Insert, Reorder
from .domain import (DurationModel, Fixed, Jitter, JobSpec, NodeKind, ResourceSpec, TaskSpec,
                     ValidationError)
from .network import Topology
from .robots import RemovalPolicy

SCHEMA_VERSION = 1
JD_NODE = "JD"
MODES = ("decentralized", "centralized", "both")
LAYOUTS = ("star", "ring", "complete", "explicit", "random_connected")


class ScenarioError(ValidationError):
    """One or more schema errors, each prefixed with its line number."""

    def __init__(self, errors: list[str]) -> None:
        super().__init__("\n".join(errors))
        self.errors = errors


# -- model -------------------------------------------------------------------


@dataclass
class EngineConfig:
    seed: int = 0
    ticks_per_second: int = 1000
    hop_latency: int = 1
    return_latency: int = 1
    t_max: int = 10_000_000
    mode: str = "decentralized"
    central_service_time: int = 5
    message_latency: int = 1
    ordered_admission: bool = True


@dataclass
class TopologySpec:
    layout: str = "star"
    secondary_nodes: int = 0
    edges: list[tuple[str, str]] = field(default_factory=list)
    seed: int = 0
    extra_edges: int = 0


@dataclass
class RobotSpec:
    robot_id: str
    battery: int | None = None
    battery_threshold: int = 0


@dataclass
class WorkloadSpec:
    """Generated repetitive jobs: ``jobs`` copies of the workflow sequence.

    ``jobs`` and the robot count may be the string ``"tasks_per_job"`` so a
    sweep scales them together. Without an explicit workflow the generator
    makes tasks T1..Tn, each on its own resource.
    """

    jobs: Union[int, str] = 1
    tasks_per_job: int = 4
    duration: DurationModel = Fixed(2000)
    arrival_every: int = 0


@dataclass
class WorkflowJob:
    job_id: str
    arrival_time: int = 0


@dataclass
class SeqEditAt:
    at: int
    edit: Edit


@dataclass
class RobotRemoveAt:
    at: int
    robot_id: str
    policy: RemovalPolicy = RemovalPolicy.AFTER_CURRENT_JOB


@dataclass
class RobotAddAt:
    at: int
    robot: RobotSpec
    connect: list[str] = field(default_factory=lambda: [JD_NODE])


Intervention = Union[SeqEditAt, RobotRemoveAt, RobotAddAt]


@dataclass
class Scenario:
    name: str = "scenario"
    description: str = ""
    engine: EngineConfig = field(default_factory=EngineConfig)
    topology: TopologySpec = field(default_factory=TopologySpec)
    resources: list[ResourceSpec] = field(default_factory=list)
    robots: list[RobotSpec] = field(default_factory=list)
    robot_count: Union[int, str, None] = None  # kept for round-tripping "count:"
    battery: tuple[int, int] | None = None
    workflow: list[TaskSpec] = field(default_factory=list)
    workload: WorkloadSpec | None = None
    jobs: list[Union[JobSpec, WorkflowJob]] = field(default_factory=list)
    interventions: list[Intervention] = field(default_factory=list)

    # -- derived views -------------------------------------------------

    def robot_specs(self) -> list[RobotSpec]:
        if self.robot_count is None:
            return list(self.robots)
        n = self.tasks_per_job if self.robot_count == "tasks_per_job" else int(self.robot_count)
        budget, threshold = self.battery if self.battery else (None, 0)
        return [RobotSpec(f"R{i}", budget, threshold) for i in range(1, n + 1)]

    @property
    def tasks_per_job(self) -> int:
        return self.workload.tasks_per_job if self.workload else len(self.workflow)

    def workflow_tasks(self) -> list[TaskSpec]:
        if self.workflow:
            return list(self.workflow)
        if self.workload is None:
            return []
        return [TaskSpec(f"T{i}", frozenset({f"psi{i}"}), self.workload.duration)
                for i in range(1, self.workload.tasks_per_job + 1)]

    def resource_specs(self) -> list[ResourceSpec]:
        declared = list(self.resources)
        known = {r.resource_id for r in declared}
        for t in self.workflow_tasks():
            for r in sorted(t.resource_ids - known):
                declared.append(ResourceSpec(r))
                known.add(r)
        return declared

    def all_jobs(self) -> list[Union[JobSpec, WorkflowJob]]:
        out: list[Union[JobSpec, WorkflowJob]] = list(self.jobs)
        if self.workload is not None:
            w = self.workload
            m = self.tasks_per_job if w.jobs == "tasks_per_job" else int(w.jobs)
            out += [WorkflowJob(f"J{i}", (i - 1) * w.arrival_every) for i in range(1, m + 1)]
        return out

    def task_count(self) -> int:
        n = 0
        for job in self.all_jobs():
            n += len(job.tasks) if isinstance(job, JobSpec) else len(self.workflow_tasks())
        return n

    def build_topology(self) -> Topology:
        return build_topology(self)

    def with_engine(self, **changes) -> Scenario:
        return dataclasses.replace(self, engine=dataclasses.replace(self.engine, **changes))


def scale_durations(s: Scenario, factor: int) -> Scenario:
    """Copy of ``s`` with every task duration multiplied by ``factor``."""

    def task(t: TaskSpec) -> TaskSpec:
        return dataclasses.replace(t, duration=t.duration.scaled(factor))

    jobs = [JobSpec(j.job_id, tuple(tuple(task(t) for t in c) for c in j.chains),
                    j.arrival_time, j.follows_workflow) if isinstance(j, JobSpec) else j
            for j in s.jobs]
    workload = (dataclasses.replace(s.workload, duration=s.workload.duration.scaled(factor))
                if s.workload else None)
    edits = [SeqEditAt(i.at, Insert(i.edit.after_task, task(i.edit.task)))
             if isinstance(i, SeqEditAt) and isinstance(i.edit, Insert) else i
             for i in s.interventions]
    return dataclasses.replace(s, workflow=[task(t) for t in s.workflow], jobs=jobs,
                               workload=workload, interventions=edits)


def build_topology(s: Scenario) -> Topology:
    """Lay out the JD node, robots, resource hosts and secondary nodes."""
    topo = Topology(s.engine.hop_latency)
    topo.add_node(JD_NODE, NodeKind.JOB_DISTRIBUTOR)
    for r in s.robot_specs():
        topo.add_node(r.robot_id, NodeKind.ROBOTIC)
    for res in s.resource_specs():
        if res.host_node and res.host_node not in topo:
            topo.add_node(res.host_node, NodeKind.SHARED_RESOURCE)
    for i in range(1, s.topology.secondary_nodes + 1):
        topo.add_node(f"N{i}", NodeKind.SECONDARY)
    nodes = topo.nodes()
    spec = s.topology
    if spec.layout == "star":
        for n in nodes[1:]:
            topo.connect(JD_NODE, n)
    elif spec.layout == "ring":
        if len(nodes) > 1:
            for a, b in zip(nodes, nodes[1:] + nodes[:1]):
                if a != b:
                    topo.connect(a, b)
    elif spec.layout == "complete":
        for i, a in enumerate(nodes):
            for b in nodes[i + 1:]:
                topo.connect(a, b)
    elif spec.layout == "random_connected":
        rng = random.Random(spec.seed)
        order = nodes[:]
        rng.shuffle(order)
        for i in range(1, len(order)):
            topo.connect(order[i], order[rng.randrange(i)])
        pairs = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]]
        missing = [p for p in pairs if p[1] not in topo.neighbors(p[0])]
        for a, b in rng.sample(missing, min(spec.extra_edges, len(missing))):
            topo.connect(a, b)
    for a, b in spec.edges:
        topo.connect(a, b)
    return topo


# -- YAML reading ------------------------------------------------------------


class _Reader:
    """Walks a composed YAML node tree, collecting errors with line numbers."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def err(self, node: yaml.Node | None, msg: str) -> None:
        line = node.start_mark.line + 1 if node is not None else 0
        self.errors.append(f"line {line}: {msg}")

    def mapping(self, node: yaml.Node, where: str, allowed: set[str],
                required: tuple[str, ...] = ()) -> dict[str, yaml.Node]:
        if not isinstance(node, yaml.MappingNode):
            self.err(node, f"{where} must be a mapping")
            return {}
        out: dict[str, yaml.Node] = {}
        for k, v in node.value:
            key = k.value
            if key not in allowed:
                self.err(k, f"unknown field {key!r} in {where}")
            elif key in out:
                self.err(k, f"duplicate field {key!r} in {where}")
            else:
                out[key] = v
        for r in required:
            if r not in out:
                self.err(node, f"{where} is missing required field {r!r}")
        return out

    def seq(self, node: yaml.Node, where: str) -> list[yaml.Node]:
        if not isinstance(node, yaml.SequenceNode):
            self.err(node, f"{where} must be a list")
            return []
        return list(node.value)

    def scalar(self, node: yaml.Node, where: str) -> Any:
        if not isinstance(node, yaml.ScalarNode):
            self.err(node, f"{where} must be a scalar")
            return None
        return yaml.safe_load(yaml.serialize(node))

    def int_(self, node: yaml.Node, where: str, minimum: int | None = 0) -> int | None:
        v = self.scalar(node, where)
        if v is None and isinstance(node, yaml.ScalarNode):
            self.err(node, f"{where} must be an integer")
            return None
        if v is not None and (not isinstance(v, int) or isinstance(v, bool)):
            self.err(node, f"{where} must be an integer, got {v!r}")
            return None
        if v is not None and minimum is not None and v < minimum:
            self.err(node, f"{where} must be >= {minimum}, got {v}")
            return None
        return v

    def str_(self, node: yaml.Node, where: str) -> str | None:
        v = self.scalar(node, where)
        if v is None:
            if isinstance(node, yaml.ScalarNode):
                self.err(node, f"{where} must be a string")
            return None
        return str(v)

    def bool_(self, node: yaml.Node, where: str) -> bool | None:
        v = self.scalar(node, where)
        if not isinstance(v, bool):
            self.err(node, f"{where} must be true or false")
            return None
        return v


def _duration(r: _Reader, node: yaml.Node, where: str) -> DurationModel | None:
    m = r.mapping(node, where, {"fixed", "jitter"})
    if len(m) != 1:
        if m:
            r.err(node, f"{where} needs exactly one of 'fixed' or 'jitter'")
        elif isinstance(node, yaml.MappingNode):
            r.err(node, f"{where} needs exactly one of 'fixed' or 'jitter'")
        return None
    try:
        if "fixed" in m:
            v = r.int_(m["fixed"], f"{where}.fixed", 1)
            return Fixed(v) if v is not None else None
        j = r.mapping(m["jitter"], f"{where}.jitter", {"base", "spread"}, ("base", "spread"))
        if "base" not in j or "spread" not in j:
            return None
        base, spread = r.int_(j["base"], f"{where}.jitter.base", 1), r.int_(j["spread"], f"{where}.jitter.spread")
        return Jitter(base, spread) if base is not None and spread is not None else None
    except ValidationError as exc:
        r.err(node, f"{where}: {exc}")
        return None


def _task(r: _Reader, node: yaml.Node, where: str, known_res: dict[str, yaml.Node] | None) -> TaskSpec | None:
    m = r.mapping(node, where, {"id", "resources", "duration", "program"}, ("id", "resources", "duration"))
    if len(m) < 3 or not {"id", "resources", "duration"} <= set(m):
        return None
    tid = r.str_(m["id"], f"{where}.id")
    res = [r.str_(x, f"{where}.resources[]") for x in r.seq(m["resources"], f"{where}.resources")]
    if known_res is not None:
        for x, rid in zip(m["resources"].value if isinstance(m["resources"], yaml.SequenceNode) else [], res):
            if rid is not None and rid not in known_res:
                r.err(x, f"{where} references undeclared resource {rid!r}")
    dur = _duration(r, m["duration"], f"{where}.duration")
    prog = r.str_(m["program"], f"{where}.program") if "program" in m else ""
    if tid is None or dur is None or any(x is None for x in res):
        return None
    try:
        return TaskSpec(tid, frozenset(res), dur, prog or "")
    except ValidationError as exc:
        r.err(node, f"{where}: {exc}")
        return None


def _parse(doc: yaml.Node) -> Scenario:
    r = _Reader()
    top = r.mapping(doc, "scenario", {"version", "name", "description", "engine", "topology",
                                       "resources", "robots", "workflow", "workload", "jobs",
                                       "interventions"}, ("version", "robots"))
    if "version" in top:
        v = r.int_(top["version"], "version")
        if v is not None and v != SCHEMA_VERSION:
            r.err(top["version"], f"unsupported schema version {v} (expected {SCHEMA_VERSION})")
    s = Scenario()
    if "name" in top:
        s.name = r.str_(top["name"], "name") or s.name
    if "description" in top:
        s.description = r.str_(top["description"], "description") or ""

    if "engine" in top:
        m = r.mapping(top["engine"], "engine", {f.name for f in dataclasses.fields(EngineConfig)})
        kw: dict[str, Any] = {}
        for k, node in m.items():
            if k == "mode":
                mode = r.str_(node, "engine.mode")
                if mode not in MODES:
                    r.err(node, f"engine.mode must be one of {MODES}")
                else:
                    kw[k] = mode
            elif k == "ordered_admission":
                b = r.bool_(node, "engine.ordered_admission")
                if b is not None:
                    kw[k] = b
            else:
                lo = 1 if k in ("ticks_per_second", "t_max") else 0
                val = r.int_(node, f"engine.{k}", lo)
                if val is not None:
                    kw[k] = val
        s.engine = EngineConfig(**kw)

    if "topology" in top:
        m = r.mapping(top["topology"], "topology", {"layout", "secondary_nodes", "edges", "seed", "extra_edges"})
        t = TopologySpec()
        if "layout" in m:
            lay = r.str_(m["layout"], "topology.layout")
            if lay not in LAYOUTS:
                r.err(m["layout"], f"topology.layout must be one of {LAYOUTS}")
            else:
                t.layout = lay
        for k in ("secondary_nodes", "seed", "extra_edges"):
            if k in m:
                val = r.int_(m[k], f"topology.{k}")
                if val is not None:
                    setattr(t, k, val)
        if "edges" in m:
            for e in r.seq(m["edges"], "topology.edges"):
                pair = r.seq(e, "topology.edges[]")
                if len(pair) != 2:
                    r.err(e, "each edge must be a pair [a, b]")
                    continue
                a, b = r.str_(pair[0], "edge end"), r.str_(pair[1], "edge end")
                if a and b:
                    t.edges.append((a, b))
        s.topology = t

    known_res: dict[str, yaml.Node] = {}
    if "resources" in top:
        for i, node in enumerate(r.seq(top["resources"], "resources")):
            m = r.mapping(node, f"resources[{i}]", {"id", "host"}, ("id",))
            if "id" not in m:
                continue
            rid = r.str_(m["id"], f"resources[{i}].id")
            host = r.str_(m["host"], f"resources[{i}].host") if "host" in m else None
            if rid in known_res:
                r.err(m["id"], f"duplicate resource id {rid!r}")
            elif rid:
                known_res[rid] = node
                s.resources.append(ResourceSpec(rid, host))

    m = r.mapping(top["robots"], "robots", {"count", "ids", "battery"}) if "robots" in top else {}
    if m:
        if ("count" in m) == ("ids" in m):
            r.err(top["robots"], "robots needs exactly one of 'count' or 'ids'")
        if "count" in m:
            raw = r.scalar(m["count"], "robots.count")
            if raw == "tasks_per_job":
                s.robot_count = raw
            else:
                s.robot_count = r.int_(m["count"], "robots.count")
        if "battery" in m:
            b = r.mapping(m["battery"], "robots.battery", {"budget", "threshold"}, ("budget",))
            if "budget" in b:
                budget = r.int_(b["budget"], "robots.battery.budget", 1)
                thr = r.int_(b["threshold"], "robots.battery.threshold") if "threshold" in b else 0
                if budget is not None and thr is not None:
                    s.battery = (budget, thr)
        if "ids" in m:
            budget, thr = s.battery if s.battery else (None, 0)
            for x in r.seq(m["ids"], "robots.ids"):
                rid = r.str_(x, "robots.ids[]")
                if rid:
                    s.robots.append(RobotSpec(rid, budget, thr))
            ids = [x.robot_id for x in s.robots]
            if len(ids) != len(set(ids)):
                r.err(m["ids"], "robot ids must be unique")

    if "workflow" in top:
        for i, node in enumerate(r.seq(top["workflow"], "workflow")):
            t = _task(r, node, f"workflow[{i}]", known_res)
            if t:
                s.workflow.append(t)

    if "workload" in top:
        m = r.mapping(top["workload"], "workload", {"jobs", "tasks_per_job", "duration", "arrival_every"})
        w = WorkloadSpec()
        if "jobs" in m:
            raw = r.scalar(m["jobs"], "workload.jobs")
            w.jobs = raw if raw == "tasks_per_job" else (r.int_(m["jobs"], "workload.jobs") or 0)
        if "tasks_per_job" in m:
            w.tasks_per_job = r.int_(m["tasks_per_job"], "workload.tasks_per_job", 1) or 1
        if "duration" in m:
            w.duration = _duration(r, m["duration"], "workload.duration") or w.duration
        if "arrival_every" in m:
            w.arrival_every = r.int_(m["arrival_every"], "workload.arrival_every") or 0
        s.workload = w

    if "jobs" in top:
        for i, node in enumerate(r.seq(top["jobs"], "jobs")):
            m = r.mapping(node, f"jobs[{i}]", {"id", "arrival", "chains", "workflow"}, ("id",))
            if "id" not in m:
                continue
            jid = r.str_(m["id"], f"jobs[{i}].id")
            arrival = r.int_(m["arrival"], f"jobs[{i}].arrival") if "arrival" in m else 0
            wf = r.bool_(m["workflow"], f"jobs[{i}].workflow") if "workflow" in m else False
            if wf:
                if "chains" in m:
                    r.err(m["chains"], f"jobs[{i}]: a workflow job takes its tasks from the workflow")
                if not s.workflow and s.workload is None:
                    r.err(node, f"jobs[{i}]: workflow job without a workflow section")
                s.jobs.append(WorkflowJob(jid, arrival or 0))
                continue
            if "chains" not in m:
                r.err(node, f"jobs[{i}] needs 'chains' or 'workflow: true'")
                continue
            chains = []
            for ci, c in enumerate(r.seq(m["chains"], f"jobs[{i}].chains")):
                chains.append(tuple(t for k, tn in enumerate(r.seq(c, f"jobs[{i}].chains[{ci}]"))
                                    if (t := _task(r, tn, f"jobs[{i}].chains[{ci}][{k}]", known_res))))
            try:
                s.jobs.append(JobSpec(jid, tuple(chains), arrival or 0))
            except ValidationError as exc:
                r.err(node, f"jobs[{i}]: {exc}")
        ids = [j.job_id for j in s.jobs]
        dup = sorted({x for x in ids if ids.count(x) > 1})
        if dup:
            r.err(top["jobs"], f"duplicate job ids {dup}")

    robot_ids = {x.robot_id for x in s.robot_specs()} if s.robot_count != "tasks_per_job" else None
    if "interventions" in top:
        for i, node in enumerate(r.seq(top["interventions"], "interventions")):
            iv = _intervention(r, node, f"interventions[{i}]", known_res, robot_ids)
            if iv is not None:
                s.interventions.append(iv)

    if r.errors:
        raise ScenarioError(r.errors)
    try:
        build_topology(s)
    except ValidationError as exc:
        raise ScenarioError([f"line {doc.start_mark.line + 1}: topology: {exc}"]) from exc
    return s


def _intervention(r: _Reader, node: yaml.Node, where: str, known_res, robot_ids) -> Intervention | None:
    m = r.mapping(node, where, {"at", "seq_edit", "robot_remove", "robot_add"}, ("at",))
    kinds = [k for k in ("seq_edit", "robot_remove", "robot_add") if k in m]
    if len(kinds) != 1:
        if isinstance(node, yaml.MappingNode):
            r.err(node, f"{where} needs exactly one of seq_edit, robot_remove, robot_add")
        return None
    at = r.int_(m["at"], f"{where}.at") if "at" in m else None
    if at is None:
        return None
    kind = kinds[0]
    if kind == "seq_edit":
        e = r.mapping(m[kind], f"{where}.seq_edit", {"insert", "delete", "reorder"})
        if len(e) != 1:
            r.err(m[kind], f"{where}.seq_edit needs exactly one of insert, delete, reorder")
            return None
        if "insert" in e:
            ins = r.mapping(e["insert"], f"{where}.insert", {"after", "task"}, ("task",))
            after = r.scalar(ins["after"], f"{where}.insert.after") if "after" in ins else None
            task = _task(r, ins["task"], f"{where}.insert.task", known_res) if "task" in ins else None
            return SeqEditAt(at, Insert(None if after is None else str(after), task)) if task else None
        if "delete" in e:
            tid = r.str_(e["delete"], f"{where}.delete")
            return SeqEditAt(at, Delete(tid)) if tid else None
        seq = [r.str_(x, f"{where}.reorder[]") for x in r.seq(e["reorder"], f"{where}.reorder")]
        return SeqEditAt(at, Reorder(tuple(seq)))
    if kind == "robot_remove":
        rm = r.mapping(m[kind], f"{where}.robot_remove", {"robot", "policy"}, ("robot",))
        if "robot" not in rm:
            return None
        rid = r.str_(rm["robot"], f"{where}.robot_remove.robot")
        if robot_ids is not None and rid not in robot_ids:
            r.err(rm["robot"], f"{where} references unknown robot {rid!r}")
        policy = RemovalPolicy.AFTER_CURRENT_JOB
        if "policy" in rm:
            raw = r.str_(rm["policy"], f"{where}.robot_remove.policy")
            try:
                policy = RemovalPolicy(raw)
            except ValueError:
                r.err(rm["policy"], f"policy must be one of {[p.value for p in RemovalPolicy]}")
        return RobotRemoveAt(at, rid, policy)
    add = r.mapping(m[kind], f"{where}.robot_add", {"robot", "connect", "battery", "threshold"}, ("robot",))
    if "robot" not in add:
        return None
    rid = r.str_(add["robot"], f"{where}.robot_add.robot")
    connect = ([r.str_(x, "connect[]") for x in r.seq(add["connect"], f"{where}.robot_add.connect")]
               if "connect" in add else [JD_NODE])
    battery = r.int_(add["battery"], f"{where}.robot_add.battery", 1) if "battery" in add else None
    thr = r.int_(add["threshold"], f"{where}.robot_add.threshold") if "threshold" in add else 0
    return RobotAddAt(at, RobotSpec(rid, battery, thr or 0), connect)


def loads_scenario(text: str) -> Scenario:
    try:
        doc = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ScenarioError([f"line {line}: malformed YAML: {getattr(exc, 'problem', exc)}"]) from exc
    if doc is None:
        raise ScenarioError(["line 1: empty scenario file"])
    return _parse(doc)


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists():
        preset = preset_path(str(path))
        if preset is None:
            raise FileNotFoundError(f"no such file or preset: {path}")
        p = preset
    return loads_scenario(p.read_text(encoding="utf-8"))


# -- YAML writing ------------------------------------------------------------


def _dur_out(d: DurationModel) -> dict:
    if isinstance(d, Fixed):
        return {"fixed": d.ticks}
    return {"jitter": {"base": d.base, "spread": d.spread}}


def _task_out(t: TaskSpec) -> dict:
    out = {"id": t.task_id, "resources": sorted(t.resource_ids), "duration": _dur_out(t.duration)}
    if t.program_tag:
        out["program"] = t.program_tag
    return out


def scenario_to_dict(s: Scenario) -> dict:
    out: dict[str, Any] = {"version": SCHEMA_VERSION, "name": s.name}
    if s.description:
        out["description"] = s.description
    out["engine"] = dataclasses.asdict(s.engine)
    t = s.topology
    topo: dict[str, Any] = {"layout": t.layout, "secondary_nodes": t.secondary_nodes,
                            "seed": t.seed, "extra_edges": t.extra_edges}
    if t.edges:
        topo["edges"] = [list(e) for e in t.edges]
    out["topology"] = topo
    if s.resources:
        out["resources"] = [{"id": r.resource_id, **({"host": r.host_node} if r.host_node else {})}
                            for r in s.resources]
    robots: dict[str, Any] = {}
    if s.robot_count is not None:
        robots["count"] = s.robot_count
    else:
        robots["ids"] = [r.robot_id for r in s.robots]
    if s.battery:
        robots["battery"] = {"budget": s.battery[0], "threshold": s.battery[1]}
    out["robots"] = robots
    if s.workflow:
        out["workflow"] = [_task_out(x) for x in s.workflow]
    if s.workload:
        w = s.workload
        out["workload"] = {"jobs": w.jobs, "tasks_per_job": w.tasks_per_job,
                           "duration": _dur_out(w.duration), "arrival_every": w.arrival_every}
    if s.jobs:
        jobs = []
        for j in s.jobs:
            if isinstance(j, WorkflowJob):
                jobs.append({"id": j.job_id, "arrival": j.arrival_time, "workflow": True})
            else:
                jobs.append({"id": j.job_id, "arrival": j.arrival_time,
                             "chains": [[_task_out(x) for x in c] for c in j.chains]})
        out["jobs"] = jobs
    ivs = []
    for iv in s.interventions:
        if isinstance(iv, SeqEditAt):
            e = iv.edit
            if isinstance(e, Insert):
                body: dict[str, Any] = {"insert": {"after": e.after_task, "task": _task_out(e.task)}}
            elif isinstance(e, Delete):
                body = {"delete": e.task_id}
            else:
                body = {"reorder": list(e.sequence)}
            ivs.append({"at": iv.at, "seq_edit": body})
        elif isinstance(iv, RobotRemoveAt):
            ivs.append({"at": iv.at, "robot_remove": {"robot": iv.robot_id, "policy": iv.policy.value}})
        else:
            add: dict[str, Any] = {"robot": iv.robot.robot_id, "connect": list(iv.connect)}
            if iv.robot.battery is not None:
                add["battery"] = iv.robot.battery
                add["threshold"] = iv.robot.battery_threshold
            ivs.append({"at": iv.at, "robot_add": add})
    if ivs:
        out["interventions"] = ivs
    return out


def dumps_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


def write_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")


# -- presets -----------------------------------------------------------------


def _preset_dir():
    return importlib_resources.files("agentpipe") / "presets"


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str) -> Path | None:
    p = _preset_dir() / f"{name}.yaml"
    return Path(str(p)) if p.is_file() else None


def load_preset(name: str) -> Scenario:
    p = preset_path(name)
    if p is None:
        raise ScenarioError([f"line 0: unknown preset {name!r}; available: {list_presets()}"])
    return loads_scenario(p.read_text(encoding="utf-8"))
