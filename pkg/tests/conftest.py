from pathlib import Path

import pytest

from agentpipe.domain import Fixed, JobSpec, ResourceSpec, TaskSpec
from agentpipe.scenario import EngineConfig, Scenario, TopologySpec

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


def task(tid, *res, d=1000):
    return TaskSpec(tid, frozenset(res), Fixed(d) if isinstance(d, int) else d)


def explicit(jobs, robots=2, layout="star", hop=1, ret=1, seed=0, secondary=0, **engine):
    """Scenario from explicit JobSpecs; resources are declared automatically."""
    res = sorted({r for j in jobs for t in j.tasks for r in t.resource_ids})
    return Scenario(name="test", engine=EngineConfig(seed=seed, hop_latency=hop, return_latency=ret, **engine),
                    topology=TopologySpec(layout=layout, secondary_nodes=secondary),
                    resources=[ResourceSpec(r) for r in res], robot_count=robots, jobs=list(jobs))


def seq_job(jid, *tasks, at=0):
    return JobSpec(jid, (tuple(tasks),), at)
