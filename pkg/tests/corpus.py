"""Random scenario generators shared by the property and acceptance tests."""

from __future__ import annotations

import random

from agentpipe.domain import Fixed, Jitter, JobSpec, ResourceSpec, TaskSpec
from agentpipe.scenario import EngineConfig, Scenario, TopologySpec


def random_scenario(seed: int, *, max_robots: int = 6, max_jobs: int = 6, max_tasks: int = 8,
                    jitter: bool = True, max_nodes: int = 20) -> Scenario:
    """2-6 robots, 1-6 jobs, 1-8 tasks per job over a small shared resource pool."""
    rng = random.Random(seed)
    n_robots = rng.randint(2, max_robots)
    pool = [f"r{i}" for i in range(rng.randint(2, 8))]
    jobs = []
    for j in range(1, rng.randint(1, max_jobs) + 1):
        n_tasks = rng.randint(1, max_tasks)
        tasks = []
        for t in range(1, n_tasks + 1):
            res = frozenset(rng.sample(pool, rng.randint(1, min(2, len(pool)))))
            base = rng.randint(5, 30) * 100
            dur = Jitter(base, rng.randint(0, base // 4)) if jitter else Fixed(base)
            tasks.append(TaskSpec(f"T{t}", res, dur))
        cuts = sorted(rng.sample(range(1, n_tasks), min(n_tasks - 1, rng.randint(0, 2))))
        chains = [tasks[a:b] for a, b in zip([0] + cuts, cuts + [n_tasks])]
        jobs.append(JobSpec(f"J{j}", tuple(tuple(c) for c in chains), rng.randint(0, 4) * 500))
    secondary = rng.randint(0, max(0, max_nodes - 1 - n_robots))
    return Scenario(
        name=f"random-{seed}",
        engine=EngineConfig(seed=seed, hop_latency=rng.randint(0, 3), return_latency=rng.randint(0, 3)),
        topology=TopologySpec(layout="random_connected", secondary_nodes=secondary, seed=seed,
                              extra_edges=rng.randint(0, 6)),
        resources=[ResourceSpec(r) for r in pool],
        robot_count=n_robots,
        jobs=jobs,
    )


def small_scenario(seed: int) -> Scenario:
    """Scenarios whose traces stay at or below roughly 50 events."""
    rng = random.Random(10_000 + seed)
    pool = [f"r{i}" for i in range(rng.randint(1, 3))]
    jobs = []
    for j in range(1, rng.randint(1, 2) + 1):
        tasks = tuple(TaskSpec(f"T{t}", frozenset(rng.sample(pool, rng.randint(1, len(pool)))),
                               Fixed(rng.randint(1, 6)))
                      for t in range(1, rng.randint(1, 2) + 1))
        jobs.append(JobSpec(f"J{j}", (tasks,), rng.randint(0, 3)))
    return Scenario(
        name=f"small-{seed}",
        engine=EngineConfig(seed=seed, hop_latency=rng.randint(0, 1), return_latency=0),
        topology=TopologySpec(layout="complete"),
        resources=[ResourceSpec(r) for r in pool],
        robot_count=rng.randint(1, 3),
        jobs=jobs,
    )
