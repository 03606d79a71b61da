"""Dynamic node graph and conscientious agent migration."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .domain import NodeKind, ValidationError


class NoRoute(Exception):
    """The agent's current node has no neighbours."""


class Topology:
    """Undirected adjacency over typed nodes. May be disconnected."""

    def __init__(self, hop_latency: int = 1) -> None:
        if hop_latency < 0:
            raise ValidationError("hop_latency must be non-negative")
        self.hop_latency = hop_latency
        self.kinds: dict[str, NodeKind] = {}
        self._adj: dict[str, set[str]] = {}

    def __contains__(self, node: str) -> bool:
        return node in self.kinds

    def add_node(self, node: str, kind: NodeKind) -> None:
        if node in self.kinds:
            raise ValidationError(f"duplicate node id {node!r}")
        self.kinds[node] = NodeKind(kind)
        self._adj[node] = set()

    def remove_node(self, node: str) -> None:
        self._check(node)
        for other in self._adj.pop(node):
            self._adj[other].discard(node)
        del self.kinds[node]

    def _check(self, node: str) -> None:
        if node not in self.kinds:
            raise ValidationError(f"unknown node {node!r}")

    def connect(self, a: str, b: str) -> Topology:
        self._check(a)
        self._check(b)
        if a == b:
            raise ValidationError(f"self-loop on {a!r} is not allowed")
        self._adj[a].add(b)
        self._adj[b].add(a)
        return self

    def disconnect(self, a: str, b: str) -> Topology:
        if a in self._adj:
            self._adj[a].discard(b)
        if b in self._adj:
            self._adj[b].discard(a)
        return self

    def isolate(self, node: str) -> None:
        for other in list(self.neighbors(node)):
            self.disconnect(node, other)

    def neighbors(self, node: str) -> set[str]:
        self._check(node)
        return set(self._adj[node])

    def nodes(self, kind: NodeKind | None = None) -> list[str]:
        return [n for n, k in self.kinds.items() if kind is None or k is kind]

    def edges(self) -> list[tuple[str, str]]:
        return sorted({tuple(sorted((a, b))) for a, nbrs in self._adj.items() for b in nbrs})

    def reachable(self, start: str) -> set[str]:
        self._check(start)
        seen = {start}
        todo = deque([start])
        while todo:
            n = todo.popleft()
            for m in self._adj[n]:
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return seen

    def eccentricity(self, start: str) -> int:
        dist = {start: 0}
        todo = deque([start])
        while todo:
            n = todo.popleft()
            for m in self._adj[n]:
                if m not in dist:
                    dist[m] = dist[n] + 1
                    todo.append(m)
        return max(dist.values())

    def diameter(self) -> int:
        """Largest eccentricity over all nodes, computed per connected component."""
        return max((self.eccentricity(n) for n in self.kinds), default=0)

    def copy(self) -> Topology:
        other = Topology(self.hop_latency)
        other.kinds = dict(self.kinds)
        other._adj = {n: set(s) for n, s in self._adj.items()}
        return other


def connect(topology: Topology, a: str, b: str) -> Topology:
    return topology.connect(a, b)


def disconnect(topology: Topology, a: str, b: str) -> Topology:
    return topology.disconnect(a, b)


def neighbors(topology: Topology, n: str) -> set[str]:
    return topology.neighbors(n)


@dataclass
class VisitHistory:
    """Last-visit time per node for one agent.

    With a finite ``capacity`` the least recently visited entries are forgotten
    first, so a forgotten node counts as never visited again.
    """

    last_visit: dict[str, int] = field(default_factory=dict)
    capacity: int | None = None
    # visit counter per node; orders visits stamped with the same tick
    ordinal: dict[str, int] = field(default_factory=dict)
    _count: int = 0

    def record(self, node: str, at: int) -> None:
        prev = self.last_visit.pop(node, None)
        if prev is not None and at < prev:
            raise ValidationError(f"visit times must not decrease for {node!r}")
        self.last_visit[node] = at
        self._count += 1
        self.ordinal[node] = self._count
        if self.capacity is not None and len(self.last_visit) > self.capacity:
            oldest = min(self.last_visit, key=self.recency)
            del self.last_visit[oldest]
            del self.ordinal[oldest]

    def get(self, node: str) -> int | None:
        return self.last_visit.get(node)

    def recency(self, node: str) -> tuple[int, int]:
        return self.last_visit[node], self.ordinal.get(node, 0)


def next_hop_conscientious(topology: Topology, history: VisitHistory, at: str, now: int) -> str:
    """Pick the least recently visited neighbour of ``at`` and record the visit.

    Never-visited neighbours come first, then the oldest visit; visits in the
    same tick are ordered by when they were recorded, and never-visited ties go
    to the smallest node id. The chosen node is stamped with its arrival time
    ``now + hop_latency``.
    """
    nbrs = topology.neighbors(at)
    if not nbrs:
        raise NoRoute(at)

    def key(n: str) -> tuple[int, int, int, str]:
        if history.get(n) is None:
            return (0, 0, 0, n)
        return (1, *history.recency(n), n)

    chosen = min(nbrs, key=key)
    history.record(chosen, now + topology.hop_latency)
    return chosen
