"""Weighted user-item bipartite graphs.

Graphs are immutable: ``merge`` and the constructors always return new
objects, so a graph can be shared freely between simulated clients.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple

R_MIN = 1.0
R_MAX = 5.0


class Kind(enum.IntEnum):
    USER = 0
    ITEM = 1


class VertexId(NamedTuple):
    """A vertex in the global ID space, ordered by kind and then index."""

    kind: Kind
    index: int

    def __repr__(self) -> str:
        return f"{'u' if self.kind == Kind.USER else 'p'}{self.index}"


def user(index: int) -> VertexId:
    return VertexId(Kind.USER, int(index))


def item(index: int) -> VertexId:
    return VertexId(Kind.ITEM, int(index))


class GraphError(ValueError):
    pass


class DuplicateEdge(GraphError):
    def __init__(self, u: VertexId, p: VertexId):
        super().__init__(f"duplicate edge ({u!r}, {p!r})")
        self.user, self.item = u, p


class WeightOutOfRange(GraphError):
    pass


class DanglingEdge(GraphError):
    pass


class VertexNotInGraph(GraphError):
    pass


class EmptyTargetSet(GraphError):
    pass


Edge = tuple[VertexId, VertexId]


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    users: frozenset[VertexId]
    items: frozenset[VertexId]
    edges: Mapping[Edge, float]
    noised: bool = False
    r_min: float = R_MIN
    r_max: float = R_MAX
    _nbrs: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", MappingProxyType(dict(self.edges)))

    @classmethod
    def empty(cls, r_min: float = R_MIN, r_max: float = R_MAX) -> "BipartiteGraph":
        return cls(frozenset(), frozenset(), {}, r_min=r_min, r_max=r_max)

    @property
    def vertices(self) -> frozenset[VertexId]:
        return self.users | self.items

    def __contains__(self, v: object) -> bool:
        return v in self.users or v in self.items

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.users == other.users
            and self.items == other.items
            and dict(self.edges) == dict(other.edges)
            and self.noised == other.noised
        )

    def __repr__(self) -> str:
        return (
            f"BipartiteGraph(users={len(self.users)}, items={len(self.items)}, "
            f"edges={len(self.edges)}{', noised' if self.noised else ''})"
        )

    def num_edges(self) -> int:
        return len(self.edges)

    def edge_list(self) -> list[tuple[VertexId, VertexId, float]]:
        """Edges as ``(user, item, weight)`` triples in sorted order."""
        return [(u, p, w) for (u, p), w in sorted(self.edges.items())]

    def neighbors(self, v: VertexId) -> tuple[VertexId, ...]:
        if self._nbrs is None:
            nbrs: dict[VertexId, list[VertexId]] = {x: [] for x in self.vertices}
            for u, p in sorted(self.edges):
                nbrs[u].append(p)
                nbrs[p].append(u)
            object.__setattr__(self, "_nbrs", {k: tuple(x) for k, x in nbrs.items()})
        try:
            return self._nbrs[v]
        except KeyError:
            raise VertexNotInGraph(repr(v)) from None

    def degree(self, v: VertexId) -> int:
        return len(self.neighbors(v))

    def subgraph(self, vertices: Iterable[VertexId]) -> "BipartiteGraph":
        """Induced subgraph on ``vertices`` (which must belong to the graph)."""
        keep = frozenset(vertices)
        missing = keep - self.vertices
        if missing:
            raise VertexNotInGraph(repr(sorted(missing)[0]))
        return BipartiteGraph(
            frozenset(v for v in keep if v.kind == Kind.USER),
            frozenset(v for v in keep if v.kind == Kind.ITEM),
            {e: w for e, w in self.edges.items() if e[0] in keep and e[1] in keep},
            noised=self.noised,
            r_min=self.r_min,
            r_max=self.r_max,
        )

    def with_edges(self, edges: Mapping[Edge, float], noised: bool | None = None) -> "BipartiteGraph":
        """Same vertex sets, replacement edge map."""
        for u, p in edges:
            if u not in self.users or p not in self.items:
                raise DanglingEdge(f"({u!r}, {p!r})")
        return BipartiteGraph(
            self.users,
            self.items,
            edges,
            noised=self.noised if noised is None else noised,
            r_min=self.r_min,
            r_max=self.r_max,
        )


def _check_edge(u: VertexId, p: VertexId) -> None:
    if u.kind != Kind.USER or p.kind != Kind.ITEM:
        raise GraphError(f"edge ({u!r}, {p!r}) must connect a user to an item")


def build_graph(
    ratings: Iterable[tuple[VertexId, VertexId, float]],
    r_min: float = R_MIN,
    r_max: float = R_MAX,
) -> BipartiteGraph:
    users, items, edges = set(), set(), {}
    for u, p, w in ratings:
        _check_edge(u, p)
        if (u, p) in edges:
            raise DuplicateEdge(u, p)
        w = float(w)
        if not r_min <= w <= r_max:
            raise WeightOutOfRange(f"weight {w} of ({u!r}, {p!r}) outside [{r_min}, {r_max}]")
        edges[(u, p)] = w
        users.add(u)
        items.add(p)
    return BipartiteGraph(frozenset(users), frozenset(items), edges, r_min=r_min, r_max=r_max)


def bfs_distances(
    g: BipartiteGraph, sources: Iterable[VertexId], limit: int | None = None
) -> dict[VertexId, int]:
    """Hop distance from the nearest source to every reachable vertex.

    With ``limit`` set, the search stops expanding past that depth.
    """
    dist: dict[VertexId, int] = {}
    queue: deque[VertexId] = deque()
    for s in sources:
        if s not in g:
            raise VertexNotInGraph(repr(s))
        if s not in dist:
            dist[s] = 0
            queue.append(s)
    while queue:
        v = queue.popleft()
        d = dist[v]
        if limit is not None and d >= limit:
            continue
        for x in g.neighbors(v):
            if x not in dist:
                dist[x] = d + 1
                queue.append(x)
    return dist


def dist(v: VertexId, targets: Iterable[VertexId], g: BipartiteGraph) -> int | None:
    """Minimum hop count from ``v`` to any target; ``None`` if unreachable."""
    targets = set(targets)
    if not targets:
        raise EmptyTargetSet("target set is empty")
    if v not in g:
        raise VertexNotInGraph(repr(v))
    # search outwards from the single vertex; targets outside g are unreachable
    found = bfs_distances(g, [v])
    hits = [found[t] for t in targets if t in found]
    return min(hits) if hits else None


def merge(
    g: BipartiteGraph,
    v_extra: Iterable[VertexId] = (),
    e_extra: Mapping[Edge, float] | None = None,
) -> BipartiteGraph:
    """Union of ``g`` with extra vertices and edges; ``g``'s weights win on conflict."""
    v_extra = frozenset(v_extra)
    e_extra = e_extra or {}
    users = g.users | {v for v in v_extra if v.kind == Kind.USER}
    items = g.items | {v for v in v_extra if v.kind == Kind.ITEM}
    edges = dict(g.edges)
    for (u, p), w in e_extra.items():
        _check_edge(u, p)
        if u not in users or p not in items:
            raise DanglingEdge(f"({u!r}, {p!r}) has an endpoint outside the merged vertex set")
        edges.setdefault((u, p), float(w))
    return BipartiteGraph(
        frozenset(users), frozenset(items), edges, noised=g.noised, r_min=g.r_min, r_max=g.r_max
    )


def merge_graphs(graphs: Iterable[BipartiteGraph]) -> BipartiteGraph:
    graphs = list(graphs)
    if not graphs:
        return BipartiteGraph.empty()
    out = graphs[0]
    for h in graphs[1:]:
        out = merge(out, h.vertices, h.edges)
    return out
