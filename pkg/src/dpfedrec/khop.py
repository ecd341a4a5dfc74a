"""K-hop graph extension between clients.

Every pair of clients intersects its user sets with PSI. Each side then
ships the part of its own graph within K hops of the intersection, in DP
mode after Lapgraph and weight noise, and merges what it receives.
"""

from __future__ import annotations

import enum
import struct
import time
from dataclasses import dataclass, field
from typing import Iterable

from .bus import MessageBus, TaggedChannel
from .graph import BipartiteGraph, Kind, VertexId, bfs_distances, merge
from .privacy import PrivacyBudget, PrivacyLedger, perturb_share
from .psi import CommutativeGroup, PsiMode, psi_intersect
from .seeding import int_seed, rng_for


class ExtensionMode(str, enum.Enum):
    PLAIN = "plain"
    DP = "dp"


class IntersectionVertexMissing(ValueError):
    pass


class ShareDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Share:
    sender: int
    recipient: int
    graph: BipartiteGraph
    k: int

    @property
    def vertices(self) -> frozenset[VertexId]:
        return self.graph.vertices

    @property
    def edges(self):
        return self.graph.edges


def build_share(g: BipartiteGraph, v_intersect: Iterable[VertexId], k: int) -> BipartiteGraph:
    """Vertices of ``g`` within ``k`` hops of the intersection, with their induced edges."""
    if k < 0:
        raise ValueError("k must be non-negative")
    seeds = frozenset(v_intersect)
    missing = seeds - g.vertices
    if missing:
        raise IntersectionVertexMissing(f"{sorted(missing)[0]!r} is not in the local graph")
    reach = bfs_distances(g, sorted(seeds), limit=k)
    return g.subgraph(reach)


_SHARE_MAGIC = b"SHR1"
_HEADER = struct.Struct(">4sIIIBdd")
_VERTEX = struct.Struct(">BI")
_EDGE = struct.Struct(">IId")


def encode_share(share: Share) -> bytes:
    """Sorted vertex list then sorted ``(user, item, weight)`` triples, each count-prefixed."""
    g = share.graph
    parts = [_HEADER.pack(_SHARE_MAGIC, share.sender, share.recipient, share.k, int(g.noised), g.r_min, g.r_max)]
    vertices = sorted(g.vertices)
    parts.append(struct.pack(">I", len(vertices)))
    parts.extend(_VERTEX.pack(int(v.kind), v.index) for v in vertices)
    edges = g.edge_list()
    parts.append(struct.pack(">I", len(edges)))
    parts.extend(_EDGE.pack(u.index, p.index, w) for u, p, w in edges)
    return b"".join(parts)


def decode_share(blob: bytes) -> Share:
    try:
        magic, sender, recipient, k, noised, r_min, r_max = _HEADER.unpack_from(blob)
        if magic != _SHARE_MAGIC:
            raise ShareDecodeError("bad share header")
        off = _HEADER.size
        (nv,) = struct.unpack_from(">I", blob, off)
        off += 4
        users, items = set(), set()
        for _ in range(nv):
            kind, idx = _VERTEX.unpack_from(blob, off)
            off += _VERTEX.size
            (users if kind == Kind.USER else items).add(VertexId(Kind(kind), idx))
        (ne,) = struct.unpack_from(">I", blob, off)
        off += 4
        edges = {}
        for _ in range(ne):
            u, p, w = _EDGE.unpack_from(blob, off)
            off += _EDGE.size
            edges[(VertexId(Kind.USER, u), VertexId(Kind.ITEM, p))] = w
    except struct.error as exc:
        raise ShareDecodeError(f"truncated share: {exc}") from None
    if off != len(blob):
        raise ShareDecodeError(f"{len(blob) - off} trailing bytes after share")
    g = BipartiteGraph(frozenset(users), frozenset(items), {}, noised=bool(noised), r_min=r_min, r_max=r_max)
    return Share(sender, recipient, g.with_edges(edges), k)


@dataclass
class ExtensionResult:
    graphs: list[BipartiteGraph]
    ledgers: list[PrivacyLedger]
    noising_time: list[float]
    intersections: dict[tuple[int, int], frozenset[VertexId]] = field(default_factory=dict)
    shares_sent: dict[tuple[int, int], Share] = field(default_factory=dict)


def extend_all(
    graphs: list[BipartiteGraph],
    k: int,
    mode: ExtensionMode | str = ExtensionMode.PLAIN,
    budget: PrivacyBudget | None = None,
    master_seed: int = 0,
    round_: int = 0,
    bus: MessageBus | None = None,
    psi_mode: PsiMode | str = PsiMode.COMMUTATIVE,
    group: CommutativeGroup | None = None,
    ledgers: list[PrivacyLedger] | None = None,
) -> ExtensionResult:
    """Run the pairwise exchange for every client and return the extended graphs.

    PSI runs once per unordered pair; shares flow in both directions. In DP
    mode each non-empty share is perturbed with its own noise stream and
    charged to the sender's ledger. Received shares are merged in ascending
    sender order, local weights taking precedence.
    """
    mode = ExtensionMode(mode)
    if mode is ExtensionMode.DP and budget is None:
        raise ValueError("DP extension needs a privacy budget")
    l = len(graphs)
    bus = bus if bus is not None else MessageBus(range(l))
    ledgers = ledgers if ledgers is not None else [PrivacyLedger(i) for i in range(l)]
    noising = [0.0] * l
    psi_channel = TaggedChannel(bus, "psi")
    out = ExtensionResult([], ledgers, noising)

    for i in range(l):
        for j in range(i + 1, l):
            ui = {v for v in graphs[i].users}
            uj = {v for v in graphs[j].users}
            common, _ = psi_intersect(
                ui, uj, psi_mode,
                session_seed=int_seed(master_seed, i, round_, "psi", j),
                group=group, bus=psi_channel, parties=(i, j),
            )
            out.intersections[(i, j)] = common
            for src, dst in ((i, j), (j, i)):
                sub = build_share(graphs[src], common, k)
                if mode is ExtensionMode.DP and common:
                    t0 = time.perf_counter()
                    noised = perturb_share(
                        sub, budget, rng_for(master_seed, src, round_, "share", dst),
                        ledger=ledgers[src], round_=round_, peer=dst,
                    )
                    noising[src] += time.perf_counter() - t0
                    sub = noised.graph
                share = Share(src, dst, sub, k)
                out.shares_sent[(src, dst)] = share
                bus.send(src, dst, encode_share(share), kind="share")

    for i in range(l):
        g = graphs[i]
        for j in range(l):
            if j == i:
                continue
            share = decode_share(bus.recv(i, j))
            g = merge(g, share.vertices, share.edges)
        out.graphs.append(g)
    return out


def khop_extension(
    client: int,
    graphs: list[BipartiteGraph],
    k: int,
    budget: PrivacyBudget | None = None,
    mode: ExtensionMode | str = ExtensionMode.PLAIN,
    **kwargs,
) -> BipartiteGraph:
    """Extended graph of a single client (the exchange itself is symmetric)."""
    return extend_all(graphs, k, mode, budget, **kwargs).graphs[client]
