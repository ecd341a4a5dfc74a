"""Laplace mechanisms for graph shares and the per-client privacy ledger.

Topology is randomised with the Lapgraph construction: Laplace noise on
every cell of the dense user-item 0/1 matrix, a noised edge count T', and
the top T' noisy cells kept as edges. Edge weights then get plain Laplace
noise calibrated to the rating range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graph import BipartiteGraph, Edge, VertexId

MAX_DENSE_CELLS = 10**8


class PrivacyError(ValueError):
    pass


class NonPositiveScale(PrivacyError):
    pass


class MatrixTooLarge(PrivacyError):
    pass


class BudgetExhausted(PrivacyError):
    pass


@dataclass(frozen=True)
class PrivacyBudget:
    eps_topology: float = 1.0
    eps_weights: float = 1.0
    sparsity_fraction: float = 0.01

    def __post_init__(self):
        if self.eps_topology <= 0 or self.eps_weights <= 0:
            raise PrivacyError("privacy budgets must be strictly positive")
        if not 0 < self.sparsity_fraction < 1:
            raise PrivacyError("sparsity_fraction must lie in (0, 1)")

    def total(self) -> float:
        return self.eps_topology + self.eps_weights

    @property
    def eps_count(self) -> float:
        """Slice of the topology budget spent on the edge count."""
        return self.sparsity_fraction * self.eps_topology

    @property
    def eps_cells(self) -> float:
        return (1.0 - self.sparsity_fraction) * self.eps_topology


@dataclass(frozen=True)
class LedgerEntry:
    round: int
    peer: int
    eps_topology: float
    eps_weights: float


@dataclass
class PrivacyLedger:
    """Cumulative record of the budget one client has spent.

    Each (round, peer) slot may be charged once; sequential composition
    makes the total the plain sum of the entries.
    """

    client: int = 0
    entries: list[LedgerEntry] = field(default_factory=list)

    def charge(self, round_: int, peer: int, budget: PrivacyBudget) -> LedgerEntry:
        if any(e.round == round_ and e.peer == peer for e in self.entries):
            raise BudgetExhausted(
                f"client {self.client} already spent its budget for peer {peer} in round {round_}"
            )
        entry = LedgerEntry(round_, peer, budget.eps_topology, budget.eps_weights)
        self.entries.append(entry)
        return entry

    def total_spent(self) -> float:
        return sum(e.eps_topology + e.eps_weights for e in self.entries)


def laplace_from_uniform(u, scale: float):
    """Inverse-CDF transform of ``u`` uniform on (-1/2, 1/2) to Laplace(0, scale)."""
    if scale <= 0:
        raise NonPositiveScale(f"Laplace scale must be positive, got {scale}")
    u = np.asarray(u, dtype=float)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _open_uniform(rng: np.random.Generator, size=None):
    u = rng.random(size) - 0.5
    # rng.random can return exactly 0.0, which maps to the closed end -1/2
    return np.where(u <= -0.5, np.nextafter(-0.5, 0.0), u)


def laplace_noise(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    if scale <= 0:
        raise NonPositiveScale(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(_open_uniform(rng, size), scale)


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    if scale <= 0:
        raise NonPositiveScale(f"Laplace scale must be positive, got {scale}")
    return float(laplace_from_uniform(_open_uniform(rng), scale))


class LapgraphResult(NamedTuple):
    matrix: np.ndarray  # bool, rows follow users, columns follow items
    users: tuple[VertexId, ...]
    items: tuple[VertexId, ...]
    true_count: int
    noised_count: int

    def edges(self) -> list[Edge]:
        rows, cols = np.nonzero(self.matrix)
        return [(self.users[r], self.items[c]) for r, c in zip(rows.tolist(), cols.tolist())]


def lapgraph_matrix(
    adjacency: np.ndarray, budget: PrivacyBudget, rng: np.random.Generator
) -> tuple[np.ndarray, int, int]:
    """Randomise a 0/1 matrix; returns ``(output, T, T')``.

    Draw order is fixed: first the edge-count noise, then one draw per cell
    in row-major order.
    """
    adj = np.asarray(adjacency).astype(bool)
    cells = adj.size
    if cells > MAX_DENSE_CELLS:
        raise MatrixTooLarge(f"{adj.shape} has {cells} cells, limit is {MAX_DENSE_CELLS}")
    t_true = int(adj.sum())
    t_noised = int(np.rint(t_true + laplace_sample(1.0 / budget.eps_count, rng)))
    t_noised = min(max(t_noised, 0), cells)
    noisy = adj.astype(float) + laplace_noise(1.0 / budget.eps_cells, adj.shape, rng)
    out = np.zeros(cells, dtype=bool)
    if t_noised:
        # stable sort on the negated values breaks ties in row-major order
        top = np.argsort(-noisy.ravel(), kind="stable")[:t_noised]
        out[top] = True
    return out.reshape(adj.shape), t_true, t_noised


def lapgraph(g: BipartiteGraph, budget: PrivacyBudget, rng: np.random.Generator) -> LapgraphResult:
    users = tuple(sorted(g.users))
    items = tuple(sorted(g.items))
    if len(users) * len(items) > MAX_DENSE_CELLS:
        raise MatrixTooLarge(f"{len(users)}x{len(items)} share exceeds {MAX_DENSE_CELLS} cells")
    row = {u: i for i, u in enumerate(users)}
    col = {p: j for j, p in enumerate(items)}
    adj = np.zeros((len(users), len(items)), dtype=bool)
    for u, p in g.edges:
        adj[row[u], col[p]] = True
    out, t_true, t_noised = lapgraph_matrix(adj, budget, rng)
    return LapgraphResult(out, users, items, t_true, t_noised)


def noise_weights(
    g: BipartiteGraph,
    topology: LapgraphResult,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> BipartiteGraph:
    """Attach Laplace-noised, clamped weights to the Lapgraph edge set.

    Surviving edges start from their true weight, fabricated ones from the
    midpoint of the rating range. Sensitivity is the rating range width.
    """
    lo, hi = g.r_min, g.r_max
    midpoint = (lo + hi) / 2
    edges = topology.edges()
    base = np.array([g.edges.get(e, midpoint) for e in edges], dtype=float)
    noise = laplace_noise((hi - lo) / budget.eps_weights, len(edges), rng)
    weights = np.clip(base + noise, lo, hi)
    return g.with_edges(dict(zip(edges, weights.tolist())), noised=True)


@dataclass(frozen=True)
class NoisedSubgraph:
    graph: BipartiteGraph
    eps_topology: float
    eps_weights: float
    true_count: int
    noised_count: int


def perturb_share(
    sub: BipartiteGraph,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    ledger: PrivacyLedger | None = None,
    round_: int = 0,
    peer: int = 0,
) -> NoisedSubgraph:
    """Lapgraph followed by weight noise; charges ``ledger`` when given."""
    if ledger is not None:
        ledger.charge(round_, peer, budget)
    topology = lapgraph(sub, budget, rng)
    noised = noise_weights(sub, topology, budget, rng)
    return NoisedSubgraph(
        noised, budget.eps_topology, budget.eps_weights, topology.true_count, topology.noised_count
    )


def noise_local_weights(g: BipartiteGraph, scale: float, rng: np.random.Generator) -> BipartiteGraph:
    """Add Laplace(0, scale) to every edge weight and clamp to the rating range.

    This is the weight-only baseline: topology is left untouched.
    """
    edges = sorted(g.edges)
    w = np.array([g.edges[e] for e in edges], dtype=float)
    w = np.clip(w + laplace_noise(scale, len(edges), rng), g.r_min, g.r_max)
    return g.with_edges(dict(zip(edges, w.tolist())), noised=True)
