"""MovieLens-format ingestion, category partitioning, train/test splits and a
synthetic non-IID rating generator."""

from __future__ import annotations

import enum
import io
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .graph import R_MAX, R_MIN, BipartiteGraph, VertexId, build_graph, item, user

UNKNOWN_CATEGORY = "Unknown"
DATA_ROOT_ENV = "DPFEDREC_DATA_ROOT"


class DataError(ValueError):
    pass


class MalformedLine(DataError):
    def __init__(self, lineno: int, line: str):
        super().__init__(f"line {lineno}: cannot parse {line!r}")
        self.lineno = lineno


class RatingOutOfRange(DataError):
    pass


class UnmappedItem(DataError):
    pass


class DatasetMissing(DataError, FileNotFoundError):
    pass


class InfeasibleParams(DataError):
    pass


@dataclass(frozen=True, slots=True)
class RatingRecord:
    user: VertexId
    item: VertexId
    rating: float
    timestamp: int = 0


class AssignmentRule(str, enum.Enum):
    FIRST_CATEGORY = "first"
    HASH_CATEGORY = "hash"


@dataclass(frozen=True)
class PartitionPlan:
    l: int
    item_to_client: dict[VertexId, int]
    assignment_rule: AssignmentRule = AssignmentRule.FIRST_CATEGORY


def _lines(stream: TextIO | Iterable[str] | str) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def parse_movielens(
    ratings_stream, items_stream=None, r_min: float = R_MIN, r_max: float = R_MAX
) -> tuple[list[RatingRecord], dict[VertexId, list[str]]]:
    """Parse ``UserID::MovieID::Rating::Timestamp`` and ``MovieID::Title::Genres`` lines.

    Repeated (user, item) pairs keep the record with the latest timestamp.
    Rated items missing from the item file get the ``Unknown`` category.
    """
    by_pair: dict[tuple[VertexId, VertexId], RatingRecord] = {}
    for lineno, line in enumerate(_lines(ratings_stream), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("::")
        if len(parts) != 4:
            raise MalformedLine(lineno, line)
        try:
            rec = RatingRecord(user(int(parts[0])), item(int(parts[1])), float(parts[2]), int(parts[3]))
        except ValueError:
            raise MalformedLine(lineno, line) from None
        if not r_min <= rec.rating <= r_max:
            raise RatingOutOfRange(f"line {lineno}: rating {rec.rating} outside [{r_min}, {r_max}]")
        key = (rec.user, rec.item)
        old = by_pair.get(key)
        if old is None or rec.timestamp >= old.timestamp:
            by_pair[key] = rec

    categories: dict[VertexId, list[str]] = {}
    if items_stream is not None:
        for lineno, line in enumerate(_lines(items_stream), 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            # titles may themselves contain "::" in principle; genres are always last
            head, sep, genres = line.rpartition("::")
            mid, sep2, _title = head.partition("::")
            if not sep or not sep2:
                raise MalformedLine(lineno, line)
            try:
                p = item(int(mid))
            except ValueError:
                raise MalformedLine(lineno, line) from None
            cats = [c for c in genres.split("|") if c and c != "(no genres listed)"]
            categories[p] = cats or [UNKNOWN_CATEGORY]

    records = list(by_pair.values())
    for rec in records:
        categories.setdefault(rec.item, [UNKNOWN_CATEGORY])
    return records, categories


def resolve_dataset_dir(path: str | os.PathLike) -> Path:
    p = Path(path)
    if not p.is_absolute() and not p.exists() and os.environ.get(DATA_ROOT_ENV):
        p = Path(os.environ[DATA_ROOT_ENV]) / p
    if not (p / "ratings.dat").is_file():
        raise DatasetMissing(f"no ratings.dat under {p}")
    return p


def load_movielens(path: str | os.PathLike) -> tuple[list[RatingRecord], dict[VertexId, list[str]]]:
    """Load ``ratings.dat`` and (if present) ``movies.dat`` from a dataset directory."""
    root = resolve_dataset_dir(path)
    # the MovieLens 1M movie titles are latin-1 encoded
    with open(root / "ratings.dat", encoding="latin-1") as fr:
        movies = root / "movies.dat"
        if movies.is_file():
            with open(movies, encoding="latin-1") as fi:
                return parse_movielens(fr, fi)
        return parse_movielens(fr)


def compact_ids(
    records: list[RatingRecord], categories: dict[VertexId, list[str]]
) -> tuple[list[RatingRecord], dict[VertexId, list[str]], int, int]:
    """Renumber users and items densely from 0, preserving relative order.

    Returns the remapped records and categories plus the user and item counts.
    """
    users = sorted({r.user for r in records})
    items = sorted({r.item for r in records})
    umap = {v: user(i) for i, v in enumerate(users)}
    imap = {v: item(i) for i, v in enumerate(items)}
    out = [RatingRecord(umap[r.user], imap[r.item], r.rating, r.timestamp) for r in records]
    cats = {imap[p]: list(c) for p, c in categories.items() if p in imap}
    return out, cats, len(users), len(items)


def records_to_graph(records: Iterable[RatingRecord], r_min=R_MIN, r_max=R_MAX) -> BipartiteGraph:
    return build_graph(((r.user, r.item, r.rating) for r in records), r_min, r_max)


def make_plan(
    categories: dict[VertexId, list[str]],
    l: int,
    rule: AssignmentRule | str = AssignmentRule.FIRST_CATEGORY,
) -> PartitionPlan:
    """Assign every item to a client through its category.

    Categories are sorted lexicographically and dealt round-robin to the
    ``l`` clients. FIRST_CATEGORY uses an item's first listed category;
    HASH_CATEGORY hashes the item's full category list instead.
    """
    if l < 1:
        raise ValueError("need at least one client")
    rule = AssignmentRule(rule)
    if rule is AssignmentRule.FIRST_CATEGORY:
        labels = {p: (c[0] if c else UNKNOWN_CATEGORY) for p, c in categories.items()}
        order = {c: k % l for k, c in enumerate(sorted(set(labels.values())))}
        mapping = {p: order[c] for p, c in labels.items()}
    else:
        mapping = {
            p: zlib.crc32("|".join(c or [UNKNOWN_CATEGORY]).encode()) % l
            for p, c in categories.items()
        }
    return PartitionPlan(l, mapping, rule)


def partition(
    records: Iterable[RatingRecord] | BipartiteGraph,
    plan: PartitionPlan,
) -> list[BipartiteGraph]:
    """Split ratings into ``plan.l`` client graphs by item ownership."""
    if isinstance(records, BipartiteGraph):
        triples = records.edge_list()
        r_min, r_max = records.r_min, records.r_max
    else:
        triples = [(r.user, r.item, r.rating) for r in records]
        r_min, r_max = R_MIN, R_MAX
    buckets: list[list] = [[] for _ in range(plan.l)]
    for u, p, w in triples:
        try:
            buckets[plan.item_to_client[p]].append((u, p, w))
        except KeyError:
            raise UnmappedItem(f"item {p!r} has no client assignment") from None
    return [build_graph(b, r_min, r_max) for b in buckets]


def train_test_split(
    g: BipartiteGraph, test_fraction: float, seed: int
) -> tuple[BipartiteGraph, list[tuple[VertexId, VertexId, float]]]:
    """Hold out a seeded random fraction of edges.

    A candidate edge is only moved to the test side when both endpoints keep
    at least one training edge; otherwise it stays in train, so no test edge
    refers to a vertex unseen in training.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    edges = g.edge_list()
    n_test = round(test_fraction * len(edges))
    if n_test == 0:
        return g, []
    order = np.random.default_rng(seed).permutation(len(edges))
    degree = {v: g.degree(v) for v in g.vertices}
    test = []
    for idx in order[:n_test]:
        u, p, w = edges[idx]
        if degree[u] > 1 and degree[p] > 1:
            degree[u] -= 1
            degree[p] -= 1
            test.append((u, p, w))
    held = {(u, p) for u, p, _ in test}
    train = g.with_edges({e: w for e, w in g.edges.items() if e not in held})
    test.sort()
    return train, test


def generate_synthetic(
    n_users: int,
    n_items: int,
    n_edges: int,
    n_categories: int,
    overlap: float = 0.2,
    seed: int = 0,
    zipf: float = 1.0,
) -> tuple[list[RatingRecord], dict[VertexId, list[str]]]:
    """Power-law bipartite ratings with planted item categories.

    Item ``j`` belongs to category ``j mod n_categories``. Each user has a home
    category; a fraction ``overlap`` of users additionally rate items in one
    other category, and only those users can end up in more than one client
    after partitioning. Ratings come from a low-rank model with user and item
    biases that are shared across categories.
    """
    if n_users < 1 or n_items < 1 or n_categories < 1:
        raise InfeasibleParams("user, item and category counts must be positive")
    if n_edges > n_users * n_items:
        raise InfeasibleParams(f"{n_edges} edges exceed {n_users}x{n_items} possible pairs")
    if not 0 <= overlap <= 1:
        raise InfeasibleParams("overlap must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_cat = min(n_categories, n_items)
    item_cat = np.arange(n_items) % n_cat
    home = rng.integers(0, n_cat, size=n_users)
    n_bridge = round(overlap * n_users) if n_cat > 1 else 0
    bridges = rng.choice(n_users, size=n_bridge, replace=False)
    extra = np.full(n_users, -1)
    for u in bridges:
        extra[u] = (home[u] + rng.integers(1, n_cat)) % n_cat

    allowed = (item_cat[None, :] == home[:, None]) | (item_cat[None, :] == extra[:, None])
    if n_edges > int(allowed.sum()):
        raise InfeasibleParams(
            f"{n_edges} edges exceed the {int(allowed.sum())} pairs allowed by the category structure"
        )

    # power-law popularity, randomly assigned to ranks
    w_user = (1.0 + rng.permutation(n_users)) ** -zipf
    w_item = (1.0 + rng.permutation(n_items)) ** -zipf
    weight = np.outer(w_user, w_item)

    chosen = np.zeros_like(allowed)
    # every user gets one edge in each of its categories when the budget allows
    n_required = n_users + n_bridge
    if n_edges >= n_required:
        for u in range(n_users):
            for c in (home[u], extra[u]):
                if c < 0:
                    continue
                cand = np.flatnonzero(item_cat == c)
                p = cand[rng.choice(len(cand), p=w_item[cand] / w_item[cand].sum())]
                chosen[u, p] = True
    remaining = n_edges - int(chosen.sum())
    if remaining > 0:
        # weighted sampling without replacement via exponential keys
        pool = np.flatnonzero((allowed & ~chosen).ravel())
        keys = rng.exponential(size=len(pool)) / weight.ravel()[pool]
        pick = pool[np.argsort(keys, kind="stable")[:remaining]]
        chosen.ravel()[pick] = True

    f = 4
    a = rng.normal(0, 0.6, size=(n_users, f))
    b = rng.normal(0, 0.6, size=(n_items, f))
    bias_u = rng.normal(0, 0.6, size=n_users)
    bias_i = rng.normal(0, 0.4, size=n_items)
    bias_c = rng.normal(0, 0.3, size=n_cat)
    us, ps = np.nonzero(chosen)
    raw = (
        3.5 + bias_u[us] + bias_i[ps] + bias_c[item_cat[ps]]
        + np.einsum("ij,ij->i", a[us], b[ps])
        + rng.normal(0, 0.3, size=len(us))
    )
    ratings = np.clip(np.rint(raw), R_MIN, R_MAX)

    records = [
        RatingRecord(user(u), item(p), float(r), 1_000_000_000 + k)
        for k, (u, p, r) in enumerate(zip(us.tolist(), ps.tolist(), ratings.tolist()))
    ]
    categories = {item(p): [f"Cat{item_cat[p]:02d}"] for p in range(n_items)}
    return records, categories


def write_movielens(
    path: str | os.PathLike,
    records: Iterable[RatingRecord],
    categories: dict[VertexId, list[str]],
) -> Path:
    """Write ``ratings.dat``/``movies.dat`` with 1-based IDs, as in MovieLens."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "ratings.dat", "w", encoding="latin-1", newline="\n") as f:
        for r in sorted(records, key=lambda r: (r.user, r.item)):
            f.write(f"{r.user.index + 1}::{r.item.index + 1}::{_fmt_rating(r.rating)}::{r.timestamp}\n")
    with open(root / "movies.dat", "w", encoding="latin-1", newline="\n") as f:
        for p in sorted(categories):
            f.write(f"{p.index + 1}::Item {p.index + 1}::{'|'.join(categories[p])}\n")
    return root


def _fmt_rating(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else repr(float(r))


def dataset_stats(g: BipartiteGraph) -> dict[str, int]:
    return {"users": len(g.users), "items": len(g.items), "edges": g.num_edges()}


def overlap_users(graphs: list[BipartiteGraph]) -> set[VertexId]:
    """Users present in more than one client graph."""
    seen: dict[VertexId, int] = {}
    for g in graphs:
        for u in g.users:
            seen[u] = seen.get(u, 0) + 1
    return {u for u, c in seen.items() if c > 1}


def item_owner(graphs: list[BipartiteGraph]) -> dict[VertexId, int]:
    return {p: i for i, g in enumerate(graphs) for p in g.items}


__all__ = [
    "AssignmentRule",
    "DATA_ROOT_ENV",
    "DataError",
    "DatasetMissing",
    "InfeasibleParams",
    "MalformedLine",
    "PartitionPlan",
    "RatingOutOfRange",
    "RatingRecord",
    "UnmappedItem",
    "compact_ids",
    "dataset_stats",
    "generate_synthetic",
    "item_owner",
    "load_movielens",
    "make_plan",
    "overlap_users",
    "parse_movielens",
    "partition",
    "records_to_graph",
    "resolve_dataset_dir",
    "train_test_split",
    "write_movielens",
]
