"""Fixed experiment harnesses shared by the scripts and the acceptance tests."""

from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np

from .bus import MessageBus
from .config import ExperimentConfig, Mode
from .data import generate_synthetic, make_plan, partition, records_to_graph
from .federation import Dataset, run_experiment
from .gnn import TrainConfig
from .khop import ExtensionMode, extend_all
from .privacy import PrivacyBudget

# small non-IID benchmark: 4 categories, one client each, 20% bridge users
NONIID_DATA = dict(n_users=50, n_items=30, n_edges=360, n_categories=4, overlap=0.2, seed=0)
NONIID_TRAIN = TrainConfig(d=16, layers=2, lr=0.1, local_epochs=10, batch=32)
NONIID_CLIENTS = 4
NONIID_K = 2
NONIID_ROUNDS = 50


def noniid_dataset() -> Dataset:
    records, cats = generate_synthetic(**NONIID_DATA)
    return Dataset.from_records("synthetic-noniid", records, cats)


def noniid_config(mode: Mode | str, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        mode=Mode(mode),
        clients=NONIID_CLIENTS,
        k=NONIID_K,
        rounds=NONIID_ROUNDS,
        master_seed=seed,
        budget=PrivacyBudget(eps_topology=1.0, eps_weights=1.0),
        train=NONIID_TRAIN,
    )


def noniid_rmse(modes, seeds=range(5), dataset: Dataset | None = None) -> dict[str, list[float]]:
    """Final RMSE of each mode on the non-IID fixture, one value per seed."""
    dataset = dataset or noniid_dataset()
    out: dict[str, list[float]] = {}
    for mode in modes:
        mode = Mode(mode)
        out[mode.value] = [run_experiment(noniid_config(mode, s), dataset).final["rmse"] for s in seeds]
    return out


def medians(rmse: dict[str, list[float]]) -> dict[str, float]:
    return {mode: statistics.median(v) for mode, v in rmse.items()}


@dataclass(frozen=True)
class CommPoint:
    clients: int
    psi_bytes: int
    share_bytes: int
    avg_users: float
    avg_edges: float

    @property
    def total(self) -> int:
        return self.psi_bytes + self.share_bytes


def comm_point(
    clients: int,
    users_per_client: int = 40,
    items_per_client: int = 20,
    edges_per_client: int = 300,
    overlap: float = 0.2,
    k: int = 2,
    seed: int = 0,
) -> CommPoint:
    """PSI and share bytes of one DP extension pass.

    The dataset grows with the client count so that every client graph keeps
    roughly the same size: one category per client, per-client user, item
    and edge counts held fixed.
    """
    records, cats = generate_synthetic(
        users_per_client * clients, items_per_client * clients, edges_per_client * clients,
        clients, overlap=overlap, seed=seed,
    )
    ds = Dataset.from_records("comm", records, cats)
    graphs = partition(records_to_graph(ds.records), make_plan(ds.categories, clients))
    bus = MessageBus(range(clients))
    extend_all(graphs, k, ExtensionMode.DP, PrivacyBudget(), master_seed=seed, bus=bus)
    return CommPoint(
        clients,
        bus.total_bytes("psi"),
        bus.total_bytes("share"),
        float(np.mean([len(g.users) for g in graphs])),
        float(np.mean([g.num_edges() for g in graphs])),
    )


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def comm_trend(client_counts=(2, 4, 8), **kw) -> tuple[list[CommPoint], float]:
    points = [comm_point(l, **kw) for l in client_counts]
    return points, loglog_slope([p.clients for p in points], [p.total for p in points])
