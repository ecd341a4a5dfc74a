"""Simulated clients and server running the five experiment systems.

One run: load and split the ratings, partition the training graph by item
category, optionally extend each client graph (plain or DP), then iterate
rounds of local SGD from the global parameters followed by FedAvg. After
every round the global model is scored on the shared test set, each test
edge on the graph of the client that owns its item.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bus import MessageBus
from .config import ExperimentConfig, Mode
from .data import (
    RatingRecord,
    compact_ids,
    load_movielens,
    make_plan,
    partition,
    records_to_graph,
    resolve_dataset_dir,
    train_test_split,
)
from .gnn import (
    Metrics,
    ShapeMismatch,
    forward,
    init_params,
    local_train,
    metrics,
    params_from_bytes,
    params_to_bytes,
    propagation,
    unflatten,
)
from .graph import BipartiteGraph, VertexId
from .khop import ExtensionMode, extend_all
from .privacy import PrivacyLedger, noise_local_weights
from .psi import Curve25519Group, Modp2048Group
from .seeding import SERVER, int_seed, rng_for

log = logging.getLogger(__name__)

SERVER_ID = -1


def fedavg(param_list: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted elementwise mean of flattened parameter vectors."""
    if not param_list:
        raise ShapeMismatch("nothing to average")
    vecs = [np.asarray(v, dtype=float) for v in param_list]
    shape = vecs[0].shape
    for v in vecs[1:]:
        if v.shape != shape:
            raise ShapeMismatch(f"parameter vectors of shapes {shape} and {v.shape}")
    return np.mean(np.stack(vecs), axis=0)


@dataclass
class RoundReport:
    round: int
    train_loss: list[float]
    metrics: Metrics
    noising_time: list[float]

    def to_record(self) -> dict[str, Any]:
        # timing is kept out so that reports are reproducible byte for byte
        return {
            "type": "round",
            "round": self.round,
            # a client without training edges has no loss to report
            "train_loss": [None if np.isnan(x) else x for x in self.train_loss],
            **self.metrics.as_dict(),
        }


@dataclass
class Dataset:
    """Ratings in a compact global ID space."""

    name: str
    records: list[RatingRecord]
    categories: dict[VertexId, list[str]]
    n: int
    m: int

    @classmethod
    def from_records(cls, name, records, categories) -> "Dataset":
        records, categories, n, m = compact_ids(records, categories)
        return cls(name, records, categories, n, m)

    @classmethod
    def load(cls, path) -> "Dataset":
        root = resolve_dataset_dir(path)
        records, categories = load_movielens(root)
        return cls.from_records(root.name, records, categories)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dataset: str
    rounds: list[RoundReport]
    final: dict[str, Any]
    timing: dict[str, Any]
    ledgers: list[PrivacyLedger] = field(default_factory=list)
    final_params: np.ndarray | None = None
    test_edges: list = field(default_factory=list)
    bus: MessageBus | None = None


def _group(name: str):
    if name == "x25519":
        return Curve25519Group()
    if name == "modp2048":
        return Modp2048Group()
    raise ValueError(f"unknown PSI group {name!r}")


def _graph_stats(graphs: list[BipartiteGraph]) -> dict[str, float]:
    l = len(graphs)
    return {
        "avg_users": sum(len(g.users) for g in graphs) / l,
        "avg_items": sum(len(g.items) for g in graphs) / l,
        "avg_edges": sum(g.num_edges() for g in graphs) / l,
    }


def prepare_clients(config: ExperimentConfig, dataset: Dataset):
    """Global split and per-client partition; returns graphs, test edges and owners."""
    g = records_to_graph(dataset.records)
    train, test = train_test_split(g, config.test_fraction, int_seed(config.master_seed, SERVER, 0, "split"))
    if config.mode is Mode.CENTRALIZED:
        return [train], test, [0] * len(test)
    plan = make_plan(dataset.categories, config.clients, config.partition_rule)
    graphs = partition(train, plan)
    owners = [plan.item_to_client[p] for _, p, _ in test]
    return graphs, test, owners


def _extend(config: ExperimentConfig, graphs, bus, ledgers, round_):
    mode = ExtensionMode.DP if config.mode is Mode.DP_FEDREC else ExtensionMode.PLAIN
    return extend_all(
        graphs, config.k, mode, config.budget,
        master_seed=config.master_seed, round_=round_, bus=bus,
        psi_mode=config.psi_mode, group=_group(config.psi_group), ledgers=ledgers,
    )


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> ExperimentResult:
    if config.noise_before_extension:
        raise NotImplementedError("noising the local graph before extension is not implemented")
    t_start = time.perf_counter()
    dataset = dataset or Dataset.load(config.dataset)
    base_graphs, test, owners = prepare_clients(config, dataset)
    l = len(base_graphs)
    bus = MessageBus([SERVER_ID, *range(l)])
    ledgers = [PrivacyLedger(i) for i in range(l)]

    def build_local(round_: int) -> tuple[list[BipartiteGraph], list[float]]:
        noising = [0.0] * l
        if config.mode.extends:
            ext = _extend(config, base_graphs, bus, ledgers, round_)
            return ext.graphs, ext.noising_time
        if config.mode is Mode.DP_FEDGRAPHNN:
            out = []
            for i, g in enumerate(base_graphs):
                t0 = time.perf_counter()
                out.append(noise_local_weights(g, config.local_noise_scale, rng_for(config.master_seed, i, round_, "local-noise")))
                noising[i] = time.perf_counter() - t0
            return out, noising
        return list(base_graphs), noising

    local_graphs, noising = build_local(0)
    total_noising = list(noising)
    ops = [propagation(g, dataset.n, dataset.m) for g in local_graphs]
    extended_stats = _graph_stats(local_graphs)

    test_by_client: list[list[int]] = [[] for _ in range(l)]
    for idx, owner in enumerate(owners):
        test_by_client[owner].append(idx)
    test_true = np.array([w for _, _, w in test], dtype=float)

    params = init_params(dataset.n, dataset.m, config.train, seed=int_seed(config.master_seed, SERVER, 0, "init"))
    shapes = params.shapes()
    global_vec = params.flatten()
    train_cfgs = [dataclasses.replace(config.train, seed=int_seed(config.master_seed, i, 0, "train")) for i in range(l)]
    client_edges = [g.edge_list() for g in local_graphs]
    e = config.train.local_epochs

    reports: list[RoundReport] = []
    for r in range(config.rounds):
        if r > 0 and config.reextend_every_round and config.mode.extends:
            local_graphs, noising = build_local(r)
            total_noising = [a + b for a, b in zip(total_noising, noising)]
            ops = [propagation(g, dataset.n, dataset.m) for g in local_graphs]
            client_edges = [g.edge_list() for g in local_graphs]
        elif r > 0:
            noising = [0.0] * l

        blob = params_to_bytes(unflatten(global_vec, shapes))
        for i in range(l):
            bus.send(SERVER_ID, i, blob, kind="model")
        losses = []
        for i in range(l):
            start = params_from_bytes(bus.recv(i, SERVER_ID))
            new, trace = local_train(start, ops[i], client_edges[i], train_cfgs[i], start_epoch=r * e)
            bus.send(i, SERVER_ID, params_to_bytes(new), kind="model")
            losses.append(trace[-1])
        uploads = [params_from_bytes(bus.recv(SERVER_ID, i)).flatten() for i in range(l)]
        global_vec = fedavg(uploads)

        pred = np.empty(len(test))
        current = unflatten(global_vec, shapes)
        for i in range(l):
            idx = test_by_client[i]
            if idx:
                pred[idx] = forward(current, ops[i], [(test[j][0], test[j][1]) for j in idx])
        m_r = metrics(pred, test_true)
        reports.append(RoundReport(r, losses, m_r, list(noising)))
        log.info("%s round %d: rmse=%.4f mae=%.4f", config.mode.value, r, m_r.rmse, m_r.mae)

    last = reports[-1].metrics
    final = {
        "type": "final",
        "dataset": dataset.name,
        "mode": config.mode.value,
        "system": config.mode.label,
        "clients": l,
        "k": config.effective_k,
        "rounds": config.rounds,
        "master_seed": config.master_seed,
        **last.as_dict(),
        "test_edges": len(test),
        "global": {"users": dataset.n, "items": dataset.m, "edges": len(dataset.records)},
        "client_graphs": _graph_stats(base_graphs),
        "extended_graphs": extended_stats,
        "privacy_spent": [ledger.total_spent() for ledger in ledgers],
        "bytes": {
            "psi": bus.total_bytes("psi"),
            "share": bus.total_bytes("share"),
            "model": bus.total_bytes("model"),
        },
    }
    timing = {
        "noising_time_s": total_noising,
        "mean_noising_time_s": float(np.mean(total_noising)),
        "wall_clock_s": time.perf_counter() - t_start,
    }
    return ExperimentResult(
        config, dataset.name, reports, final, timing, ledgers, global_vec, test, bus
    )
