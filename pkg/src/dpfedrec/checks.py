"""Quick invariant checks on tiny fixtures, run by ``dpfedrec check``.

These are smoke checks for an installed copy. The full property suite
lives in ``tests/``.
"""

from __future__ import annotations

import time
from collections import deque
from typing import Callable

import numpy as np

from .bus import MessageBus
from .config import ExperimentConfig, Mode
from .data import generate_synthetic, make_plan, partition, records_to_graph
from .federation import Dataset, fedavg, run_experiment
from .gnn import TrainConfig, init_params, loss_and_grad, propagation
from .graph import build_graph, item, merge, user
from .khop import ExtensionMode, build_share, extend_all
from .privacy import PrivacyBudget, PrivacyLedger, lapgraph_matrix
from .psi import PsiMode, psi_intersect
from .report import report_text


def _random_graph(rng, n=6, m=5, density=0.35):
    ratings = [
        (user(i), item(j), float(rng.integers(1, 6)))
        for i in range(n)
        for j in range(m)
        if rng.random() < density
    ]
    return build_graph(ratings)


def check_merge() -> None:
    a = build_graph([(user(0), item(0), 5.0)])
    b = build_graph([(user(0), item(0), 1.0), (user(1), item(1), 2.0)])
    out = merge(a, b.vertices, b.edges)
    assert out.edges[(user(0), item(0))] == 5.0, "local weight must win"
    assert out.num_edges() == 2


def check_lapgraph() -> None:
    rng = np.random.default_rng(1)
    for _ in range(50):
        adj = rng.random((int(rng.integers(1, 8)), int(rng.integers(1, 8)))) < 0.4
        out, _, t_noised = lapgraph_matrix(adj, PrivacyBudget(), rng)
        assert int(out.sum()) == t_noised
        exact, _, _ = lapgraph_matrix(adj, PrivacyBudget(1e6, 1e6), rng)
        assert np.array_equal(exact, adj)


def check_psi() -> None:
    rng = np.random.default_rng(2)
    for s in range(10):
        a = {user(int(i)) for i in rng.integers(0, 40, 15)}
        b = {user(int(i)) for i in rng.integers(0, 40, 15)}
        got, _ = psi_intersect(a, b, PsiMode.COMMUTATIVE, session_seed=s)
        assert got == a & b


def check_khop() -> None:
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = _random_graph(rng)
        if not g.users:
            continue
        seeds = set(sorted(g.users)[:2])
        for k in (0, 1, 2, 5):
            seen = {v: 0 for v in seeds}
            queue = deque(seeds)
            while queue:
                v = queue.popleft()
                if seen[v] < k:
                    for w in g.neighbors(v):
                        if w not in seen:
                            seen[w] = seen[v] + 1
                            queue.append(w)
            assert build_share(g, seeds, k).vertices == frozenset(seen)


def check_gradient() -> None:
    rng = np.random.default_rng(4)
    cfg = TrainConfig(d=2, layers=2)
    for s in range(5):
        g = _random_graph(rng, 3, 3, 0.6)
        batch = g.edge_list()
        if not batch:
            continue
        # zero-initialised biases put ReLUs exactly on their kink, so draw every entry
        params = init_params(3, 3, cfg, seed=s)
        params = params.unflatten(rng.normal(0.0, 0.7, params.flatten().size))
        op = propagation(g, 3, 3)
        _, analytic = loss_and_grad(params, op, batch)
        vec = params.flatten()
        for idx in range(vec.size):
            hi, lo = vec.copy(), vec.copy()
            hi[idx] += 1e-5
            lo[idx] -= 1e-5
            f_hi, _ = loss_and_grad(params.unflatten(hi), op, batch)
            f_lo, _ = loss_and_grad(params.unflatten(lo), op, batch)
            numeric = (f_hi - f_lo) / 2e-5
            rel = abs(numeric - analytic[idx]) / max(abs(numeric), abs(analytic[idx]), 1e-6)
            assert rel < 1e-4, f"parameter {idx}: relative error {rel:.2e}"


def check_fedavg() -> None:
    v = np.arange(6.0)
    assert np.array_equal(fedavg([v, v]), v)


def _tiny_dataset() -> Dataset:
    records, cats = generate_synthetic(20, 12, 90, 3, overlap=0.3, seed=0)
    return Dataset.from_records("tiny", records, cats)


def check_budget() -> None:
    ds = _tiny_dataset()
    graphs = partition(records_to_graph(ds.records), make_plan(ds.categories, 3))
    budget = PrivacyBudget()
    ledgers = [PrivacyLedger(i) for i in range(3)]
    res = extend_all(graphs, 2, ExtensionMode.DP, budget, bus=MessageBus(range(3)), ledgers=ledgers)
    for i in range(3):
        peers = sum(1 for (a, b), s in res.intersections.items() if i in (a, b) and s)
        assert abs(ledgers[i].total_spent() - peers * budget.total()) < 1e-9


def check_determinism() -> None:
    ds = _tiny_dataset()
    cfg = ExperimentConfig(
        mode=Mode.DP_FEDREC, clients=3, rounds=2, master_seed=7, train=TrainConfig(d=4, batch=16)
    )
    first = report_text(run_experiment(cfg, ds))
    second = report_text(run_experiment(cfg, ds))
    assert first == second


CHECKS: dict[str, Callable[[], None]] = {
    "merge keeps local weights": check_merge,
    "lapgraph popcount and high-epsilon recovery": check_lapgraph,
    "psi matches set intersection": check_psi,
    "k-hop share matches BFS": check_khop,
    "analytic gradient matches finite differences": check_gradient,
    "fedavg of equal vectors": check_fedavg,
    "ledger total equals peers times budget": check_budget,
    "identical seeds give identical reports": check_determinism,
}


def run_checks(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            fn()
        except AssertionError as exc:
            ok = False
            echo(f"FAIL  {name}: {exc}")
            continue
        echo(f"ok    {name} ({time.perf_counter() - t0:.2f}s)")
    return ok
