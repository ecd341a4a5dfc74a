"""Rating-prediction GCN written directly in numpy.

Users occupy rows ``0..n-1`` and items rows ``n..n+m-1`` of one stacked
representation matrix. Each layer computes ``relu(A_hat @ H @ W.T + b)``
with the self-looped, symmetrically normalised adjacency ``A_hat``; a
two-layer MLP scores the concatenated endpoint representations and a
scaled sigmoid maps the score into the rating range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import R_MAX, R_MIN, BipartiteGraph, Kind, VertexId


class GnnError(ValueError):
    pass


class UnknownVertexId(GnnError):
    pass


class EmptyBatch(GnnError):
    pass


class EmptyTestSet(GnnError):
    pass


class ShapeMismatch(GnnError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    d: int = 16
    layers: int = 2
    hidden: int | None = None  # scorer width, defaults to d
    lr: float = 0.05
    local_epochs: int = 1
    batch: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.layers < 1:
            raise GnnError("d and layers must be at least 1")
        if self.lr < 0:
            raise GnnError("learning rate must be non-negative")
        if self.local_epochs < 1 or self.batch < 1:
            raise GnnError("local_epochs and batch must be at least 1")

    @property
    def width(self) -> int:
        return self.hidden or self.d


@dataclass
class ModelParams:
    user_emb: np.ndarray
    item_emb: np.ndarray
    gcn_w: list[np.ndarray]
    gcn_b: list[np.ndarray]
    pred_w1: np.ndarray  # (hidden, 2d)
    pred_b1: np.ndarray
    pred_w2: np.ndarray  # (hidden,)
    pred_b2: np.ndarray = field(default_factory=lambda: np.zeros(()))

    @property
    def n(self) -> int:
        return self.user_emb.shape[0]

    @property
    def m(self) -> int:
        return self.item_emb.shape[0]

    @property
    def d(self) -> int:
        return self.user_emb.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [
            self.user_emb, self.item_emb,
            *[x for wb in zip(self.gcn_w, self.gcn_b) for x in wb],
            self.pred_w1, self.pred_b1, self.pred_w2, self.pred_b2,
        ]

    def shapes(self) -> list[tuple[int, ...]]:
        return [a.shape for a in self.arrays()]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "ModelParams":
        arrays = [np.array(a, dtype=float) for a in arrays]
        n_layers = (len(arrays) - 6) // 2
        return cls(
            arrays[0], arrays[1],
            arrays[2 : 2 + 2 * n_layers : 2], arrays[3 : 3 + 2 * n_layers : 2],
            *arrays[2 + 2 * n_layers :],
        )

    def unflatten(self, vec: np.ndarray) -> "ModelParams":
        """New params with this object's shapes and values taken from ``vec``."""
        return unflatten(vec, self.shapes())

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays([a.copy() for a in self.arrays()])


def unflatten(vec: np.ndarray, shapes: Sequence[tuple[int, ...]]) -> ModelParams:
    vec = np.asarray(vec, dtype=float)
    sizes = [int(np.prod(s)) for s in shapes]
    if vec.shape != (sum(sizes),):
        raise ShapeMismatch(f"vector of length {vec.size}, shapes need {sum(sizes)}")
    out, off = [], 0
    for s, k in zip(shapes, sizes):
        out.append(vec[off : off + k].reshape(s).copy())
        off += k
    return ModelParams.from_arrays(out)


def param_count(n: int, m: int, config: TrainConfig) -> int:
    d, h = config.d, config.width
    return n * d + m * d + config.layers * (d * d + d) + (2 * d * h + h + h + 1)


def fan_in_bound(fan_in: int) -> float:
    return float(1.0 / np.sqrt(fan_in))


def init_params(n: int, m: int, config: TrainConfig, seed: int | None = None) -> ModelParams:
    if n < 1 or m < 1:
        raise GnnError("need at least one user and one item")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d, h = config.d, config.width
    emb = 1.0 / np.sqrt(d)
    user_emb = rng.uniform(-emb, emb, size=(n, d))
    item_emb = rng.uniform(-emb, emb, size=(m, d))
    gcn_w = [rng.uniform(-fan_in_bound(d), fan_in_bound(d), size=(d, d)) for _ in range(config.layers)]
    gcn_b = [np.zeros(d) for _ in range(config.layers)]
    w1 = rng.uniform(-fan_in_bound(2 * d), fan_in_bound(2 * d), size=(h, 2 * d))
    w2 = rng.uniform(-fan_in_bound(h), fan_in_bound(h), size=h)
    return ModelParams(user_emb, item_emb, gcn_w, gcn_b, w1, np.zeros(h), w2, np.zeros(()))


# -- serialisation ---------------------------------------------------------

_MAGIC = b"PRM1"


def params_to_bytes(params: ModelParams) -> bytes:
    """Shape header followed by the flat little-endian float64 vector."""
    shapes = params.shapes()
    head = [_MAGIC, struct.pack(">I", len(shapes))]
    for s in shapes:
        head.append(struct.pack(f">I{len(s)}I", len(s), *s))
    return b"".join(head) + params.flatten().astype("<f8").tobytes()


def params_from_bytes(blob: bytes) -> ModelParams:
    if blob[:4] != _MAGIC:
        raise ShapeMismatch("not a parameter blob")
    off = 4
    (count,) = struct.unpack_from(">I", blob, off)
    off += 4
    shapes = []
    for _ in range(count):
        (nd,) = struct.unpack_from(">I", blob, off)
        off += 4
        shapes.append(struct.unpack_from(f">{nd}I", blob, off))
        off += 4 * nd
    vec = np.frombuffer(blob, dtype="<f8", offset=off)
    return unflatten(vec.astype(float), [tuple(s) for s in shapes])


# -- graph operator --------------------------------------------------------


@dataclass(frozen=True)
class Propagation:
    """Normalised adjacency over the full ``n + m`` ID space."""

    matrix: sp.csr_matrix
    n: int
    m: int
    r_min: float = R_MIN
    r_max: float = R_MAX


def propagation(g: BipartiteGraph, n: int, m: int) -> Propagation:
    """Build ``D^-1/2 (A + I) D^-1/2``; vertices absent from ``g`` keep only the self-loop."""
    if g.edges:
        us = np.fromiter((u.index for u, _ in g.edges), dtype=np.int64, count=len(g.edges))
        ps = np.fromiter((p.index for _, p in g.edges), dtype=np.int64, count=len(g.edges))
    else:
        us = ps = np.zeros(0, dtype=np.int64)
    if (us >= n).any() or (ps >= m).any():
        raise UnknownVertexId("graph references vertices outside the model's ID space")
    size = n + m
    rows = np.concatenate([us, ps + n, np.arange(size)])
    cols = np.concatenate([ps + n, us, np.arange(size)])
    deg = np.bincount(rows, minlength=size).astype(float)  # includes the self-loop
    scale = 1.0 / np.sqrt(deg)
    vals = scale[rows] * scale[cols]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return Propagation(mat, n, m, g.r_min, g.r_max)


def _as_propagation(g, n: int, m: int) -> Propagation:
    if isinstance(g, Propagation):
        if (g.n, g.m) != (n, m):
            raise ShapeMismatch(f"operator built for {(g.n, g.m)}, params have {(n, m)}")
        return g
    return propagation(g, n, m)


def _query_indices(params: ModelParams, edges) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(edges, tuple) and len(edges) == 2 and isinstance(edges[0], np.ndarray):
        u, p = edges
    else:
        edges = list(edges)
        for e in edges:
            if e[0].kind != Kind.USER or e[1].kind != Kind.ITEM:
                raise UnknownVertexId(f"query ({e[0]!r}, {e[1]!r}) is not a user-item pair")
        u = np.fromiter((e[0].index for e in edges), dtype=np.int64, count=len(edges))
        p = np.fromiter((e[1].index for e in edges), dtype=np.int64, count=len(edges))
    if len(u) and (u.min() < 0 or u.max() >= params.n or p.min() < 0 or p.max() >= params.m):
        raise UnknownVertexId("query vertex outside the model's ID space")
    return u, p


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _forward(params: ModelParams, op: Propagation, u: np.ndarray, p: np.ndarray):
    A = op.matrix
    h = np.vstack([params.user_emb, params.item_emb])
    cache = []
    for w, b in zip(params.gcn_w, params.gcn_b):
        agg = A @ h
        pre = agg @ w.T + b
        cache.append((agg, pre))
        h = np.maximum(pre, 0.0)
    x = np.hstack([h[u], h[op.n + p]])
    a1 = x @ params.pred_w1.T + params.pred_b1
    z1 = np.maximum(a1, 0.0)
    score = z1 @ params.pred_w2 + params.pred_b2
    sig = _sigmoid(score)
    pred = op.r_min + (op.r_max - op.r_min) * sig
    return pred, (cache, x, a1, z1, sig)


def forward(params: ModelParams, g, query_edges) -> np.ndarray:
    """Predicted ratings for ``query_edges`` given the message-passing graph ``g``.

    ``g`` may be a ``BipartiteGraph`` or a prebuilt ``Propagation``;
    ``query_edges`` is an iterable of ``(user, item)`` pairs or a pair of
    index arrays.
    """
    op = _as_propagation(g, params.n, params.m)
    u, p = _query_indices(params, query_edges)
    return _forward(params, op, u, p)[0]


def loss_and_grad(params: ModelParams, g, batch) -> tuple[float, np.ndarray]:
    """Mean squared error over ``batch`` and its gradient as a flat vector.

    ``batch`` holds ``(user, item, rating)`` triples, or a tuple of arrays
    ``(users, items, ratings)``.
    """
    op = _as_propagation(g, params.n, params.m)
    if isinstance(batch, tuple) and len(batch) == 3 and isinstance(batch[0], np.ndarray):
        u, p, y = batch
        _query_indices(params, (u, p))
    else:
        batch = list(batch)
        u, p = _query_indices(params, [(b[0], b[1]) for b in batch])
        y = np.array([b[2] for b in batch], dtype=float)
    if len(u) == 0:
        raise EmptyBatch("cannot differentiate an empty batch")
    pred, (cache, x, a1, z1, sig) = _forward(params, op, u, p)
    resid = pred - y
    loss = float(np.mean(resid**2))

    d = params.d
    d_pred = 2.0 * resid / len(u)
    d_score = d_pred * (op.r_max - op.r_min) * sig * (1.0 - sig)
    g_w2 = z1.T @ d_score
    g_b2 = np.asarray(d_score.sum())
    d_a1 = np.outer(d_score, params.pred_w2) * (a1 > 0)
    g_w1 = d_a1.T @ x
    g_b1 = d_a1.sum(axis=0)
    d_x = d_a1 @ params.pred_w1

    size = op.n + op.m
    d_h = np.zeros((size, d))
    np.add.at(d_h, u, d_x[:, :d])
    np.add.at(d_h, op.n + p, d_x[:, d:])

    g_ws, g_bs = [], []
    for (agg, pre), w in zip(reversed(cache), reversed(params.gcn_w)):
        d_pre = d_h * (pre > 0)
        g_ws.append(d_pre.T @ agg)
        g_bs.append(d_pre.sum(axis=0))
        # A_hat is symmetric, so its transpose is itself
        d_h = op.matrix @ (d_pre @ w)
    g_ws.reverse()
    g_bs.reverse()

    grads = ModelParams(d_h[: op.n], d_h[op.n :], g_ws, g_bs, g_w1, g_b1, g_w2, g_b2)
    return loss, grads.flatten()


def grad(params: ModelParams, g, batch) -> np.ndarray:
    return loss_and_grad(params, g, batch)[1]


def _edge_arrays(edges) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    edges = list(edges)
    u = np.fromiter((e[0].index for e in edges), dtype=np.int64, count=len(edges))
    p = np.fromiter((e[1].index for e in edges), dtype=np.int64, count=len(edges))
    y = np.fromiter((e[2] for e in edges), dtype=float, count=len(edges))
    return u, p, y


def local_train(
    params: ModelParams,
    g,
    train_edges: Iterable[tuple[VertexId, VertexId, float]],
    config: TrainConfig,
    start_epoch: int = 0,
) -> tuple[ModelParams, list[float]]:
    """Plain mini-batch SGD for ``config.local_epochs`` epochs.

    The batch order of epoch ``t`` depends only on ``(config.seed, t)``, so
    training for a run of epochs in one call or across several calls with
    matching ``start_epoch`` gives identical results.
    """
    op = _as_propagation(g, params.n, params.m)
    u, p, y = _edge_arrays(train_edges)
    vec = params.flatten()
    shapes = params.shapes()
    trace = []
    if len(u) == 0:
        return params.copy(), [float("nan")] * config.local_epochs
    for epoch in range(start_epoch, start_epoch + config.local_epochs):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(epoch,)))
        order = rng.permutation(len(u))
        losses, weights = [], []
        for lo in range(0, len(order), config.batch):
            idx = order[lo : lo + config.batch]
            loss, gvec = loss_and_grad(unflatten(vec, shapes), op, (u[idx], p[idx], y[idx]))
            vec = vec - config.lr * gvec
            losses.append(loss)
            weights.append(len(idx))
        trace.append(float(np.average(losses, weights=weights)))
    return unflatten(vec, shapes), trace


@dataclass(frozen=True)
class Metrics:
    mae: float
    mse: float
    rmse: float

    def as_dict(self) -> dict[str, float]:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse}


def metrics(pred, true) -> Metrics:
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if pred.size == 0:
        raise EmptyTestSet("no test edges to score")
    err = pred - true
    mse = float(np.mean(err**2))
    return Metrics(float(np.mean(np.abs(err))), mse, float(np.sqrt(mse)))


def evaluate(params: ModelParams, g, test_edges) -> Metrics:
    test_edges = list(test_edges)
    if not test_edges:
        raise EmptyTestSet("no test edges to score")
    pred = forward(params, g, [(e[0], e[1]) for e in test_edges])
    return metrics(pred, [e[2] for e in test_edges])
