"""Dense two-layer GCN kernel: forward pass, hand-derived gradients, losses,
Adam updates, and parameter checkpoints.

All math runs in float64. The only stochastic piece is the seeded
initializer; a forward or backward pass is deterministic given its inputs,
and reductions accumulate in a fixed index order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph import FeatureMatrix, NormalizedAdjacency, normalize_adjacency
from .util import DataError, NumericalError, derive_seed

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


def glorot_init(shape, seed: int) -> np.ndarray:
    """Uniform draw in +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return np.random.default_rng(seed).uniform(-limit, limit, size=shape)


@dataclass
class GcnParams:
    w1: np.ndarray
    w2: np.ndarray
    init_seed: int

    def copy(self) -> "GcnParams":
        return GcnParams(self.w1.copy(), self.w2.copy(), self.init_seed)


def init_gcn_params(in_dim: int, hidden_dim: int, out_dim: int, seed: int) -> GcnParams:
    w1 = glorot_init((in_dim, hidden_dim), derive_seed(seed, 1))
    w2 = glorot_init((hidden_dim, out_dim), derive_seed(seed, 2))
    return GcnParams(w1, w2, seed)


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, tied to one (params, input) pair."""

    params: GcnParams
    h0: np.ndarray   # input features
    px: np.ndarray   # adj @ h0
    z1: np.ndarray   # hidden pre-activation
    h1: np.ndarray   # relu(z1)
    qh: np.ndarray   # adj @ h1
    out: np.ndarray  # logits (node head) or embeddings (link head)


def _feature_array(x) -> np.ndarray:
    return x.data if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def gcn_forward(adj: NormalizedAdjacency, x, params: GcnParams) -> ForwardCache:
    """out = adj @ relu(adj @ X @ W1) @ W2."""
    xm = _feature_array(x)
    if xm.shape[0] != adj.node_count:
        raise ValueError(
            f"feature rows {xm.shape[0]} do not match node count {adj.node_count}"
        )
    if xm.shape[1] != params.w1.shape[0]:
        raise ValueError(
            f"feature cols {xm.shape[1]} do not match w1 rows {params.w1.shape[0]}"
        )
    px = adj.dot(xm)
    z1 = px @ params.w1
    h1 = np.maximum(z1, 0.0)
    qh = adj.dot(h1)
    out = qh @ params.w2
    for name, mat in (("hidden pre-activation", z1), ("output", out)):
        if not np.isfinite(mat).all():
            raise NumericalError(f"non-finite values in {name}")
    return ForwardCache(params, xm, px, z1, h1, qh, out)


@dataclass(frozen=True)
class Confidence:
    """Probabilities: either per-pair edge scores or a class distribution."""

    values: np.ndarray
    kind: str  # "edge-score" or "class-distribution"


def stable_sigmoid(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def classify(cache: ForwardCache) -> Confidence:
    """Row-wise softmax of the logits, max-subtracted for stability."""
    z = cache.out - cache.out.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return Confidence(ez / ez.sum(axis=1, keepdims=True), "class-distribution")


def _pair_array(pairs) -> np.ndarray:
    pr = np.asarray(pairs, dtype=np.int64)
    return pr.reshape(-1, 2)


def decode_links(cache: ForwardCache, pairs) -> Confidence:
    """Sigmoid inner-product scores for the requested pairs only."""
    pr = _pair_array(pairs)
    if pr.size and (pr.min() < 0 or pr.max() >= cache.out.shape[0]):
        raise ValueError("pair index out of range")
    e = cache.out
    if pr.size:
        scores = np.einsum("ij,ij->i", e[pr[:, 0]], e[pr[:, 1]])
    else:
        scores = np.zeros(0)
    return Confidence(stable_sigmoid(scores), "edge-score")


def cross_entropy(conf: Confidence, targets, index_set=None):
    """Mean cross entropy over an index set plus its head gradient.

    For a class distribution the gradient has the logit shape, with rows
    outside the index set zero. For edge scores the gradient is per score,
    d loss / d s. Targets are aligned with the confidence rows; the index
    set selects which rows enter the mean.
    """
    if conf.kind == "class-distribution":
        p = conf.values
        idx = (
            np.arange(p.shape[0], dtype=np.int64)
            if index_set is None
            else np.asarray(index_set, dtype=np.int64)
        )
        if idx.size == 0:
            raise ValueError("empty index set")
        y = np.asarray(targets, dtype=np.int64)[idx]
        rows = p[idx]
        picked = rows[np.arange(idx.size), y]
        loss = float(-np.log(np.clip(picked, PROB_FLOOR, None)).mean())
        g = rows.copy()
        g[np.arange(idx.size), y] -= 1.0
        grad = np.zeros_like(p)
        grad[idx] = g / idx.size
        return loss, grad
    if conf.kind != "edge-score":
        raise ValueError(f"unknown confidence kind {conf.kind!r}")
    p = conf.values
    idx = (
        np.arange(p.size, dtype=np.int64)
        if index_set is None
        else np.asarray(index_set, dtype=np.int64)
    )
    if idx.size == 0:
        raise ValueError("empty index set")
    t = np.asarray(targets, dtype=np.float64)[idx]
    pi = p[idx]
    pc = np.clip(pi, PROB_FLOOR, 1.0 - PROB_FLOOR)
    loss = float(-(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).mean())
    grad = np.zeros_like(p)
    grad[idx] = (pi - t) / idx.size
    return loss, grad


def link_score_grads_to_output(cache: ForwardCache, pairs, score_grads) -> np.ndarray:
    """Chain per-pair score gradients back onto the embedding matrix."""
    pr = _pair_array(pairs)
    sg = np.asarray(score_grads, dtype=np.float64)
    g = np.zeros_like(cache.out)
    if pr.size:
        e = cache.out
        np.add.at(g, pr[:, 0], sg[:, None] * e[pr[:, 1]])
        np.add.at(g, pr[:, 1], sg[:, None] * e[pr[:, 0]])
    return g


@dataclass
class GcnGrads:
    w1: np.ndarray
    w2: np.ndarray


def gcn_backward(cache: ForwardCache, adj: NormalizedAdjacency, grad_out) -> GcnGrads:
    """Hand-derived gradients of the forward pass w.r.t. both weight matrices."""
    go = np.asarray(grad_out, dtype=np.float64)
    if go.shape != cache.out.shape:
        raise ValueError(
            f"grad shape {go.shape} does not match output shape {cache.out.shape}"
        )
    gw2 = cache.qh.T @ go
    gq = go @ cache.params.w2.T
    gh1 = adj.dot(gq)  # adj is symmetric, so its transpose is itself
    gz1 = gh1 * (cache.z1 > 0.0)
    gw1 = cache.px.T @ gz1
    return GcnGrads(gw1, gw2)


@dataclass
class AdamState:
    m_w1: np.ndarray
    v_w1: np.ndarray
    m_w2: np.ndarray
    v_w2: np.ndarray
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float

    @classmethod
    def fresh(cls, params: GcnParams, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            np.zeros_like(params.w1),
            np.zeros_like(params.w1),
            np.zeros_like(params.w2),
            np.zeros_like(params.w2),
            0,
            float(lr),
            float(beta1),
            float(beta2),
            float(eps),
        )


def adam_step(params: GcnParams, grads: GcnGrads, state: AdamState):
    """One Adam update with bias correction; returns new params and state."""
    for g in (grads.w1, grads.w2):
        if not np.isfinite(g).all():
            raise NumericalError("non-finite gradient in Adam update")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m1 = b1 * state.m_w1 + (1 - b1) * grads.w1
    v1 = b2 * state.v_w1 + (1 - b2) * grads.w1 ** 2
    m2 = b1 * state.m_w2 + (1 - b1) * grads.w2
    v2 = b2 * state.v_w2 + (1 - b2) * grads.w2 ** 2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    w1 = params.w1 - state.lr * (m1 / c1) / (np.sqrt(v1 / c2) + state.eps)
    w2 = params.w2 - state.lr * (m2 / c1) / (np.sqrt(v2 / c2) + state.eps)
    new_params = GcnParams(w1, w2, params.init_seed)
    new_state = AdamState(m1, v1, m2, v2, t, state.lr, b1, b2, state.eps)
    return new_params, new_state


@dataclass
class GcnModel:
    """Task-tagged parameter container; teacher and student are both this."""

    task: str  # "node" or "link"
    params: GcnParams

    def copy(self) -> "GcnModel":
        return GcnModel(self.task, self.params.copy())

    def forward(self, graph, x) -> ForwardCache:
        return gcn_forward(normalize_adjacency(graph), x, self.params)

    def predict_confidence(self, graph, x, targets) -> np.ndarray:
        """Confidence on the targets: class rows (node) or pair scores (link)."""
        cache = self.forward(graph, x)
        if self.task == "node":
            return classify(cache).values[np.asarray(targets, dtype=np.int64)]
        return decode_links(cache, targets).values


def save_checkpoint(model: GcnModel, path: str) -> None:
    """Versioned JSON record of shapes, row-major values, and seeds."""
    p = model.params
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "task": model.task,
        "in_dim": p.w1.shape[0],
        "hidden_dim": p.w1.shape[1],
        "out_dim": p.w2.shape[1],
        "init_seed": p.init_seed,
        "w1": [float(v) for v in p.w1.ravel()],
        "w2": [float(v) for v in p.w2.ravel()],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> GcnModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid checkpoint JSON: {exc}") from None
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version")
    try:
        f, h, o = payload["in_dim"], payload["hidden_dim"], payload["out_dim"]
        w1 = np.asarray(payload["w1"], dtype=np.float64).reshape(f, h)
        w2 = np.asarray(payload["w2"], dtype=np.float64).reshape(h, o)
        task = payload["task"]
        seed = int(payload["init_seed"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed checkpoint: {exc}") from None
    if task not in ("node", "link"):
        raise DataError(f"{path}: unknown task tag {task!r}")
    return GcnModel(task, GcnParams(w1, w2, seed))
