"""Self-training engine: cautious pseudo labeling with convergence diagnostics.

One run follows the teacher/student loop. A model is pretrained on the
observed labels, then repeatedly: the teacher scores the unobserved
candidates under multi-view augmentation, the k most confident are committed
as pseudo labels, and the student is fine-tuned on the enlarged set before
taking over as teacher. The lowest confidence ever committed defines the
threshold q entering the error bound 2(q + inconsistency).

Every iteration also logs a covariance diagnostic against held-out ground
truth: committing k of the pool splits the enlarged-set loss into a
selection-independent baseline plus beta * Cov[ce, indicator]. That split is
an algebraic identity, so its logged slack is pure float noise; what the
selection strategy controls is the covariance sign. Ground truth never feeds
the selection path, only this instrumentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .augment import (
    AugmentationPlan,
    MultiViewConfidence,
    estimate_gpi_constant,
    estimate_inconsistency,
    multi_view_confidence,
)
from .config import ExperimentConfig, with_strategy
from .graph import (
    EdgeSplit,
    FeatureMatrix,
    NodeLabels,
    NodeSplit,
    SparseGraph,
    _sort_pairs,
    generate_sbm,
    identity_features,
    load_edge_list,
    load_features,
    load_labels,
    normalize_adjacency,
    pair_keys,
    sample_non_pairs,
    split_edges,
    split_nodes,
)
from .metrics import accuracy_and_error, auc, average_precision
from .nn import (
    PROB_FLOOR,
    AdamState,
    GcnModel,
    adam_step,
    classify,
    cross_entropy,
    decode_links,
    gcn_backward,
    gcn_forward,
    init_gcn_params,
    link_score_grads_to_output,
)
from .util import NumericalError, derive_seed

# Stream tags keep per-component seed derivations disjoint within one run.
TAG_SPLIT = 1
TAG_INIT = 2
TAG_NEG = 3
TAG_SELECT = 4
TAG_GPI = 5
TAG_CONFIDENCE = 6
TAG_INCONSISTENCY = 7
TAG_POOL = 8


@dataclass
class PlState:
    """Mutable bookkeeping for one pseudo-labeling run.

    ``observed_ids`` holds node indices (node task) or i < j pairs (link
    task) together with committed labels where labels are explicit; ``pool``
    holds the remaining candidates in ascending order. ``threshold_confidence``
    is the running minimum of the per-iteration committed confidences.
    """

    observed_ids: np.ndarray
    observed_labels: np.ndarray | None
    pool: np.ndarray
    k: int
    cap: int
    t: int = 0
    threshold_confidence: float | None = None
    pseudo_log: list = field(default_factory=list)

    @property
    def observed_count(self) -> int:
        return len(self.observed_ids)

    @property
    def pool_count(self) -> int:
        return len(self.pool)

    @property
    def q(self) -> float | None:
        if self.threshold_confidence is None:
            return None
        return 1.0 - self.threshold_confidence


@dataclass(frozen=True)
class StrategySelection:
    """One iteration's pick: 0/1 indicator over the pool, the selected pool
    positions in ascending order, and the lowest selected confidence."""

    indicator: np.ndarray
    selected: np.ndarray
    c_min: float | None


def select_top_k(confidence, k: int) -> StrategySelection:
    """Pick the k largest confidences; ties go to the lower pool position."""
    conf = np.asarray(confidence, dtype=np.float64)
    if conf.ndim != 1:
        raise ValueError("confidence must be one-dimensional")
    if not 0 <= k <= conf.size:
        raise ValueError(f"k={k} outside [0, {conf.size}]")
    order = np.lexsort((np.arange(conf.size), -conf))
    selected = np.sort(order[:k])
    indicator = np.zeros(conf.size, dtype=np.float64)
    indicator[selected] = 1.0
    c_min = float(conf[selected].min()) if k else None
    return StrategySelection(indicator, selected, c_min)


def select_random(confidence, k: int, rng) -> StrategySelection:
    """Uniform pick without replacement; confidence only feeds c_min."""
    conf = np.asarray(confidence, dtype=np.float64)
    if not 0 <= k <= conf.size:
        raise ValueError(f"k={k} outside [0, {conf.size}]")
    selected = np.sort(rng.choice(conf.size, size=k, replace=False).astype(np.int64))
    indicator = np.zeros(conf.size, dtype=np.float64)
    indicator[selected] = 1.0
    c_min = float(conf[selected].min()) if k else None
    return StrategySelection(indicator, selected, c_min)


def error_bound(q: float, inconsistency: float) -> float:
    """Bound on the 0-1 test error: twice the committed-confidence gap plus
    twice the multi-view inconsistency. Values above 1 are vacuous."""
    for name, v in (("q", q), ("inconsistency", inconsistency)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return 2.0 * (q + inconsistency)


@dataclass(frozen=True)
class CovarianceDiagnostic:
    covariance: float
    beta: float
    loss_with_selection: float
    loss_baseline: float
    bound_rhs: float
    slack: float
    indicator_mean: float
    indicator_expected: float


def covariance_diagnostic(
    ce, indicator, observed_ce_sum: float, observed_count: int
) -> CovarianceDiagnostic:
    """Split the enlarged-set loss into baseline plus covariance terms.

    ``ce`` is the per-candidate cross entropy of the pre-fine-tune model
    against ground truth; ``indicator`` marks the committed candidates.
    With n observed samples and k commits from a pool of size m,

        loss_with_selection = (observed_ce_sum + sum(ce * indicator)) / (n + k)

    decomposes exactly into beta * Cov[ce, indicator] plus the baseline in
    which the k commits are replaced by the pool average, where
    beta = m / (n + k) and Cov is the population covariance over the pool.
    ``slack`` records the float noise of that identity, and the indicator
    mean equals k / m bit for bit.
    """
    ce = np.asarray(ce, dtype=np.float64)
    ind = np.asarray(indicator, dtype=np.float64)
    if ce.ndim != 1 or ce.shape != ind.shape or ce.size == 0:
        raise ValueError("ce and indicator must be equal-length 1-D arrays")
    if observed_count < 1:
        raise ValueError("observed set must be non-empty")
    pool = ce.size
    k_eff = int(round(float(ind.sum())))
    mean_ce = float(ce.mean())
    mean_ind = float(ind.mean())
    covariance = float((ce * ind).mean()) - mean_ce * mean_ind
    denom = observed_count + k_eff
    beta = pool / denom
    loss_with_selection = (observed_ce_sum + float(ce @ ind)) / denom
    loss_baseline = (observed_ce_sum + k_eff * mean_ce) / denom
    bound_rhs = beta * covariance + loss_baseline
    return CovarianceDiagnostic(
        covariance=covariance,
        beta=beta,
        loss_with_selection=loss_with_selection,
        loss_baseline=loss_baseline,
        bound_rhs=bound_rhs,
        slack=loss_with_selection - bound_rhs,
        indicator_mean=mean_ind,
        indicator_expected=k_eff / pool,
    )


@dataclass
class IterationRecord:
    """Everything logged about one pseudo-labeling iteration."""

    t: int
    observed_size: int
    pool_size: int
    k_effective: int
    truncated: bool
    c_min: float | None
    threshold_confidence: float | None
    q: float | None
    pl_error_rate: float | None
    covariance: float
    beta: float
    loss_with_selection: float
    loss_baseline: float
    bound_rhs: float
    slack: float
    bound_holds: bool
    indicator_mean: float
    indicator_expected: float
    loss_observed: float
    loss_before_finetune: float
    loss_after_finetune: float
    assumption_violation: bool
    val_metric: float | None
    inconsistency: float
    epsilons: tuple

    def to_dict(self) -> dict:
        out = {}
        for name, value in self.__dict__.items():
            if isinstance(value, tuple):
                value = [float(v) for v in value]
            elif isinstance(value, (np.floating, np.integer, np.bool_)):
                value = value.item()
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "IterationRecord":
        fields = dict(payload)
        fields["epsilons"] = tuple(fields.get("epsilons", ()))
        return cls(**fields)


def loss_trajectory_check(records, tol: float = 1e-6) -> dict:
    """Audit the per-iteration loss decomposition across a run.

    Confirms loss_with_selection <= beta * cov + baseline + tol at every
    iteration and separately counts fine-tune stages that failed to reduce
    the committed-set loss. The inequality is an identity up to float noise,
    so a genuine violation points at a bookkeeping bug, not at the data.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two iteration records")
    violations = [r.t for r in records if r.slack > tol]
    assumption_violations = [r.t for r in records if r.assumption_violation]
    return {
        "checked": len(records),
        "tolerance": tol,
        "holds": not violations,
        "violations": violations,
        "max_slack": max(r.slack for r in records),
        "assumption_violations": assumption_violations,
        "assumption_violation_count": len(assumption_violations),
    }


@dataclass(frozen=True)
class NodeTaskData:
    graph: SparseGraph
    features: FeatureMatrix
    labels: NodeLabels
    split: NodeSplit


@dataclass(frozen=True)
class LinkTaskData:
    graph: SparseGraph
    features: FeatureMatrix
    split: EdgeSplit


def build_task_data(cfg: ExperimentConfig, run_seed: int):
    """Materialize graph, features, and split for one seeded run.

    The dataset itself is fixed by its own seed; the split is re-drawn per
    run seed so a sweep varies splits and initializations over one graph.
    """
    ds = cfg.dataset
    if ds.kind == "sbm":
        graph, labels = generate_sbm(ds.block_sizes, ds.p_in, ds.p_out, ds.seed)
        x = identity_features(graph.node_count)
    else:
        graph = load_edge_list(ds.edges)
        x = load_features(ds.features_path, graph.node_count)
        labels = (
            load_labels(ds.labels_path, graph.node_count)
            if cfg.task == "node"
            else None
        )
    split_seed = derive_seed(cfg.split.seed, run_seed, TAG_SPLIT)
    if cfg.task == "node":
        split = split_nodes(labels, cfg.split.ratios, split_seed)
        return NodeTaskData(graph, x, labels, split)
    split = split_edges(graph, cfg.split.ratios, split_seed)
    return LinkTaskData(graph, x, split)


class _NodeTask:
    """Node classification: fixed message graph, growing committed label set."""

    kind = "node"

    def __init__(self, data: NodeTaskData, cfg: ExperimentConfig, run_seed: int):
        self.data = data
        self.cfg = cfg
        self.run_seed = run_seed
        self.adj = normalize_adjacency(data.graph)
        self.x = data.features
        self.truth = data.labels.labels
        self.in_dim = data.features.cols
        self.out_dim = data.labels.class_count

    def initial_state(self) -> PlState:
        split = self.data.split
        train = np.asarray(split.train_idx, dtype=np.int64)
        held = np.concatenate([train, np.asarray(split.val_idx, dtype=np.int64)])
        mask = np.ones(self.data.graph.node_count, dtype=bool)
        mask[held] = False
        pool = np.flatnonzero(mask).astype(np.int64)
        return PlState(
            observed_ids=train.copy(),
            observed_labels=self.truth[train].copy(),
            pool=pool,
            k=self.cfg.pl.k,
            cap=self.cfg.pl.cap,
        )

    def _model(self, params) -> GcnModel:
        return GcnModel("node", params)

    def message_graph(self) -> SparseGraph:
        return self.data.graph

    def train(self, params, state: PlState, epochs: int, stage: int):
        tr = self.cfg.training
        adam = AdamState.fresh(
            params, lr=tr.learning_rate, beta1=tr.beta1, beta2=tr.beta2, eps=tr.eps
        )
        targets = np.zeros(self.data.graph.node_count, dtype=np.int64)
        targets[state.observed_ids] = state.observed_labels
        losses = []
        for _ in range(epochs):
            cache = gcn_forward(self.adj, self.x, params)
            loss, grad = cross_entropy(classify(cache), targets, state.observed_ids)
            grads = gcn_backward(cache, self.adj, grad)
            params, adam = adam_step(params, grads, adam)
            losses.append(loss)
        return params, losses

    def snapshot(self, params) -> np.ndarray:
        cache = gcn_forward(self.adj, self.x, params)
        return classify(cache).values

    def pool_ce(self, snap: np.ndarray, state: PlState) -> np.ndarray:
        rows = snap[state.pool]
        picked = rows[np.arange(state.pool_count), self.truth[state.pool]]
        return -np.log(np.clip(picked, PROB_FLOOR, None))

    def observed_ce_sum(self, snap: np.ndarray, state: PlState) -> float:
        rows = snap[state.observed_ids]
        picked = rows[np.arange(state.observed_count), state.observed_labels]
        return float(-np.log(np.clip(picked, PROB_FLOOR, None)).sum())

    def confidence(self, params, state: PlState, plan: AugmentationPlan) -> MultiViewConfidence:
        return multi_view_confidence(
            self._model(params), self.message_graph(), self.x, plan, state.pool
        )

    def selection_confidence(self, mv: MultiViewConfidence) -> np.ndarray:
        return mv.values.max(axis=1)

    def commit(self, state: PlState, positions: np.ndarray, mv: MultiViewConfidence, t: int):
        if len(positions) == 0:
            return None
        ids = state.pool[positions]
        labels = mv.values[positions].argmax(axis=1).astype(np.int64)
        conf = mv.values[positions].max(axis=1)
        for i, lab, c in zip(ids.tolist(), labels.tolist(), conf.tolist()):
            state.pseudo_log.append(
                {"iteration": t, "sample": int(i), "label": int(lab), "confidence": float(c)}
            )
        merged_ids = np.concatenate([state.observed_ids, ids])
        merged_labels = np.concatenate([state.observed_labels, labels])
        order = np.argsort(merged_ids)
        state.observed_ids = merged_ids[order]
        state.observed_labels = merged_labels[order]
        state.pool = np.delete(state.pool, positions)
        return float((labels != self.truth[ids]).mean())

    def val_metric(self, params, state: PlState) -> float | None:
        idx = np.asarray(self.data.split.val_idx, dtype=np.int64)
        if idx.size == 0:
            return None
        snap = self.snapshot(params)
        acc, _ = accuracy_and_error(snap[idx].argmax(axis=1), self.truth[idx])
        return acc

    def test_metrics(self, params, state: PlState) -> dict:
        idx = np.asarray(self.data.split.test_idx, dtype=np.int64)
        snap = self.snapshot(params)
        acc, err = accuracy_and_error(snap[idx].argmax(axis=1), self.truth[idx])
        return {"accuracy": acc, "error": err}

    def inconsistency(self, params, state: PlState, plan: AugmentationPlan) -> float:
        return estimate_inconsistency(
            self._model(params), self.message_graph(), self.x, plan, self.data.split.test_idx
        )

    def gpi(self, params, state: PlState, plan: AugmentationPlan, trials: int) -> float:
        return estimate_gpi_constant(
            self._model(params), self.message_graph(), self.x, plan,
            self.data.split.test_idx, trials,
        )


class _LinkTask:
    """Link prediction: committed pairs also densify message passing."""

    kind = "link"

    def __init__(self, data: LinkTaskData, cfg: ExperimentConfig, run_seed: int):
        self.data = data
        self.cfg = cfg
        self.run_seed = run_seed
        self.x = data.features
        self.n = data.graph.node_count
        self.in_dim = data.features.cols
        self.out_dim = cfg.model.embed_dim
        self.true_keys = np.sort(pair_keys(data.graph.undirected_edges(), self.n))
        self._graph: SparseGraph | None = None
        self._adj = None

    def initial_state(self) -> PlState:
        train = self.data.split.train_pos.copy()
        state = PlState(
            observed_ids=train,
            observed_labels=None,
            pool=self._initial_pool(train),
            k=self.cfg.pl.k,
            cap=self.cfg.pl.cap,
        )
        self._rebuild(state.observed_ids)
        return state

    def _initial_pool(self, observed: np.ndarray) -> np.ndarray:
        observed_keys = pair_keys(observed, self.n)
        total = self.n * (self.n - 1) // 2
        if self.n <= self.cfg.pl.full_pool_node_limit:
            iu = np.triu_indices(self.n, k=1)
            pairs = np.stack([iu[0], iu[1]], axis=1).astype(np.int64)
            keep = ~np.isin(pair_keys(pairs, self.n), observed_keys)
            return pairs[keep]
        # Beyond the full-enumeration limit the pool is a fixed uniform
        # sample of non-observed pairs; its size is part of the report.
        count = min(self.cfg.pl.pool_max_pairs, total - len(observed))
        rng = np.random.default_rng(derive_seed(self.run_seed, TAG_POOL))
        pool = sample_non_pairs(self.n, count, rng, set(observed_keys.tolist()))
        return _sort_pairs(pool)

    def _rebuild(self, observed_pairs: np.ndarray) -> None:
        self._graph = SparseGraph.from_canonical_pairs(self.n, observed_pairs)
        self._adj = normalize_adjacency(self._graph)

    def _model(self, params) -> GcnModel:
        return GcnModel("link", params)

    def message_graph(self) -> SparseGraph:
        return self._graph

    def train(self, params, state: PlState, epochs: int, stage: int):
        tr = self.cfg.training
        adam = AdamState.fresh(
            params, lr=tr.learning_rate, beta1=tr.beta1, beta2=tr.beta2, eps=tr.eps
        )
        pos = state.observed_ids
        forbidden = set(pair_keys(pos, self.n).tolist())
        rng = np.random.default_rng(derive_seed(tr.neg_seed, self.run_seed, TAG_NEG, stage))
        ones = np.ones(len(pos), dtype=np.float64)
        zeros = np.zeros(len(pos), dtype=np.float64)
        targets = np.concatenate([ones, zeros])
        losses = []
        for _ in range(epochs):
            neg = sample_non_pairs(self.n, len(pos), rng, forbidden)
            pairs = np.concatenate([pos, neg])
            cache = gcn_forward(self._adj, self.x, params)
            loss, score_grads = cross_entropy(decode_links(cache, pairs), targets)
            grad_out = link_score_grads_to_output(cache, pairs, score_grads)
            grads = gcn_backward(cache, self._adj, grad_out)
            params, adam = adam_step(params, grads, adam)
            losses.append(loss)
        return params, losses

    def snapshot(self, params):
        return gcn_forward(self._adj, self.x, params)

    def pool_ce(self, snap, state: PlState) -> np.ndarray:
        p = decode_links(snap, state.pool).values
        y = np.isin(pair_keys(state.pool, self.n), self.true_keys).astype(np.float64)
        pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        return -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))

    def observed_ce_sum(self, snap, state: PlState) -> float:
        p = decode_links(snap, state.observed_ids).values
        return float(-np.log(np.clip(p, PROB_FLOOR, None)).sum())

    def confidence(self, params, state: PlState, plan: AugmentationPlan) -> MultiViewConfidence:
        return multi_view_confidence(
            self._model(params), self.message_graph(), self.x, plan, state.pool
        )

    def selection_confidence(self, mv: MultiViewConfidence) -> np.ndarray:
        return mv.values

    def commit(self, state: PlState, positions: np.ndarray, mv: MultiViewConfidence, t: int):
        if len(positions) == 0:
            return None
        pairs = state.pool[positions]
        conf = mv.values[positions]
        for (i, j), c in zip(pairs.tolist(), conf.tolist()):
            state.pseudo_log.append(
                {"iteration": t, "sample": [int(i), int(j)], "label": 1, "confidence": float(c)}
            )
        state.observed_ids = _sort_pairs(np.concatenate([state.observed_ids, pairs]))
        state.pool = np.delete(state.pool, positions, axis=0)
        self._rebuild(state.observed_ids)
        wrong = ~np.isin(pair_keys(pairs, self.n), self.true_keys)
        return float(wrong.mean())

    def _scored(self, params, pos: np.ndarray, neg: np.ndarray):
        cache = self.snapshot(params)
        pairs = np.concatenate([pos, neg])
        scores = decode_links(cache, pairs).values
        labels = np.concatenate(
            [np.ones(len(pos), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)]
        )
        return scores, labels

    def val_metric(self, params, state: PlState) -> float | None:
        split = self.data.split
        if len(split.val_pos) == 0 or len(split.val_neg) == 0:
            return None
        scores, labels = self._scored(params, split.val_pos, split.val_neg)
        return auc(scores, labels)

    def test_metrics(self, params, state: PlState) -> dict:
        split = self.data.split
        scores, labels = self._scored(params, split.test_pos, split.test_neg)
        hard = (scores >= 0.5).astype(np.int64)
        acc, err = accuracy_and_error(hard, labels)
        return {
            "auc": auc(scores, labels),
            "ap": average_precision(scores, labels),
            "accuracy": acc,
            "error": err,
        }

    def _test_pairs(self) -> np.ndarray:
        return np.concatenate([self.data.split.test_pos, self.data.split.test_neg])

    def inconsistency(self, params, state: PlState, plan: AugmentationPlan) -> float:
        return estimate_inconsistency(
            self._model(params), self.message_graph(), self.x, plan, self._test_pairs()
        )

    def gpi(self, params, state: PlState, plan: AugmentationPlan, trials: int) -> float:
        return estimate_gpi_constant(
            self._model(params), self.message_graph(), self.x, plan,
            self._test_pairs(), trials,
        )


@dataclass
class RunResult:
    """Full outcome of one seeded run, ready for reporting."""

    run_seed: int
    task: str
    strategy: str
    model: GcnModel
    records: list
    pretrain_loss_series: list
    raw_metrics: dict
    final_metrics: dict | None
    inconsistency_initial: float
    inconsistency_final: float
    q: float | None
    error_bound_value: float | None
    bound_holds: bool | None
    bound_vacuous: bool | None
    observed_final: int
    pool_final: int
    pseudo_log: list
    gpi_estimate: float | None
    aborted: str | None


def _make_task(cfg: ExperimentConfig, run_seed: int):
    data = build_task_data(cfg, run_seed)
    if cfg.task == "node":
        return _NodeTask(data, cfg, run_seed)
    return _LinkTask(data, cfg, run_seed)


def _stage_plan(cfg: ExperimentConfig, run_seed: int, tag: int, stage: int) -> AugmentationPlan:
    base = cfg.augmentation
    return replace(base, base_seed=derive_seed(base.base_seed, run_seed, tag, stage))


def _probe_plan(cfg: ExperimentConfig, run_seed: int) -> AugmentationPlan:
    # One fixed set of measurement views per run: stage-over-stage changes in
    # the inconsistency estimate then reflect the model, not mask resampling.
    base = cfg.augmentation
    return replace(base, base_seed=derive_seed(base.base_seed, run_seed, TAG_INCONSISTENCY))


def run_single(cfg: ExperimentConfig, run_seed: int) -> RunResult:
    """Execute one seeded run under the configured selection strategy."""
    if run_seed < 0:
        raise ValueError("run seed must be non-negative")
    task = _make_task(cfg, run_seed)
    state = task.initial_state()
    init_seed = derive_seed(cfg.model.init_seed, run_seed, TAG_INIT)
    params = init_gcn_params(task.in_dim, cfg.model.hidden_dim, task.out_dim, init_seed)
    params, pretrain_losses = task.train(params, state, cfg.training.pretrain_epochs, 0)
    raw_metrics = task.test_metrics(params, state)
    probe_plan = _probe_plan(cfg, run_seed)
    inconsistency_initial = task.inconsistency(params, state, probe_plan)

    records: list[IterationRecord] = []
    aborted = None
    strategy = cfg.pl.strategy
    if strategy != "none":
        try:
            params = _pl_loop(cfg, task, state, params, run_seed, strategy, records, probe_plan)
        except NumericalError as exc:
            # Partial records stay valid; the abort reason rides the result.
            aborted = str(exc)

    final_metrics = None
    try:
        final_metrics = task.test_metrics(params, state)
    except NumericalError:
        pass

    inconsistency_final = records[-1].inconsistency if records else inconsistency_initial
    q = state.q
    bound = holds = vacuous = None
    if q is not None and final_metrics is not None:
        bound = error_bound(q, inconsistency_final)
        holds = bool(final_metrics["error"] <= bound)
        vacuous = bool(bound > 1.0)

    gpi = None
    if cfg.gpi_trials > 0 and aborted is None:
        gpi = task.gpi(
            params, state, _stage_plan(cfg, run_seed, TAG_GPI, 0), cfg.gpi_trials
        )

    return RunResult(
        run_seed=run_seed,
        task=cfg.task,
        strategy=strategy,
        model=GcnModel(cfg.task, params),
        records=records,
        pretrain_loss_series=pretrain_losses,
        raw_metrics=raw_metrics,
        final_metrics=final_metrics,
        inconsistency_initial=inconsistency_initial,
        inconsistency_final=inconsistency_final,
        q=q,
        error_bound_value=bound,
        bound_holds=holds,
        bound_vacuous=vacuous,
        observed_final=state.observed_count,
        pool_final=state.pool_count,
        pseudo_log=state.pseudo_log,
        gpi_estimate=gpi,
        aborted=aborted,
    )


def _pl_loop(cfg, task, state: PlState, params, run_seed: int, strategy: str, records: list,
             probe_plan: AugmentationPlan):
    """Iterate until the candidate pool or the commit budget runs out."""
    while state.pool_count > 0 and state.observed_count < state.cap:
        t = state.t
        k_eff = min(state.k, state.cap - state.observed_count, state.pool_count)
        truncated = k_eff < state.k
        mv = task.confidence(params, state, _stage_plan(cfg, run_seed, TAG_CONFIDENCE, t))
        sel_conf = task.selection_confidence(mv)
        if strategy == "cautious":
            selection = select_top_k(sel_conf, k_eff)
        else:
            rng = np.random.default_rng(derive_seed(run_seed, TAG_SELECT, t))
            selection = select_random(sel_conf, k_eff, rng)

        # Diagnostics snapshot precedes the commit: ce and the indicator
        # must describe the same model state the selection saw.
        snap = task.snapshot(params)
        ce = task.pool_ce(snap, state)
        observed_ce_sum = task.observed_ce_sum(snap, state)
        observed_before = state.observed_count
        pool_before = state.pool_count
        loss_observed = observed_ce_sum / observed_before
        diag = covariance_diagnostic(ce, selection.indicator, observed_ce_sum, observed_before)

        pl_error_rate = task.commit(state, selection.selected, mv, t)
        if selection.c_min is not None:
            state.threshold_confidence = (
                selection.c_min
                if state.threshold_confidence is None
                else min(state.threshold_confidence, selection.c_min)
            )

        if cfg.training.finetune_from_scratch:
            params = init_gcn_params(
                task.in_dim, cfg.model.hidden_dim, task.out_dim,
                derive_seed(cfg.model.init_seed, run_seed, TAG_INIT, t + 1),
            )
            epochs = cfg.training.pretrain_epochs
        else:
            epochs = cfg.training.finetune_epochs
        loss_before = task.observed_ce_sum(task.snapshot(params), state) / state.observed_count
        params, _ = task.train(params, state, epochs, t + 1)
        loss_after = task.observed_ce_sum(task.snapshot(params), state) / state.observed_count

        records.append(
            IterationRecord(
                t=t,
                observed_size=observed_before,
                pool_size=pool_before,
                k_effective=k_eff,
                truncated=truncated,
                c_min=selection.c_min,
                threshold_confidence=state.threshold_confidence,
                q=state.q,
                pl_error_rate=pl_error_rate,
                covariance=diag.covariance,
                beta=diag.beta,
                loss_with_selection=diag.loss_with_selection,
                loss_baseline=diag.loss_baseline,
                bound_rhs=diag.bound_rhs,
                slack=diag.slack,
                bound_holds=bool(diag.slack <= 1e-6),
                indicator_mean=diag.indicator_mean,
                indicator_expected=diag.indicator_expected,
                loss_observed=loss_observed,
                loss_before_finetune=loss_before,
                loss_after_finetune=loss_after,
                assumption_violation=bool(loss_after > loss_before),
                val_metric=task.val_metric(params, state),
                inconsistency=task.inconsistency(params, state, probe_plan),
                epsilons=mv.epsilons,
            )
        )
        state.t = t + 1
        if k_eff == 0:
            break  # zero per-iteration budget cannot make progress
    return params


def run_cpl(cfg: ExperimentConfig, run_seed: int) -> RunResult:
    return run_single(with_strategy(cfg, "cautious"), run_seed)


def run_random_pl(cfg: ExperimentConfig, run_seed: int) -> RunResult:
    return run_single(with_strategy(cfg, "random"), run_seed)


def run_baseline(cfg: ExperimentConfig, run_seed: int) -> RunResult:
    return run_single(with_strategy(cfg, "none"), run_seed)


def run_sweep(cfg: ExperimentConfig) -> list[RunResult]:
    """One run per configured seed, all under the configured strategy."""
    return [run_single(cfg, int(seed)) for seed in cfg.seeds]
