"""Multi-view graph perturbation and the diagnostics built on it.

Masks drop observed feature entries and stored undirected edges only; mask
positions over structural zeros stay one, so the perturbation budget counts
realized drops. A dropped undirected edge removes two adjacency cells.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import FeatureMatrix, SparseGraph
from .util import derive_seed

MODES = ("feature+edge", "feature", "edge", "node")


@dataclass(frozen=True)
class AugmentationPlan:
    """How to perturb: number of views, drop rates, seed, and ablation mode.

    Mode "node" drops whole nodes, realized as the node's full feature row
    plus its incident edges; the node drop probability reuses
    ``feature_drop_rate``.
    """

    view_count: int = 5
    feature_drop_rate: float = 0.05
    edge_drop_rate: float = 0.05
    base_seed: int = 0
    mode: str = "feature+edge"

    def __post_init__(self):
        if self.view_count < 1:
            raise ValueError("view count must be at least 1")
        for name in ("feature_drop_rate", "edge_drop_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class MaskPair:
    """One view's masks: feature keep matrix and per-edge keep flags."""

    feature_mask: np.ndarray  # (N, F) zeros and ones
    edge_keep: np.ndarray     # bool, one per stored undirected edge
    seed: int


@dataclass(frozen=True)
class PerturbationBudget:
    epsilon: float
    gpi_constant_estimate: float


def sample_masks(plan: AugmentationPlan, view: int, graph: SparseGraph, feature_cols: int) -> MaskPair:
    """Draw the masks of one view; the seed is derived from (base_seed, view)."""
    if not 0 <= view < plan.view_count:
        raise ValueError("view index outside the plan")
    seed = derive_seed(plan.base_seed, view)
    rng = np.random.default_rng(seed)
    n = graph.node_count
    e = graph.edge_count
    if plan.mode == "node":
        if plan.feature_drop_rate > 0:
            node_keep = rng.random(n) >= plan.feature_drop_rate
        else:
            node_keep = np.ones(n, dtype=bool)
        feature_mask = np.repeat(
            node_keep[:, None].astype(np.float64), feature_cols, axis=1
        )
        und = graph.undirected_edges()
        edge_keep = node_keep[und[:, 0]] & node_keep[und[:, 1]]
    else:
        # feature draws come first, then edges, so streams stay comparable
        if plan.mode in ("feature+edge", "feature") and plan.feature_drop_rate > 0:
            feature_mask = (
                rng.random((n, feature_cols)) >= plan.feature_drop_rate
            ).astype(np.float64)
        else:
            feature_mask = np.ones((n, feature_cols))
        if plan.mode in ("feature+edge", "edge") and plan.edge_drop_rate > 0:
            edge_keep = rng.random(e) >= plan.edge_drop_rate
        else:
            edge_keep = np.ones(e, dtype=bool)
    return MaskPair(feature_mask, edge_keep, seed)


def perturbation_magnitude(mask: MaskPair, node_count: int, feature_cols: int) -> float:
    """Budget of one mask pair: dropped feature cells over N*F plus dropped
    adjacency cells over N^2."""
    if mask.feature_mask.shape != (node_count, feature_cols):
        raise ValueError("feature mask shape does not match the stated dims")
    f_dropped = mask.feature_mask.size - int(mask.feature_mask.sum())
    a_dropped = 2 * int((~mask.edge_keep).sum())
    return f_dropped / (node_count * feature_cols) + a_dropped / (node_count * node_count)


def apply_augmentation(graph: SparseGraph, x, mask: MaskPair):
    """Materialize one perturbed view; the originals are left untouched."""
    xm = x.data if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    x_aug = xm * mask.feature_mask
    kept = graph.undirected_edges()[mask.edge_keep]
    g_aug = SparseGraph.from_canonical_pairs(graph.node_count, kept)
    return g_aug, x_aug


@dataclass(frozen=True)
class MultiViewConfidence:
    """Averaged confidence plus the per-view pieces it was built from."""

    values: np.ndarray
    per_view: tuple
    epsilons: tuple
    kind: str


def _feature_cols(x) -> int:
    return x.cols if isinstance(x, FeatureMatrix) else np.asarray(x).shape[1]


def multi_view_confidence(model, graph, x, plan: AugmentationPlan, targets) -> MultiViewConfidence:
    """Average the model's confidence on the targets over the plan's views.

    Accumulation runs in view order, so equal seeds give bit-identical
    output. With one view and zero rates this equals the unaugmented
    confidence.
    """
    fc = _feature_cols(x)
    per_view = []
    epsilons = []
    total = None
    for v in range(plan.view_count):
        mask = sample_masks(plan, v, graph, fc)
        epsilons.append(perturbation_magnitude(mask, graph.node_count, fc))
        g_aug, x_aug = apply_augmentation(graph, x, mask)
        conf = model.predict_confidence(g_aug, x_aug, targets)
        per_view.append(conf)
        total = conf.copy() if total is None else total + conf
    values = total / plan.view_count
    kind = "class-distribution" if values.ndim == 2 else "edge-score"
    return MultiViewConfidence(values, tuple(per_view), tuple(epsilons), kind)


def hard_decisions(values: np.ndarray, kind: str) -> np.ndarray:
    """Argmax class per row, or score at least one half per pair."""
    if kind == "class-distribution":
        return values.argmax(axis=1)
    return values >= 0.5


def estimate_inconsistency(model, graph, x, plan: AugmentationPlan, targets) -> float:
    """Share of targets whose hard decision flips under any of the views."""
    targets = np.asarray(targets)
    if targets.size == 0:
        raise ValueError("empty target set")
    base = model.predict_confidence(graph, x, targets)
    kind = "class-distribution" if base.ndim == 2 else "edge-score"
    base_hard = hard_decisions(base, kind)
    fc = _feature_cols(x)
    flipped = np.zeros(len(base_hard), dtype=bool)
    for v in range(plan.view_count):
        mask = sample_masks(plan, v, graph, fc)
        g_aug, x_aug = apply_augmentation(graph, x, mask)
        conf = model.predict_confidence(g_aug, x_aug, targets)
        flipped |= hard_decisions(conf, kind) != base_hard
    return float(flipped.mean())


def estimate_gpi_constant(model, graph, x, plan: AugmentationPlan, targets, trials: int) -> float:
    """Empirical lower bound on the invariance constant.

    Runs ``trials`` perturbations and keeps the largest squared confidence
    displacement per unit of budget on the fixed probe set. Trials with zero
    budget are skipped. Trial masks extend the plan's view stream, so a
    longer run only adds trials on top of a shorter one.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    probe_plan = replace(plan, view_count=trials)
    base = model.predict_confidence(graph, x, targets)
    fc = _feature_cols(x)
    best = 0.0
    for i in range(trials):
        mask = sample_masks(probe_plan, i, graph, fc)
        eps = perturbation_magnitude(mask, graph.node_count, fc)
        if eps == 0.0:
            continue
        g_aug, x_aug = apply_augmentation(graph, x, mask)
        conf = model.predict_confidence(g_aug, x_aug, targets)
        best = max(best, float(((conf - base) ** 2).sum()) / eps)
    return best
