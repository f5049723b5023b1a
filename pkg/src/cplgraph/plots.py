"""Figure rendering for run and sweep reports.

Figures are a side product of the report path: one PNG per run showing the
loss trajectory, the covariance diagnostic, the quality metrics, and the
bound ingredients, plus one PNG per sweep comparing seeds. Everything draws
from report dictionaries, so a stored JSON can be re-rendered without
rerunning the experiment.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _series(iterations: list, key: str):
    xs, ys = [], []
    for it in iterations:
        if it.get(key) is None:
            continue
        xs.append(it["t"])
        ys.append(it[key])
    return xs, ys


def render_run_figure(payload: dict, path: str) -> None:
    """Four-panel summary of one run report."""
    iterations = payload.get("iterations", [])
    fig, axes = plt.subplots(2, 2, figsize=(11, 8))
    title = f"{payload.get('task')} / {payload.get('strategy')} / seed {payload.get('run_seed')}"
    fig.suptitle(title)

    ax = axes[0][0]
    pre = payload.get("pretrain_loss_series", [])
    ax.plot(range(len(pre)), pre, color="tab:gray", label="pretrain loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("pretraining")
    ax.legend()

    ax = axes[0][1]
    if iterations:
        ax.plot(*_series(iterations, "loss_observed"), marker="o", label="observed-set loss")
        ax.plot(*_series(iterations, "loss_after_finetune"), marker="s", label="after fine-tune")
        ax.plot(*_series(iterations, "loss_with_selection"), marker="^", label="with selection")
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no iterations", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("loss trajectory")

    ax = axes[1][0]
    if iterations:
        xs, ys = _series(iterations, "covariance")
        ax.bar(xs, ys, color=["tab:red" if v > 0 else "tab:blue" for v in ys])
        ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("covariance")
    ax.set_title("selection covariance")

    ax = axes[1][1]
    if iterations:
        ax.plot(*_series(iterations, "val_metric"), marker="o", label="validation metric")
        ax.plot(*_series(iterations, "inconsistency"), marker="s", label="inconsistency")
        ax.plot(*_series(iterations, "q"), marker="^", label="q")
        xs, ys = _series(iterations, "pl_error_rate")
        if xs:
            ax.plot(xs, ys, marker="x", label="pseudo-label error")
        ax.legend()
    ax.set_xlabel("iteration")
    ax.set_title("quality and bound inputs")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(payload: dict, path: str) -> None:
    """Per-seed comparison for one sweep report."""
    agg = payload.get("aggregate", {})
    runs = payload.get("runs", [])
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    fig.suptitle(f"{agg.get('task')} / {agg.get('strategy')} / {agg.get('seed_count')} seeds")

    ax = axes[0]
    per_seed = agg.get("per_seed", {})
    per_seed_raw = agg.get("per_seed_raw", {})
    key = "auc" if "auc" in per_seed else "accuracy"
    seeds = [r.get("run_seed") for r in runs]
    if per_seed.get(key):
        ax.plot(seeds[: len(per_seed[key])], per_seed[key], "o-", label=f"final {key}")
    if per_seed_raw.get(key):
        ax.plot(seeds[: len(per_seed_raw[key])], per_seed_raw[key], "s--", label=f"raw {key}")
    ax.set_xlabel("seed")
    ax.set_title("final vs pretrained")
    ax.legend()

    ax = axes[1]
    cov = agg.get("covariance", {})
    values = [v for v in cov.get("per_seed_mean", []) if v is not None]
    if values:
        ax.plot(range(len(values)), values, "o")
        ax.axhline(0.0, color="black", linewidth=0.8)
        if cov.get("mean") is not None:
            ax.axhline(cov["mean"], color="tab:blue", linestyle="--", label="mean")
            ax.legend()
    ax.set_xlabel("run")
    ax.set_ylabel("mean covariance")
    ax.set_title("covariance by seed")

    ax = axes[2]
    bounds = [b for b in agg.get("bounds", []) if b.get("value") is not None]
    if bounds:
        xs = range(len(bounds))
        ax.plot(xs, [b["value"] for b in bounds], "o-", label="bound 2(q+A)")
        errs = [b.get("experimental_error") for b in bounds]
        if all(e is not None for e in errs):
            ax.plot(xs, errs, "s--", label="test error")
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no bound data", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("run")
    ax.set_title("error bound vs measurement")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
