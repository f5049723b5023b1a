"""Shared fixtures: the two acceptance-scale experiment suites.

Both suites are deterministic, so every test sees identical runs; they are
built once per session because the link sweep costs about a minute.
"""

import time

import pytest

import cplgraph as cg


def node_config(strategy="cautious"):
    """Two-block SBM node task: 5% labels, V=5 views at rate 0.05, k=20, K=200."""
    return cg.ExperimentConfig(
        name="sbm-node",
        task="node",
        dataset=cg.DatasetConfig(kind="sbm", block_sizes=(200, 200), p_in=0.05, p_out=0.01, seed=7),
        split=cg.SplitConfig(ratios=(0.05, 0.15, 0.80), seed=0),
        model=cg.ModelConfig(hidden_dim=32, embed_dim=16),
        training=cg.TrainingConfig(pretrain_epochs=30, finetune_epochs=50, learning_rate=0.005),
        augmentation=cg.AugmentationPlan(view_count=5, feature_drop_rate=0.05, edge_drop_rate=0.05),
        pl=cg.PlConfig(k=20, cap=200, strategy=strategy),
        seeds=(1, 2, 3, 4, 5),
    )


def link_config(strategy="cautious"):
    """400-node SBM link task with 20 small communities, 10/40/50 edge split."""
    return cg.ExperimentConfig(
        name="sbm-link",
        task="link",
        dataset=cg.DatasetConfig(kind="sbm", block_sizes=(20,) * 20, p_in=0.95, p_out=0.002, seed=7),
        split=cg.SplitConfig(ratios=(0.10, 0.40, 0.50), seed=0),
        model=cg.ModelConfig(hidden_dim=32, embed_dim=16),
        training=cg.TrainingConfig(pretrain_epochs=200, finetune_epochs=50, learning_rate=0.01),
        augmentation=cg.AugmentationPlan(view_count=5, feature_drop_rate=0.05, edge_drop_rate=0.05),
        pl=cg.PlConfig(k=20, cap=576, strategy=strategy),
        seeds=(1, 2, 3, 4, 5),
    )


@pytest.fixture(scope="session")
def node_suite():
    cfg = node_config("cautious")
    start = time.monotonic()
    cautious = [cg.run_single(cfg, s) for s in cfg.seeds]
    elapsed = time.monotonic() - start
    random_runs = [cg.run_single(node_config("random"), s) for s in cfg.seeds]
    return {
        "config": cfg,
        "cautious": cautious,
        "random": random_runs,
        "cautious_seconds": elapsed,
    }


@pytest.fixture(scope="session")
def link_suite():
    cfg = link_config("cautious")
    cautious = [cg.run_single(cfg, s) for s in cfg.seeds]
    baseline = [cg.run_single(link_config("none"), s) for s in cfg.seeds]
    random_runs = [cg.run_single(link_config("random"), s) for s in range(1, 21)]
    return {
        "config": cfg,
        "cautious": cautious,
        "none": baseline,
        "random": random_runs,
    }


@pytest.fixture(scope="session")
def trained_node_model(node_suite):
    """Final student of the seed-1 cautious node run, with its task inputs."""
    from cplgraph.engine import _make_task

    cfg = node_suite["config"]
    task = _make_task(cfg, 1)
    return {
        "model": node_suite["cautious"][0].model,
        "graph": task.data.graph,
        "features": task.x,
        "test_idx": task.data.split.test_idx,
    }


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
