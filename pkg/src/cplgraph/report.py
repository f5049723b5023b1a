"""Report emission and replay.

A run report is one JSON document plus a flat CSV of the iteration series.
Reports are deterministic byte for byte: keys are sorted, floats use their
shortest round-trip form, and nothing time-dependent goes in. Wall-clock
timing lives in a separate sidecar file so rerunning a config can be
compared against its previous report with a plain byte diff.

All ratios are stored as fractions; percent formatting happens only at the
console.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .config import ExperimentConfig, config_to_dict
from .engine import IterationRecord, RunResult, error_bound, loss_trajectory_check
from .util import DataError

REPORT_VERSION = 1

SERIES_COLUMNS = (
    "t",
    "observed_size",
    "pool_size",
    "k_effective",
    "truncated",
    "c_min",
    "threshold_confidence",
    "q",
    "pl_error_rate",
    "covariance",
    "beta",
    "loss_with_selection",
    "loss_baseline",
    "bound_rhs",
    "slack",
    "bound_holds",
    "indicator_mean",
    "indicator_expected",
    "loss_observed",
    "loss_before_finetune",
    "loss_after_finetune",
    "assumption_violation",
    "val_metric",
    "inconsistency",
    "epsilon_mean",
    "epsilon_max",
)


def pct(value: float) -> str:
    """Console-only percent rendering of a stored fraction."""
    return f"{100.0 * value:.2f}%"


def run_report(result: RunResult, cfg: ExperimentConfig, include_config: bool = True) -> dict:
    """JSON-safe document for one seeded run."""
    bound = None
    if result.error_bound_value is not None:
        bound = {
            "q": result.q,
            "inconsistency": result.inconsistency_final,
            "value": result.error_bound_value,
            "experimental_error": (
                result.final_metrics["error"] if result.final_metrics else None
            ),
            "holds": result.bound_holds,
            "vacuous": result.bound_vacuous,
        }
    trajectory = (
        loss_trajectory_check(result.records) if len(result.records) >= 2 else None
    )
    payload = {
        "schema_version": REPORT_VERSION,
        "kind": "run",
        "run_seed": result.run_seed,
        "task": result.task,
        "strategy": result.strategy,
        "raw_metrics": result.raw_metrics,
        "final_metrics": result.final_metrics,
        "pretrain_loss_series": result.pretrain_loss_series,
        "iterations": [r.to_dict() for r in result.records],
        "pseudo_labels": result.pseudo_log,
        "q": result.q,
        "inconsistency_initial": result.inconsistency_initial,
        "inconsistency_final": result.inconsistency_final,
        "error_bound": bound,
        "observed_final": result.observed_final,
        "pool_final": result.pool_final,
        "gpi_constant_estimate": result.gpi_estimate,
        "trajectory_check": trajectory,
        "aborted": result.aborted,
    }
    if include_config:
        payload["config"] = config_to_dict(cfg)
    return payload


@dataclass(frozen=True)
class EvalReport:
    """Seed-sweep aggregate: metric means with spreads plus per-seed detail."""

    task: str
    strategy: str
    seed_count: int
    metrics_mean: dict
    metrics_std: dict | None
    per_seed: dict
    per_seed_raw: dict
    bounds: list
    pl_error_series: list
    covariance: dict


def aggregate_runs(results: list[RunResult]) -> EvalReport:
    if not results:
        raise ValueError("no runs to aggregate")
    task = results[0].task
    strategy = results[0].strategy
    finished = [r for r in results if r.final_metrics is not None]
    keys = sorted(finished[0].final_metrics) if finished else []
    per_seed = {k: [r.final_metrics[k] for r in finished] for k in keys}
    raw_keys = sorted(results[0].raw_metrics)
    per_seed_raw = {k: [r.raw_metrics[k] for r in results] for k in raw_keys}
    metrics_mean = {k: float(np.mean(v)) for k, v in per_seed.items() if v}
    metrics_std = None
    if len(finished) >= 2:
        metrics_std = {k: float(np.std(v, ddof=1)) for k, v in per_seed.items()}
    bounds = [
        {
            "seed": r.run_seed,
            "q": r.q,
            "inconsistency": r.inconsistency_final,
            "value": r.error_bound_value,
            "experimental_error": (
                r.final_metrics["error"] if r.final_metrics else None
            ),
            "holds": r.bound_holds,
            "vacuous": r.bound_vacuous,
        }
        for r in results
    ]
    pl_error_series = [
        [rec.pl_error_rate for rec in r.records] for r in results
    ]
    per_seed_cov = [
        float(np.mean([rec.covariance for rec in r.records])) if r.records else None
        for r in results
    ]
    valid_cov = [v for v in per_seed_cov if v is not None]
    covariance = {
        "per_seed_mean": per_seed_cov,
        "mean": float(np.mean(valid_cov)) if valid_cov else None,
        "standard_error": (
            float(np.std(valid_cov, ddof=1) / math.sqrt(len(valid_cov)))
            if len(valid_cov) >= 2
            else None
        ),
        "median": float(np.median(valid_cov)) if valid_cov else None,
    }
    return EvalReport(
        task=task,
        strategy=strategy,
        seed_count=len(results),
        metrics_mean=metrics_mean,
        metrics_std=metrics_std,
        per_seed=per_seed,
        per_seed_raw=per_seed_raw,
        bounds=bounds,
        pl_error_series=pl_error_series,
        covariance=covariance,
    )


def sweep_report(results: list[RunResult], cfg: ExperimentConfig) -> dict:
    return {
        "schema_version": REPORT_VERSION,
        "kind": "sweep",
        "config": config_to_dict(cfg),
        "aggregate": asdict(aggregate_runs(results)),
        "runs": [run_report(r, cfg, include_config=False) for r in results],
    }


def write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"report file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_series_csv(records: list[IterationRecord], path: str) -> None:
    """Flat per-iteration series; per-view budgets are summarized, the full
    list stays in the JSON report."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_COLUMNS)
        for rec in records:
            row = rec.to_dict()
            eps = row.pop("epsilons")
            row["epsilon_mean"] = float(np.mean(eps)) if eps else None
            row["epsilon_max"] = float(np.max(eps)) if eps else None
            writer.writerow([_cell(row[c]) for c in SERIES_COLUMNS])


def write_timing(path: str, seconds: float) -> None:
    """Wall-clock sidecar; kept out of the report for byte determinism."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"wall_clock_seconds": seconds}, fh, sort_keys=True)
        fh.write("\n")


def _close(a, b, tol=1e-9) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol


def diagnose_run(payload: dict) -> dict:
    """Replay the arithmetic of a stored run report.

    Re-derives the error bound from its stored inputs, the per-iteration
    decomposition right-hand sides, the running confidence minimum, and the
    exact indicator mean; mismatches are listed, not repaired.
    """
    problems = []
    rows = []
    running_min = None
    for it in payload.get("iterations", []):
        t = it["t"]
        rhs = it["beta"] * it["covariance"] + it["loss_baseline"]
        if not _close(rhs, it["bound_rhs"]):
            problems.append(f"iteration {t}: stored bound_rhs differs from beta*cov+baseline")
        slack = it["loss_with_selection"] - rhs
        if not _close(slack, it["slack"]):
            problems.append(f"iteration {t}: stored slack differs from recomputation")
        if it["slack"] > 1e-6:
            problems.append(f"iteration {t}: decomposition slack above tolerance")
        if it["k_effective"] > 0:
            expected = it["k_effective"] / it["pool_size"]
            if it["indicator_mean"] != expected or it["indicator_expected"] != expected:
                problems.append(f"iteration {t}: indicator mean is not exactly k/pool")
            running_min = (
                it["c_min"] if running_min is None else min(running_min, it["c_min"])
            )
            if not _close(it["threshold_confidence"], running_min, tol=0.0):
                problems.append(f"iteration {t}: threshold is not the running minimum")
        rows.append(
            {
                "t": t,
                "covariance": it["covariance"],
                "beta": it["beta"],
                "slack": it["slack"],
                "indicator_exact": it["indicator_mean"] == it["indicator_expected"],
                "assumption_violation": it["assumption_violation"],
            }
        )
    stored_q = payload.get("q")
    if running_min is None:
        if stored_q is not None:
            problems.append("q stored without any committed iteration")
    elif not _close(stored_q, 1.0 - running_min, tol=1e-15):
        problems.append("stored q is not one minus the lowest committed confidence")
    bound = payload.get("error_bound")
    if bound is not None:
        rederived = error_bound(bound["q"], bound["inconsistency"])
        if not _close(rederived, bound["value"], tol=1e-12):
            problems.append("stored error bound differs from 2*(q+inconsistency)")
        err = bound.get("experimental_error")
        if err is not None:
            if bool(err <= bound["value"]) != bound["holds"]:
                problems.append("stored bound verdict contradicts its own numbers")
    return {
        "kind": "run",
        "run_seed": payload.get("run_seed"),
        "iterations": rows,
        "error_bound": bound,
        "ok": not problems,
        "problems": problems,
    }


def diagnose_report(payload: dict) -> dict:
    """Replay one run report or every run inside a sweep report."""
    kind = payload.get("kind")
    if kind == "run":
        return diagnose_run(payload)
    if kind == "sweep":
        runs = [diagnose_run(r) for r in payload.get("runs", [])]
        problems = [p for r in runs for p in r["problems"]]
        return {"kind": "sweep", "runs": runs, "ok": not problems, "problems": problems}
    raise DataError(f"not a recognized report document (kind={kind!r})")
