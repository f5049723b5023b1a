"""Command-line surface.

Subcommands: gen (write synthetic dataset files), train (pretrain only),
cpl (full pseudo-labeling sweep), eval (score a checkpoint), diagnose
(replay a report's arithmetic). Exit codes: 1 configuration problem, 2 data
problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from .config import STRATEGIES, load_config, with_strategy
from .engine import _make_task, run_single, run_sweep
from .graph import write_edge_list, write_features_csv, write_labels
from .nn import load_checkpoint, save_checkpoint
from .plots import render_run_figure, render_sweep_figure
from .report import (
    aggregate_runs,
    diagnose_report,
    pct,
    read_json,
    run_report,
    sweep_report,
    write_json,
    write_series_csv,
    write_timing,
)
from .util import ConfigError, DataError, NumericalError


class _Parser(argparse.ArgumentParser):
    """Argument errors surface as configuration errors, not SystemExit."""

    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage().rstrip()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="cplgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write dataset files for a synthetic config")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out-dir", default=None)

    train = sub.add_parser("train", help="pretrain only and save a checkpoint")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out-dir", default=None)

    cpl = sub.add_parser("cpl", help="run the pseudo-labeling sweep")
    cpl.add_argument("--config", required=True)
    cpl.add_argument("--strategy", choices=STRATEGIES, default=None)
    cpl.add_argument("--out-dir", default=None)

    ev = sub.add_parser("eval", help="recompute metrics from a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", required=True)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--out", default=None)

    diag = sub.add_parser("diagnose", help="replay a report's bound arithmetic")
    diag.add_argument("report")
    return parser


def _out_dir(cfg, override) -> str:
    path = override if override else cfg.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_gen(args) -> int:
    cfg = load_config(args.config)
    if cfg.dataset.kind != "sbm":
        raise ConfigError("gen needs a synthetic (sbm) dataset config")
    from .engine import build_task_data

    data = build_task_data(cfg, int(cfg.seeds[0]))
    out = _out_dir(cfg, args.out_dir)
    edges = os.path.join(out, f"{cfg.name}-edges.txt")
    feats = os.path.join(out, f"{cfg.name}-features.csv")
    write_edge_list(data.graph, edges)
    write_features_csv(data.features, feats)
    written = [edges, feats]
    if cfg.task == "node":
        labels = os.path.join(out, f"{cfg.name}-labels.csv")
        write_labels(data.labels, labels)
        written.append(labels)
    print(f"nodes={data.graph.node_count} edges={data.graph.edge_count}")
    for path in written:
        print(path)
    return 0


def _write_run_artifacts(result, cfg, out: str, base: str) -> dict:
    payload = run_report(result, cfg)
    write_json(payload, os.path.join(out, f"{base}.report.json"))
    write_series_csv(result.records, os.path.join(out, f"{base}.series.csv"))
    render_run_figure(payload, os.path.join(out, f"{base}.png"))
    return payload


def _cmd_train(args) -> int:
    cfg = with_strategy(load_config(args.config), "none")
    seed = int(cfg.seeds[0]) if args.seed is None else args.seed
    out = _out_dir(cfg, args.out_dir)
    started = time.perf_counter()
    result = run_single(cfg, seed)
    base = f"{cfg.name}-pretrain-seed{seed}"
    save_checkpoint(result.model, os.path.join(out, f"{base}.ckpt.json"))
    _write_run_artifacts(result, cfg, out, base)
    write_timing(os.path.join(out, f"{base}.timing.json"), time.perf_counter() - started)
    line = " ".join(f"{k}={pct(v)}" for k, v in sorted(result.raw_metrics.items()))
    print(f"seed {seed}: {line}")
    return 0


def _cmd_cpl(args) -> int:
    cfg = load_config(args.config)
    if args.strategy is not None:
        cfg = with_strategy(cfg, args.strategy)
    out = _out_dir(cfg, args.out_dir)
    base = f"{cfg.name}-{cfg.pl.strategy}"
    started = time.perf_counter()
    results = run_sweep(cfg)
    for result in results:
        _write_run_artifacts(result, cfg, out, f"{base}-seed{result.run_seed}")
    payload = sweep_report(results, cfg)
    write_json(payload, os.path.join(out, f"{base}.sweep.json"))
    render_sweep_figure(payload, os.path.join(out, f"{base}.sweep.png"))
    write_timing(os.path.join(out, f"{base}.timing.json"), time.perf_counter() - started)

    agg = aggregate_runs(results)
    for name in sorted(agg.metrics_mean):
        spread = (
            f" +/- {pct(agg.metrics_std[name])}" if agg.metrics_std else ""
        )
        print(f"{name}: {pct(agg.metrics_mean[name])}{spread}")
    held = [b for b in agg.bounds if b["holds"] is not None]
    if held:
        ok = sum(1 for b in held if b["holds"])
        print(f"error bound held in {ok}/{len(held)} runs")
    aborted = [r.run_seed for r in results if r.aborted]
    if aborted:
        print(f"aborted seeds: {aborted}", file=sys.stderr)
        return 3
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg.seeds[0]) if args.seed is None else args.seed
    model = load_checkpoint(args.checkpoint)
    if model.task != cfg.task:
        raise ConfigError(
            f"checkpoint task {model.task!r} does not match config task {cfg.task!r}"
        )
    task = _make_task(cfg, seed)
    state = task.initial_state()
    metrics = task.test_metrics(model.params, state)
    for name in sorted(metrics):
        print(f"{name}: {pct(metrics[name])}")
    if args.out:
        write_json({"seed": seed, "metrics": metrics}, args.out)
    return 0


def _cmd_diagnose(args) -> int:
    outcome = diagnose_report(read_json(args.report))
    runs = outcome["runs"] if outcome["kind"] == "sweep" else [outcome]
    for run in runs:
        print(f"run seed {run['run_seed']}:")
        for row in run["iterations"]:
            print(
                f"  t={row['t']} cov={row['covariance']:+.6f} beta={row['beta']:.4f}"
                f" slack={row['slack']:.2e} indicator_exact={row['indicator_exact']}"
                f" assumption_violation={row['assumption_violation']}"
            )
        bound = run.get("error_bound")
        if bound is not None:
            print(
                f"  bound 2*(q+A) = {bound['value']:.6f}"
                f" (q={bound['q']:.6f}, A={bound['inconsistency']:.6f})"
                f" vs error {bound['experimental_error']:.6f} -> holds={bound['holds']}"
            )
    if not outcome["ok"]:
        raise DataError("; ".join(outcome["problems"]))
    print("all checks passed")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "cpl": _cmd_cpl,
    "eval": _cmd_eval,
    "diagnose": _cmd_diagnose,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
