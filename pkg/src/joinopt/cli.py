"""Command-line entry points.

Commands: gen-workload, partition-report, meta-train, train, eval,
replay-report.  Every command derives all randomness from a single seed, so
identical flags produce byte-identical artifacts (wall-clock columns aside).
Errors exit nonzero with one machine-parseable line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import workload_gen
from .catalog import load_catalog, load_workload
from .metrics import QueryTrace, classify_query, convergence_iteration, wrl
from .model import load_params, save_params
from .retention import dump_buffer, sample_replay
from .simulator import expert_baseline
from .trainer import (
    RunConfig,
    config_to_doc,
    derive_seed,
    load_run_config,
    meta_initialize,
    run_repetitions,
    run_training,
    write_run_csv,
    write_summary_csv,
    evaluate_queries,
    write_verdicts_csv,
)
from .transfer import score_all_policies

__all__ = ["main"]

_WEIGHTING_FLAGS = {
    "recency": "recency",
    "td-low": "td_low",
    "td-high": "td_high",
    "hybrid": "hybrid",
}

_POLICY_FLAGS = {
    "halstead": "halstead",
    "operator-count": "operator_count",
    "estimated-cost": "estimated_cost",
    "estimated-rows": "estimated_rows",
}


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    import dataclasses

    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    if getattr(args, "reps", None) is not None:
        cfg = dataclasses.replace(cfg, repetitions=args.reps)
    if getattr(args, "iterations", None) is not None:
        cfg = dataclasses.replace(cfg, iterations=args.iterations)
    if getattr(args, "k_tasks", None) is not None:
        cfg = dataclasses.replace(
            cfg, transfer=dataclasses.replace(cfg.transfer, k_tasks=args.k_tasks)
        )
    if getattr(args, "no_transfer", False):
        cfg = dataclasses.replace(
            cfg, transfer=dataclasses.replace(cfg.transfer, enabled=False)
        )
    if getattr(args, "no_retention", False):
        cfg = dataclasses.replace(
            cfg, retention=dataclasses.replace(cfg.retention, enabled=False)
        )
    if getattr(args, "weighting", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            retention=dataclasses.replace(
                cfg.retention, weighting=_WEIGHTING_FLAGS[args.weighting]
            ),
        )
    if getattr(args, "policy", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            transfer=dataclasses.replace(
                cfg.transfer, forced_policy=_POLICY_FLAGS[args.policy]
            ),
        )
    return cfg


def _cmd_gen_workload(args) -> int:
    catalog_doc, train_doc, test_doc = workload_gen.generate(
        n_tables=args.tables,
        shape=args.shape,
        n_train=args.train_queries,
        n_test=args.test_queries,
        seed=args.seed,
        min_relations=args.min_relations,
        max_relations=args.max_relations,
    )
    paths = workload_gen.write_files(args.out, catalog_doc, train_doc, test_doc)
    for path in paths:
        print(path)
    return 0


def _cmd_partition_report(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    catalog = load_catalog(cfg.catalog_path)
    workload = load_workload(cfg.train_workload_path, catalog)
    scored = score_all_policies(
        workload, cfg.transfer.k_tasks, catalog, cfg.cost_model
    )
    best = min(range(len(scored)), key=lambda i: scored[i].dbi_score)
    rows = []
    for i, ts in enumerate(scored):
        for task_idx, task in enumerate(ts.tasks):
            rows.append(
                {
                    "policy": ts.policy.value,
                    "task": task_idx,
                    "query_ids": " ".join(task),
                    "dbi": repr(ts.dbi_score),
                    "selected": "yes" if i == best else "no",
                }
            )
    for ts, marker in ((scored[i], "*" if i == best else " ") for i in range(len(scored))):
        print(f"{marker} {ts.policy.value:<16} DBI={ts.dbi_score:.6f} tasks={list(map(list, ts.tasks))}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "partition_report.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["policy", "task", "query_ids", "dbi", "selected"]
            )
            writer.writeheader()
            writer.writerows(rows)
        print(out / "partition_report.csv")
    return 0


def _cmd_meta_train(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    catalog = load_catalog(cfg.catalog_path)
    workload = load_workload(cfg.train_workload_path, catalog)
    from .model import init_params

    layer_sizes = (len(catalog.tables) + 8, *cfg.model.hidden_sizes, 1)
    params = init_params(layer_sizes, derive_seed(cfg.base_seed, "init"))
    params, taskset = meta_initialize(cfg, catalog, workload, params, cfg.base_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "meta_params.npz"
    save_params(params, ckpt)
    print(f"policy={taskset.policy.value} dbi={taskset.dbi_score}")
    print(ckpt)
    return 0


def _cmd_train(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    result = run_repetitions(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config_to_doc(cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    for rep, run in enumerate(result.runs):
        rep_dir = out / f"rep{rep}"
        rep_dir.mkdir(exist_ok=True)
        write_run_csv(run, rep_dir / "run.csv")
        save_params(run.params, rep_dir / "model.npz")
    write_summary_csv(result, out / "summary.csv")
    write_verdicts_csv(result, out / "verdicts.csv")
    median_conv = result.median_convergence()
    print(
        f"median final WRL test={result.median_final_wrl('test'):.4f} "
        f"train={result.median_final_wrl('train'):.4f}"
    )
    print(
        "median convergence iteration="
        + ("NC" if median_conv is None else str(median_conv))
    )
    print(f"median test regressions={result.median_regressions('test')}")
    print(out / "summary.csv")
    return 0


def _parse_run_history(path):
    """Per-query traces and per-iteration test totals from a run.csv file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty run history")
    traces = {}
    test_totals = []
    for row in rows:
        iteration = int(row["iteration"])
        total = 0.0
        for column, value in row.items():
            for prefix, split in (("train_latency_ms:", "train"), ("test_latency_ms:", "test")):
                if column.startswith(prefix):
                    qid = column[len(prefix):]
                    traces.setdefault((split, qid), []).append((iteration, float(value)))
                    if split == "test":
                        total += float(value)
        test_totals.append((iteration, total))
    return traces, test_totals


def _cmd_eval(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    params = load_params(args.model)
    catalog = load_catalog(cfg.catalog_path)
    train_queries = load_workload(cfg.train_workload_path, catalog)
    test_queries = load_workload(cfg.test_workload_path, catalog)
    history = _parse_run_history(args.history) if args.history else None

    rows = []
    wrls = {}
    baselines = {}
    for split, queries in (("train", train_queries), ("test", test_queries)):
        latencies = evaluate_queries(queries, params, catalog, cfg, cfg.base_seed, 0)
        expert = {}
        for idx, query in enumerate(queries):
            baseline = expert_baseline(
                query,
                catalog,
                cfg.cost_model,
                n_runs=cfg.baseline_runs,
                base_seed=derive_seed(cfg.base_seed, "baseline-eval", split, idx),
            )
            baselines[query.id] = baseline
            expert[query.id] = baseline.mean_latency_ms
            row = {
                "split": split,
                "query_id": query.id,
                "learned_latency_ms": repr(latencies[query.id]),
                "expert_mean_latency_ms": repr(baseline.mean_latency_ms),
                "expert_tolerance_ms": repr(baseline.tolerance_ms),
                "verdict": "",
            }
            if history is not None:
                points = history[0].get((split, query.id))
                if points:
                    trace = QueryTrace(query.id, tuple(points), baseline)
                    row["verdict"] = classify_query(trace, cfg.window_fraction).verdict.value
            rows.append(row)
        wrls[split] = wrl(latencies, expert)
        print(f"{split} WRL={wrls[split]:.4f}")
    for row in rows:
        verdict = f" verdict={row['verdict']}" if row["verdict"] else ""
        print(
            f"  {row['split']:<5} {row['query_id']:<6} "
            f"learned={float(row['learned_latency_ms']):.3f}ms "
            f"expert={float(row['expert_mean_latency_ms']):.3f}ms{verdict}"
        )
    convergence = None
    if history is not None:
        expert_total = sum(baselines[q.id].mean_latency_ms for q in test_queries)
        tolerance_total = sum(baselines[q.id].tolerance_ms for q in test_queries)
        convergence = convergence_iteration(
            history[1], expert_total, tolerance_total, cfg.convergence_sustain
        )
        print(
            "convergence iteration="
            + ("NC" if convergence is None else str(convergence))
        )
    if args.out:
        conv_value = ""
        if history is not None:
            conv_value = "NC" if convergence is None else str(convergence)
        for row in rows:
            row["convergence_iteration"] = conv_value
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=[
                    "split",
                    "query_id",
                    "learned_latency_ms",
                    "expert_mean_latency_ms",
                    "expert_tolerance_ms",
                    "verdict",
                    "convergence_iteration",
                ],
            )
            writer.writeheader()
            writer.writerows(rows)
        print(out / "eval.csv")
    return 0


def _cmd_replay_report(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    result = run_training(cfg)
    catalog = load_catalog(cfg.catalog_path)
    train_queries = load_workload(cfg.train_workload_path, catalog)
    from .retention import ReplayBuffer, extract_experiences
    from .simulator import execute
    from .trainer import plan_search

    # Rebuild the final buffer state by replaying the run's executions.
    buffer = ReplayBuffer(cfg.retention.capacity)
    params = result.params
    epsilon = cfg.search.epsilon
    seed = result.base_seed
    for iteration in range(1, cfg.iterations + 1):
        for qidx, query in enumerate(train_queries):
            plan = plan_search(
                query,
                params,
                catalog,
                cfg.cost_model,
                cfg.search.beam_width,
                0.0,
                derive_seed(seed, "report-search", iteration, qidx),
                cfg.search.left_deep_only,
            )
            latency = execute(
                plan, query, catalog, cfg.cost_model,
                derive_seed(seed, "report-exec", iteration, qidx),
            )
            buffer.extend(
                extract_experiences(
                    plan, query, catalog, cfg.cost_model, latency, iteration, params
                )
            )
        epsilon *= cfg.search.epsilon_decay
    sampled, stats = sample_replay(
        buffer,
        params,
        cfg.retention.policy(),
        cfg.retention.k_replay,
        cfg.retention.gamma,
        cfg.retention.alpha_td,
        derive_seed(seed, "report-replay"),
        with_stats=True,
    )
    counts = np.bincount(stats.sampled_indices, minlength=len(buffer))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_buffer(buffer, out / "buffer.json")
    items = buffer.snapshot()
    with open(out / "replay_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["index", "query_id", "stored_at", "norm_td", "recency", "probability", "sampled_count"]
        )
        for i, exp in enumerate(items):
            writer.writerow(
                [
                    i,
                    exp.query_id,
                    exp.stored_at,
                    repr(float(stats.norm_td[i])),
                    repr(float(stats.recency[i])),
                    repr(float(stats.probabilities[i])),
                    int(counts[i]),
                ]
            )
    print(
        f"buffer size={len(buffer)} sampled={len(sampled)} "
        f"mean_norm_td={stats.mean_sampled_norm_td:.4f} "
        f"mean_recency={stats.mean_sampled_recency:.4f}"
    )
    print(out / "replay_report.csv")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="joinopt",
        description="Learned join-order optimizer sandbox with replay training, "
        "meta-learned initialization, and a deterministic cost simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-workload", help="generate a synthetic catalog and workload")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--tables", type=int, default=6, help="number of tables (>= 2)")
    gen.add_argument(
        "--shape", choices=workload_gen.SHAPES, default="star", help="schema shape"
    )
    gen.add_argument("--train-queries", type=int, default=10, help="train query count")
    gen.add_argument("--test-queries", type=int, default=3, help="test query count")
    gen.add_argument("--seed", type=int, default=1, help="generator seed")
    gen.add_argument("--min-relations", type=int, default=2, help="smallest query size")
    gen.add_argument(
        "--max-relations", type=int, default=None, help="largest query size"
    )
    gen.set_defaults(func=_cmd_gen_workload)

    part = sub.add_parser(
        "partition-report", help="score all partitioning policies by DBI"
    )
    part.add_argument("--config", required=True, help="run-configuration file")
    part.add_argument("--k-tasks", type=int, default=None, help="override task count")
    part.add_argument("--seed", type=int, default=None, help="override base seed")
    part.add_argument("--out", default=None, help="directory for partition_report.csv")
    part.set_defaults(func=_cmd_partition_report)

    meta = sub.add_parser("meta-train", help="produce a meta-learned checkpoint")
    meta.add_argument("--config", required=True, help="run-configuration file")
    meta.add_argument("--seed", type=int, default=None, help="override base seed")
    meta.add_argument("--k-tasks", type=int, default=None, help="override task count")
    meta.add_argument(
        "--policy",
        choices=sorted(_POLICY_FLAGS),
        default=None,
        help="force a partitioning policy instead of DBI selection",
    )
    meta.add_argument("--out", required=True, help="output directory")
    meta.set_defaults(func=_cmd_meta_train)

    train = sub.add_parser("train", help="run training repetitions and export CSVs")
    train.add_argument("--config", required=True, help="run-configuration file")
    train.add_argument("--seed", type=int, default=None, help="override base seed")
    train.add_argument("--reps", type=int, default=None, help="override repetitions")
    train.add_argument(
        "--iterations", type=int, default=None, help="override training iterations"
    )
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument(
        "--no-transfer", action="store_true", help="disable meta initialization"
    )
    train.add_argument(
        "--no-retention",
        action="store_true",
        help="train only on each iteration's fresh experiences",
    )
    train.add_argument(
        "--weighting",
        choices=sorted(_WEIGHTING_FLAGS),
        default=None,
        help="replay weighting policy",
    )
    train.add_argument(
        "--policy",
        choices=sorted(_POLICY_FLAGS),
        default=None,
        help="force a partitioning policy instead of DBI selection",
    )
    train.add_argument("--k-tasks", type=int, default=None, help="override task count")
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint against the expert")
    ev.add_argument("--config", required=True, help="run-configuration file")
    ev.add_argument("--model", required=True, help="model checkpoint (.npz)")
    ev.add_argument("--seed", type=int, default=None, help="override base seed")
    ev.add_argument(
        "--history", default=None,
        help="a run.csv file; adds per-query verdicts and the convergence iteration",
    )
    ev.add_argument("--out", default=None, help="directory for eval.csv")
    ev.set_defaults(func=_cmd_eval)

    rep = sub.add_parser(
        "replay-report", help="train briefly and report replay-buffer statistics"
    )
    rep.add_argument("--config", required=True, help="run-configuration file")
    rep.add_argument("--seed", type=int, default=None, help="override base seed")
    rep.add_argument(
        "--iterations", type=int, default=None, help="override training iterations"
    )
    rep.add_argument("--out", required=True, help="output directory")
    rep.set_defaults(func=_cmd_replay_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
