"""Command-line harness: run scenarios, query the oracle, export training
datasets, and compare finished runs."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backend import RemoteBackend, RemoteConfig, ScriptedBackend
from .oracle import best_fixed_p, evaluate_fixed
from .runner import compare, load_summary, run
from .scenarios import apply_priority_defaults, resolve_scenario
from .training import collect_dual_candidates, export_preferences, export_sft


def _add_scenario_args(parser):
    parser.add_argument("--scenario", required=True, help="builtin name or scenario file")
    parser.add_argument("--slots", type=int, default=None, help="override total slots")
    parser.add_argument("--seed", type=int, default=None, help="override run seed")


def _add_backend_args(parser):
    parser.add_argument("--backend", choices=("scripted", "remote"), default=None)
    parser.add_argument("--endpoint", default=None, help="remote chat-completion URL")
    parser.add_argument("--model", default=None, help="remote model name")
    parser.add_argument("--temperature", type=float, default=0.0)
    parser.add_argument("--timeout", type=float, default=30.0)
    parser.add_argument("--retries", type=int, default=3)
    parser.add_argument(
        "--api-key-env", default="REFLEXMAC_API_KEY",
        help="environment variable holding the API credential",
    )


def _make_backend(args, cfg):
    choice = args.backend if args.backend is not None else cfg.backend
    if choice == "scripted":
        return ScriptedBackend()
    if not args.endpoint or not args.model:
        raise SystemExit("remote backend needs --endpoint and --model")
    remote_cfg = RemoteConfig(
        endpoint_url=args.endpoint,
        model_name=args.model,
        temperature=args.temperature,
        timeout=args.timeout,
        max_retries=args.retries,
        api_key_env_var_name=args.api_key_env,
    )
    return RemoteBackend(remote_cfg, mode=cfg.mode)


def _resolve(args):
    cfg = resolve_scenario(args.scenario)
    if getattr(args, "mode", None) == "priority" and cfg.mode != "priority":
        cfg = apply_priority_defaults(cfg)
    return cfg


def cmd_run(args) -> int:
    cfg = _resolve(args)
    backend = _make_backend(args, cfg)
    summary = run(
        cfg,
        out_dir=args.out,
        seed=args.seed,
        total_slots=args.slots,
        backend=backend,
        no_observe=args.no_observe,
        no_reflection=args.no_reflection,
        slot_log=args.slot_log,
    )
    print(f"scenario {summary.scenario} seed {summary.seed}: "
          f"{summary.total_slots} slots, {summary.reports_emitted} reports, "
          f"{summary.reflections_emitted} reflections")
    for entry in summary.per_node:
        print(f"  node {entry['node_id']} ({entry['kind']}): "
              f"avg AoI {entry['avg_aoi']:.3f}")
    print(f"  system mean {summary.system_mean:.3f} (sum {summary.system_sum:.3f})")
    if summary.threshold_crossings:
        for nid, slot in summary.threshold_crossings.items():
            state = f"slot {slot}" if slot is not None else "never"
            print(f"  node {nid} reached its AoI threshold: {state}")
    if args.out:
        print(f"  wrote {Path(args.out) / 'periods.csv'} and summary.json")
    return 0


def cmd_oracle(args) -> int:
    cfg = _resolve(args)
    rma = cfg.rma_indices()
    if args.p is not None:
        p_vector = tuple(args.p)
        result = evaluate_fixed(
            cfg, p_vector, mc_slots=args.mc_slots, n_seeds=args.mc_seeds
        )
    else:
        result = best_fixed_p(
            cfg,
            grid_step=args.grid,
            objective=args.objective,
            mc_slots=args.mc_slots,
            n_seeds=args.mc_seeds,
        )
    doc = {
        "scenario": cfg.name,
        "objective": result.objective,
        "p_vector": list(result.p_vector),
        "per_node_aoi": list(result.per_node_aoi),
        "system_sum": result.system_sum,
        "system_mean": result.system_mean,
        "method": result.method,
        "mc_slots": result.mc_slots,
        "mc_seeds": list(result.mc_seeds),
        "analytic_per_node": list(result.analytic_per_node or ()),
        "discrepancy": result.discrepancy,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"scenario {cfg.name}: p* = {tuple(round(p, 4) for p in result.p_vector)}")
    print(f"{'node':>6}  {'aoi':>10}")
    for i, value in enumerate(result.per_node_aoi):
        marker = " (optimized slot)" if i in rma else ""
        print(f"{i:>6}  {value:>10.4f}{marker}")
    print(f"system sum {result.system_sum:.4f}, mean {result.system_mean:.4f}")
    if result.discrepancy is not None:
        print(f"monte-carlo vs analytic max discrepancy: {result.discrepancy:.2%}")
    return 0


def cmd_export_dataset(args) -> int:
    cfg = _resolve(args)
    backend = _make_backend(args, cfg)
    samples, pairs = collect_dual_candidates(
        cfg, args.candidates, seed=args.seed, backend=backend
    )
    pref_path = Path(args.out)
    sft_path = Path(args.sft_out) if args.sft_out else pref_path.with_suffix(".sft.jsonl")
    n_pairs = export_preferences(pairs, pref_path)
    n_sft = export_sft(samples, sft_path)
    print(f"collected {len(samples)} reward samples over {args.candidates} cycles")
    print(f"wrote {n_pairs} preference pairs to {pref_path}")
    print(f"wrote {n_sft} SFT records to {sft_path}")
    return 0


def cmd_compare(args) -> int:
    summaries = []
    for run_path in args.runs:
        path = Path(run_path)
        if path.is_dir():
            path = path / "summary.json"
        summaries.append(load_summary(path))
    text, csv_text = compare(summaries, labels=list(args.runs))
    print(text)
    if args.csv:
        Path(args.csv).write_text(csv_text + "\n", encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflexmac",
        description="slotted-channel AoI simulator with a reflective-agent MAC",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_scenario_args(p_run)
    _add_backend_args(p_run)
    p_run.add_argument("--mode", choices=("normal", "priority"), default=None)
    p_run.add_argument("--no-reflection", action="store_true",
                       help="ablation: disable cycle-level policy updates")
    p_run.add_argument("--no-observe", action="store_true",
                       help="ablation: disable period-level perturbations")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--slot-log", action="store_true", help="write per-slot log")
    p_run.set_defaults(func=cmd_run)

    p_oracle = sub.add_parser("oracle", help="steady-state oracle for fixed policies")
    _add_scenario_args(p_oracle)
    p_oracle.add_argument("--grid", type=float, default=0.01, help="grid step")
    p_oracle.add_argument(
        "--objective", choices=("system_mean", "system_sum", "node"),
        default="system_mean",
    )
    p_oracle.add_argument("--p", type=float, nargs="+", default=None,
                          help="evaluate these probabilities instead of searching")
    p_oracle.add_argument("--mc-slots", type=int, default=200_000)
    p_oracle.add_argument("--mc-seeds", type=int, default=5)
    p_oracle.add_argument("--out", default=None, help="write the result JSON here")
    p_oracle.set_defaults(func=cmd_oracle)

    p_export = sub.add_parser("export-dataset", help="dual-candidate dataset export")
    _add_scenario_args(p_export)
    _add_backend_args(p_export)
    p_export.add_argument("--mode", choices=("normal", "priority"), default=None)
    p_export.add_argument("--candidates", type=int, default=20,
                          help="number of reflection cycles to collect")
    p_export.add_argument("--out", required=True, help="preference pairs file (.jsonl)")
    p_export.add_argument("--sft-out", default=None, help="SFT records file (.jsonl)")
    p_export.set_defaults(func=cmd_export_dataset)

    p_compare = sub.add_parser("compare", help="percentage deltas between runs")
    p_compare.add_argument("runs", nargs="+", help="run directories or summary files")
    p_compare.add_argument("--csv", default=None, help="also write a CSV table here")
    p_compare.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
