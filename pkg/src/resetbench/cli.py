"""Command-line entry point.

Every subcommand reads the same YAML config (``--config``) with ``--set
key=value`` overrides on top. Outputs go under ``--out``, or else under
``$RESETBENCH_OUT/<output_dir>``. Failures print one JSON error record on
stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import persist
from .bench import (
    RESULT_COLUMNS,
    BenchError,
    ExperimentConfig,
    evaluate,
    parse_override,
    run_bench,
    run_shifted,
    run_sweep,
    write_report,
    write_results,
)
from .datagen import gen_expert, gen_human
from .learn import fit_reduction
from .pipeline import TaskModels, build_task_models, fit_task_models, play_data, stream
from .rollout import oracle_rollout
from .sim import Split, Task, sample_scenario
from .theory import run_theory

ENV_OUT = "RESETBENCH_OUT"


def _config(args) -> ExperimentConfig:
    overrides = dict(parse_override(s) for s in args.set or [])
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.tasks:
        overrides["tasks"] = args.tasks
    return ExperimentConfig.load(args.config, overrides)


def _root(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(ENV_OUT, ".")) / cfg.output_dir


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def cmd_generate_data(args, cfg: ExperimentConfig, root: Path) -> dict:
    written = {}
    for seed in cfg.seeds:
        human, expert = [], []
        for task in cfg.tasks:
            human += gen_human(task, cfg.n_human, stream(seed, task, "human"), cfg.env, cfg.alpha)
            expert += gen_expert(task, cfg.n_expert, stream(seed, task, "expert", cfg.n_expert), cfg.env)
        play = play_data(seed, cfg.n_play, cfg.env)
        path = persist.save_dataset(root / "data" / f"seed{seed}.json", human, expert, play, cfg.hash)
        written[seed] = {"path": str(path), "human": len(human), "expert": len(expert), "play": len(play)}
    return {"datasets": written, "config_hash": cfg.hash}


def cmd_train(args, cfg: ExperimentConfig, root: Path) -> dict:
    written = {}
    for seed in cfg.seeds:
        data = persist.load_dataset(args.data or root / "data" / f"seed{seed}.json")
        reduction = fit_reduction(data["play"], cfg.lam_cls, cfg.lam_reg, cfg.lam_ridge)
        bundle = {}
        for task in cfg.tasks:
            t = Task(task)
            human = [d for d in data["human"] if d.task == t]
            expert = [e for e in data["expert"] if e.scene.task == t]
            if not human or not expert:
                raise ValueError(f"dataset has no {task} demos")
            tm = fit_task_models(
                t, human, expert, data["play"], seed, cfg.n_calib, cfg.lam_ridge, cfg.lam_score,
                cfg.lam_cls, cfg.lam_reg, cfg.k, reduction, cfg.env,
            )
            bundle[t] = (tm.reset, tm.naive)
        path = persist.save_models(root / "models" / f"seed{seed}.json", bundle, cfg.hash)
        written[seed] = {
            "path": str(path),
            "thresholds": {t.value: m.threshold for t, (m, _) in bundle.items()},
            "reduction_loss": reduction.total_loss,
        }
    return {"models": written, "config_hash": cfg.hash}


def cmd_eval(args, cfg: ExperimentConfig, root: Path) -> dict:
    summary = {}
    for seed in cfg.seeds:
        bundle = None
        if args.method != "oracle":
            bundle, _ = persist.load_models(args.models or root / "models" / f"seed{seed}.json")
        for task in cfg.tasks:
            t = Task(task)
            rng = stream(seed, task, "eval", args.split)
            scenes = [sample_scenario(t, Split(args.split), rng, cfg.env) for _ in range(args.n)]
            if args.method == "oracle":
                traces = [oracle_rollout(s, stream(seed, task, "eval", "oracle", i), cfg.m_max) for i, s in enumerate(scenes)]
            else:
                if t not in bundle:
                    raise ValueError(f"model file has no {task} models")
                reset, naive = bundle[t]
                tm = TaskModels(t, reset, naive, [], [])
                traces = evaluate(args.method, tm, scenes, cfg, seed, "eval")
            path = persist.save_traces(root / "traces" / f"{task}_{args.method}_{args.split}_seed{seed}.jsonl", traces)
            outcomes = [tr.outcome.value for tr in traces]
            summary[f"{task}/seed{seed}"] = {
                "traces": str(path),
                "rate": float(np.mean([o == "success" for o in outcomes])),
                "outcomes": {o: outcomes.count(o) for o in sorted(set(outcomes))},
                "mean_reduction_steps": float(np.mean([tr.n_reductions for tr in traces])),
            }
    return {"method": args.method, "split": args.split, "results": summary, "config_hash": cfg.hash}


def cmd_bench(args, cfg: ExperimentConfig, root: Path) -> dict:
    cfg.dump(root / "config.yaml")

    def flush(results):
        write_results(results, root)

    results = run_bench(cfg, on_result=flush)
    paths = write_results(results, root)
    csvs = [paths["csv"]]
    if cfg.shifted_scenarios > 0:
        shifted = run_shifted(cfg)
        csvs.append(write_results(shifted, root, "shifted")["csv"])
    report = write_report(csvs, root)
    return {
        "results": str(paths["csv"]),
        "scenarios": str(paths["scenarios"]),
        "report": str(report["markdown"]),
        "config_hash": cfg.hash,
        "rates": {f"{r.task}/{r.method}/seed{r.seed}": r.rate for r in results},
    }


def cmd_sweep(args, cfg: ExperimentConfig, root: Path) -> dict:
    cfg.dump(root / "config.yaml")
    results = run_sweep(cfg)
    paths = write_results(results, root, "sweep")
    report = write_report([paths["csv"]], root)
    return {
        "results": str(paths["csv"]),
        "report": str(report["markdown"]),
        "config_hash": cfg.hash,
        "rates": {f"{r.task}/{r.method}@{r.demos}/seed{r.seed}": r.rate for r in results},
    }


def cmd_theory(args, cfg: ExperimentConfig, root: Path) -> dict:
    out = {}
    for seed in cfg.seeds:
        play = play_data(seed, cfg.n_play, cfg.env)
        reduction = fit_reduction(play, cfg.lam_cls, cfg.lam_reg, cfg.lam_ridge)
        for task in cfg.tasks:
            tm = build_task_models(
                task, play, seed, cfg.n_expert, cfg.n_human, cfg.n_calib, cfg.lam_ridge, cfg.lam_score,
                cfg.lam_cls, cfg.lam_reg, cfg.alpha, cfg.k, reduction, cfg.env,
            )
            rep = run_theory(
                task, tm.reset, [d.scene for d in tm.expert], cfg.theory_n, cfg.theory_n_mi, cfg.theory_bins,
                stream(seed, task, "theory"), horizon=cfg.m_max, env_params=cfg.env,
            )
            out[f"{task}/seed{seed}"] = {
                "tr_sigma0": rep.tr_sigma0,
                "tr_sigma_a": rep.tr_sigma_a,
                "tr_sigma_oracle": rep.tr_sigma_oracle,
                "is_anchor": rep.anchor,
                "gap0": rep.gap0.as_dict(),
                "gap_a": rep.gap_a.as_dict(),
                "mi_learned": rep.mi_learned.as_dict(),
                "mi_oracle": rep.mi_oracle.as_dict(),
                "dpi": rep.dpi,
            }
    path = root / "theory.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=2, sort_keys=True))
    return {"theory": str(path), "config_hash": cfg.hash, "reports": out}


def cmd_report(args, cfg: ExperimentConfig, root: Path) -> dict:
    inputs = [Path(p) for p in args.inputs] if args.inputs else sorted(root.glob("*.csv"))
    keep = []
    for p in inputs:
        with open(p) as fh:
            header = fh.readline().strip().split(",")
        if header == RESULT_COLUMNS:
            keep.append(p)
    if not keep:
        raise FileNotFoundError(f"no result CSVs found under {root}")
    written = write_report(keep, root)
    return {k: str(v) for k, v in written.items()}


COMMANDS = {
    "generate-data": (cmd_generate_data, "generate human, expert and play data"),
    "train": (cmd_train, "fit all models from a generated dataset"),
    "eval": (cmd_eval, "roll out one method on fresh scenes and save traces"),
    "bench": (cmd_bench, "full benchmark of every method on every task"),
    "sweep": (cmd_sweep, "direct baseline over expert-demo counts versus ReSET"),
    "theory": (cmd_theory, "spread, gap and information checks"),
    "report": (cmd_report, "markdown tables and SVG charts from result CSVs"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
    common.add_argument("--seed", type=int, help="run a single seed")
    common.add_argument("--tasks", nargs="+", choices=[t.value for t in Task], help="restrict to these tasks")
    common.add_argument("--out", help=f"output directory (default ${ENV_OUT}/<output_dir>)")

    parser = argparse.ArgumentParser(prog="resetbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "train":
            p.add_argument("--data", help="dataset file (default <out>/data/seed<S>.json)")
        if name == "eval":
            p.add_argument("--models", help="model file (default <out>/models/seed<S>.json)")
            p.add_argument("--method", choices=["reset", "direct", "naive", "oracle"], default="reset")
            p.add_argument("--split", choices=[s.value for s in Split], default="ood")
            p.add_argument("-n", type=int, default=15, help="number of scenes per task")
        if name == "report":
            p.add_argument("inputs", nargs="*", help="result CSVs (default every results CSV in <out>)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        root = _root(args, cfg)
        _emit(COMMANDS[args.command][0](args, cfg, root))
    except BenchError as exc:
        print(json.dumps(exc.record()), file=sys.stderr)
        return 1
    except Exception as exc:  # every failure becomes one machine-readable record
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
