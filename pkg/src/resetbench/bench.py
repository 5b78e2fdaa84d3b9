"""Seeded benchmark orchestration and report writing."""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .datagen import UnsolvableScene, gen_expert
from .learn import CalibrationError, fit_base, fit_reduction
from .persist import config_hash
from .pipeline import TaskModels, build_task_models, play_data, shifted_scenes, stream
from .rollout import direct_rollout, naive_rollout, reset_rollout
from .sim import TASKS, Split, Task, Theta, sample_scenario
from .theory import TheoryReport, naive_step, run_theory

RESULT_COLUMNS = [
    "task",
    "method",
    "demos",
    "seed",
    "scenarios",
    "successes",
    "rate",
    "mean_reduction_steps",
    "tr_sigma0",
    "tr_sigma_a",
    "gap0",
    "gap_a",
    "bound",
    "mi_sb",
    "mi_sa",
    "wall_ms",
    "config_hash",
]
SCENARIO_COLUMNS = ["task", "method", "demos", "seed", "scenario", "split", "outcome", "success", "reduction_steps", "config_hash"]
METHODS = ("reset", "direct", "naive")
TIMING_COLUMNS = ("wall_ms",)


class BenchError(RuntimeError):
    """A benchmark cell could not be completed; earlier rows were flushed."""

    def __init__(self, message: str, task: str = "", seed: Optional[int] = None, cause: str = ""):
        super().__init__(message)
        self.task = task
        self.seed = seed
        self.cause = cause

    def record(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "task": self.task, "seed": self.seed, "cause": self.cause}


@dataclass
class ExperimentConfig:
    tasks: list = field(default_factory=lambda: [t.value for t in TASKS])
    seeds: list = field(default_factory=lambda: [0])
    n_expert: int = 20
    n_human: int = 20
    n_play: int = 300
    n_calib: int = 50
    sweep_demos: list = field(default_factory=lambda: [20, 40, 60, 100])
    sigma_act: float = 0.0
    sigma_obs: float = 0.0
    alpha: float = 1.0
    lam_cls: float = 1.0
    lam_reg: float = 10.0
    lam_ridge: float = 1e-2
    lam_score: float = 1e-3
    k: int = 1
    m_max: int = 4
    eps_prog: float = 0.01
    scenarios: int = 15
    ood_fraction: float = 0.8
    shifted_scenarios: int = 0
    shift: float = 0.15
    theory: bool = True
    theory_n: int = 1000
    theory_n_mi: int = 2000
    theory_bins: int = 8
    output_dir: str = "results"

    def __post_init__(self):
        self.tasks = [Task(t).value for t in self.tasks]
        self.seeds = [int(s) for s in self.seeds]
        if not self.tasks or not self.seeds:
            raise ValueError("tasks and seeds must be nonempty")
        if not 0.0 <= self.ood_fraction <= 1.0:
            raise ValueError("ood_fraction must lie in [0, 1]")
        for name in ("n_expert", "n_human", "n_play", "n_calib", "scenarios", "k", "theory_n", "theory_n_mi"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.m_max < 0 or self.shifted_scenarios < 0:
            raise ValueError("m_max and shifted_scenarios must be nonnegative")
        if any(d < 1 for d in self.sweep_demos):
            raise ValueError("sweep demo counts must be at least 1")
        if self.theory_bins < 2:
            raise ValueError("theory_bins must be at least 2")
        Theta(self.sigma_act, self.sigma_obs)

    @property
    def env(self) -> Theta:
        return Theta(self.sigma_act, self.sigma_obs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def hash(self) -> str:
        # where results go does not change them
        d = self.to_dict()
        d.pop("output_dir")
        return config_hash(d)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path=None, overrides: Optional[dict] = None) -> "ExperimentConfig":
        """Defaults, then the YAML file, then ``overrides``."""
        d = {}
        if path is not None:
            d = yaml.safe_load(Path(path).read_text()) or {}
            if not isinstance(d, dict):
                raise ValueError(f"{path}: config must be a mapping")
        d.update(overrides or {})
        return cls.from_dict(d)

    def dump(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as YAML (so ``[1, 2]`` is a list)."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


# ---------------------------------------------------------------------------
# result rows


@dataclass
class BenchResult:
    task: str
    method: str
    demos: int
    seed: int
    outcomes: list
    steps: list
    theory: Optional[dict] = None
    wall_ms: float = 0.0
    config_hash: str = ""
    splits: list = field(default_factory=list)

    @property
    def scenarios(self) -> int:
        return len(self.outcomes)

    @property
    def successes(self) -> int:
        return sum(o == "success" for o in self.outcomes)

    @property
    def rate(self) -> float:
        return self.successes / self.scenarios if self.outcomes else float("nan")

    def row(self) -> dict:
        th = self.theory or {}
        return {
            "task": self.task,
            "method": self.method,
            "demos": self.demos,
            "seed": self.seed,
            "scenarios": self.scenarios,
            "successes": self.successes,
            "rate": self.rate,
            "mean_reduction_steps": float(np.mean(self.steps)) if self.steps else float("nan"),
            "tr_sigma0": th.get("tr_sigma0", float("nan")),
            "tr_sigma_a": th.get("tr_sigma_a", float("nan")),
            "gap0": th.get("gap0", float("nan")),
            "gap_a": th.get("gap_a", float("nan")),
            "bound": th.get("bound", float("nan")),
            "mi_sb": th.get("mi_sb", float("nan")),
            "mi_sa": th.get("mi_sa", float("nan")),
            "wall_ms": round(self.wall_ms, 3),
            "config_hash": self.config_hash,
        }

    def scenario_rows(self) -> list[dict]:
        return [
            {
                "task": self.task,
                "method": self.method,
                "demos": self.demos,
                "seed": self.seed,
                "scenario": i,
                "split": self.splits[i] if self.splits else "",
                "outcome": o,
                "success": int(o == "success"),
                "reduction_steps": s,
                "config_hash": self.config_hash,
            }
            for i, (o, s) in enumerate(zip(self.outcomes, self.steps))
        ]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows: list[dict], columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def theory_columns(report: TheoryReport) -> dict:
    return {
        "tr_sigma0": report.tr_sigma0,
        "tr_sigma_a": report.tr_sigma_a,
        "gap0": report.gap0.gap,
        "gap_a": report.gap_a.gap,
        "bound": report.gap_a.bound,
        "mi_sb": report.mi_learned.i_s0_sb,
        "mi_sa": report.mi_learned.i_s0_sa,
    }


def _no_reduction_columns(report: TheoryReport) -> dict:
    return {
        "tr_sigma0": report.tr_sigma0,
        "tr_sigma_a": report.tr_sigma0,
        "gap0": report.gap0.gap,
        "gap_a": report.gap0.gap,
        "bound": report.gap0.bound,
        "mi_sb": report.mi_learned.i_s0_sb,
        "mi_sa": report.mi_learned.i_s0_sb,
    }


# ---------------------------------------------------------------------------
# evaluation


def scenario_set(task, cfg: ExperimentConfig, seed: int) -> tuple[list, list]:
    """The fixed per-task test scenes and their split labels."""
    rng = stream(seed, task, "scenarios")
    n_ood = int(round(cfg.ood_fraction * cfg.scenarios))
    splits = [Split.OOD] * n_ood + [Split.IN_DIST] * (cfg.scenarios - n_ood)
    scenes = [sample_scenario(task, s, rng, cfg.env) for s in splits]
    return scenes, [s.value for s in splits]


def evaluate(method: str, tm: TaskModels, scenes, cfg: ExperimentConfig, seed: int, tag: str = "main"):
    """Run one method on every scene with its own stream; returns traces."""
    traces = []
    for i, scene in enumerate(scenes):
        rng = stream(seed, tm.task.value, tag, method, i)
        if method == "reset":
            traces.append(reset_rollout(tm.reset, scene, rng, cfg.m_max, cfg.eps_prog))
        elif method == "direct":
            traces.append(direct_rollout(tm.reset.base, scene, rng))
        elif method == "naive":
            traces.append(naive_rollout(tm.naive, tm.reset, scene, rng, cfg.m_max, cfg.eps_prog))
        else:
            raise ValueError(f"unknown method {method!r}")
    return traces


def _result(task, method, demos, seed, traces, cfg, t0, theory=None, splits=()):
    return BenchResult(
        task,
        method,
        demos,
        seed,
        [t.outcome.value for t in traces],
        [t.n_reductions for t in traces],
        theory,
        (time.perf_counter() - t0) * 1000.0,
        cfg.hash,
        list(splits),
    )


def _task_models(task, play, reduction, cfg: ExperimentConfig, seed: int, n_expert=None) -> TaskModels:
    try:
        return build_task_models(
            task,
            play,
            seed,
            n_expert=n_expert or cfg.n_expert,
            n_human=cfg.n_human,
            n_calib=cfg.n_calib,
            lam_ridge=cfg.lam_ridge,
            lam_score=cfg.lam_score,
            lam_cls=cfg.lam_cls,
            lam_reg=cfg.lam_reg,
            alpha=cfg.alpha,
            k=cfg.k,
            reduction=reduction,
            env_params=cfg.env,
        )
    except (CalibrationError, UnsolvableScene) as exc:
        raise BenchError(f"{task} seed {seed}: {exc}", task, seed, type(exc).__name__) from exc


def _seed_data(cfg: ExperimentConfig, seed: int):
    play = play_data(seed, cfg.n_play, cfg.env)
    try:
        reduction = fit_reduction(play, cfg.lam_cls, cfg.lam_reg, cfg.lam_ridge)
    except ValueError as exc:
        raise BenchError(f"seed {seed}: {exc}", "", seed, type(exc).__name__) from exc
    return play, reduction


def run_bench(cfg: ExperimentConfig, out_dir=None, on_result=None) -> list[BenchResult]:
    """All methods on every task and seed.

    ``on_result`` is called with the list of finished results after every
    task so callers can flush partial output.
    """
    results: list[BenchResult] = []
    for seed in cfg.seeds:
        play, reduction = _seed_data(cfg, seed)
        for task in cfg.tasks:
            tm = _task_models(task, play, reduction, cfg, seed)
            scenes, splits = scenario_set(task, cfg, seed)
            theory = naive_theory = None
            if cfg.theory:
                expert_scenes = [d.scene for d in tm.expert]
                kw = dict(n=cfg.theory_n, n_mi=cfg.theory_n_mi, bins=cfg.theory_bins, horizon=cfg.m_max, env_params=cfg.env)
                theory = run_theory(task, tm.reset, expert_scenes, rng=stream(seed, task, "theory"), **kw)
                naive_theory = run_theory(
                    task, tm.reset, expert_scenes, rng=stream(seed, task, "theory"), step=naive_step(tm.naive, tm.reset), **kw
                )
            cols = {
                "reset": theory and theory_columns(theory),
                "direct": theory and _no_reduction_columns(theory),
                "naive": naive_theory and theory_columns(naive_theory),
            }
            for method in METHODS:
                t0 = time.perf_counter()
                traces = evaluate(method, tm, scenes, cfg, seed)
                results.append(_result(task, method, cfg.n_expert, seed, traces, cfg, t0, cols[method], splits))
            if on_result is not None:
                on_result(results)
    return results


def run_shifted(cfg: ExperimentConfig, n: Optional[int] = None) -> list[BenchResult]:
    """ReSET against the naive ablation on training scenes displaced by ``cfg.shift``."""
    n = n or cfg.shifted_scenarios or cfg.scenarios
    results = []
    for seed in cfg.seeds:
        play, reduction = _seed_data(cfg, seed)
        for task in cfg.tasks:
            tm = _task_models(task, play, reduction, cfg, seed)
            scenes = shifted_scenes(task, [d.states[0] for d in tm.human], n, stream(seed, task, "shifted"), cfg.shift)
            for method in ("reset", "naive"):
                t0 = time.perf_counter()
                traces = evaluate(method, tm, scenes, cfg, seed, "shifted")
                results.append(_result(task, method, cfg.n_expert, seed, traces, cfg, t0, splits=["shifted"] * n))
    return results


def run_sweep(cfg: ExperimentConfig) -> list[BenchResult]:
    """Direct baseline over expert-demo counts against ReSET at ``cfg.n_expert`` demos."""
    results = []
    for seed in cfg.seeds:
        play, reduction = _seed_data(cfg, seed)
        for task in cfg.tasks:
            tm = _task_models(task, play, reduction, cfg, seed)
            scenes, splits = scenario_set(task, cfg, seed)
            t0 = time.perf_counter()
            traces = evaluate("reset", tm, scenes, cfg, seed)
            results.append(_result(task, "reset", cfg.n_expert, seed, traces, cfg, t0, splits=splits))
            for n in cfg.sweep_demos:
                t0 = time.perf_counter()
                expert = gen_expert(task, n, stream(seed, task, "expert", n), cfg.env)
                base = fit_base(expert, cfg.lam_ridge)
                swept = TaskModels(tm.task, dataclasses.replace(tm.reset, base=base), tm.naive, tm.human, expert)
                traces = evaluate("direct", swept, scenes, cfg, seed)
                results.append(_result(task, "direct", n, seed, traces, cfg, t0, splits=splits))
    return results


# ---------------------------------------------------------------------------
# reports


def write_results(results: list[BenchResult], out_dir, stem: str = "results") -> dict:
    out = Path(out_dir)
    paths = {
        "csv": write_csv(out / f"{stem}.csv", [r.row() for r in results], RESULT_COLUMNS),
        "scenarios": write_csv(
            out / f"{stem}_scenarios.csv", [row for r in results for row in r.scenario_rows()], SCENARIO_COLUMNS
        ),
    }
    return paths


def markdown_table(rows: list[dict], value: str = "rate") -> str:
    """Task-by-method table of ``value`` averaged over seeds."""
    tasks = list(dict.fromkeys(r["task"] for r in rows))
    methods = list(dict.fromkeys(_label(r) for r in rows))
    lines = ["| task | " + " | ".join(methods) + " |", "|---" * (len(methods) + 1) + "|"]
    for t in tasks:
        cells = []
        for m in methods:
            vals = [float(r[value]) for r in rows if r["task"] == t and _label(r) == m]
            cells.append(f"{np.mean(vals):.3f}" if vals else "")
        lines.append(f"| {t} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _label(row: dict) -> str:
    return f"{row['method']}@{row['demos']}"


SVG_COLORS = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"]


def bar_chart_svg(rows: list[dict], title: str, value: str = "rate") -> str:
    """Grouped bar chart of ``value`` by task and method, as SVG text."""
    tasks = list(dict.fromkeys(r["task"] for r in rows))
    methods = list(dict.fromkeys(_label(r) for r in rows))
    width, height, pad, top = 120 * len(tasks) + 160, 300, 50, 40
    plot_h = height - pad - top
    group_w = (width - pad - 150) / max(len(tasks), 1)
    bar_w = group_w * 0.8 / max(len(methods), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{top + plot_h}" x2="{width - 150}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{pad}" y1="{top}" x2="{pad}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for tick in (0.0, 0.5, 1.0):
        y = top + plot_h * (1 - tick)
        parts.append(f'<text x="{pad - 5}" y="{y + 4:.1f}" text-anchor="end">{tick:.1f}</text>')
    for i, t in enumerate(tasks):
        x0 = pad + i * group_w + group_w * 0.1
        for j, m in enumerate(methods):
            vals = [float(r[value]) for r in rows if r["task"] == t and _label(r) == m]
            if not vals:
                continue
            v = float(np.clip(np.mean(vals), 0.0, 1.0))
            h = plot_h * v
            parts.append(
                f'<rect x="{x0 + j * bar_w:.1f}" y="{top + plot_h - h:.1f}" width="{bar_w * 0.95:.1f}" '
                f'height="{h:.1f}" fill="{SVG_COLORS[j % len(SVG_COLORS)]}"/>'
            )
        parts.append(
            f'<text x="{x0 + group_w * 0.4:.1f}" y="{top + plot_h + 15}" text-anchor="middle">{t}</text>'
        )
    for j, m in enumerate(methods):
        y = top + 15 * j
        parts.append(f'<rect x="{width - 140}" y="{y}" width="10" height="10" fill="{SVG_COLORS[j % len(SVG_COLORS)]}"/>')
        parts.append(f'<text x="{width - 125}" y="{y + 9}">{m}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_report(csv_paths, out_dir, title: str = "Success rate") -> dict:
    """Markdown tables and SVG bar charts for one or more result CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sections, written = [], {}
    for p in csv_paths:
        p = Path(p)
        rows = read_csv(p)
        if not rows:
            continue
        sections.append(f"## {p.stem}\n\nsuccess rate (mean over seeds)\n\n{markdown_table(rows)}\n")
        if "mean_reduction_steps" in rows[0]:
            sections.append(f"mean reduction steps\n\n{markdown_table(rows, 'mean_reduction_steps')}\n")
        svg = out / f"{p.stem}.svg"
        svg.write_text(bar_chart_svg(rows, f"{title}: {p.stem}"))
        written[p.stem] = svg
    md = out / "report.md"
    md.write_text("# Benchmark report\n\n" + "\n".join(sections))
    written["markdown"] = md
    return written


def ood_rates(rows: list[dict], scenario_rows: list[dict]) -> dict:
    """Success rate on OOD scenes per ``(task, method, demos, seed)``."""
    out = {}
    for r in scenario_rows:
        if r["split"] != "ood":
            continue
        key = (r["task"], r["method"], int(r["demos"]), int(r["seed"]))
        out.setdefault(key, []).append(int(r["success"]))
    return {k: float(np.mean(v)) for k, v in out.items()}


def dump_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str))
    return path
