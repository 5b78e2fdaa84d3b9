"""Reading and writing scenes, datasets, models, sample sets and traces.

Everything except sample sets is JSON. Python writes floats with their
shortest round-tripping repr, so every array survives a save/load cycle bit
for bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .datagen import DemoVideo, ExpertDemo, PlayRecord, PointFlow
from .features import FEATURE_DIM
from .gap import SampleSet
from .learn import BaseModel, FlowEntry, FlowGenerator, NaiveModel, ReductionModel, ScoreModel
from .rollout import Outcome, ReductionStep, ReSETModels, RolloutTrace
from .sim import (
    ActionPrimitive,
    Circle,
    GoalSpec,
    ObjectClass,
    ObjectSpec,
    Observation,
    Pose2,
    PrimitiveClass,
    Rect,
    Task,
    Theta,
    WorldState,
    make_state,
)

MODEL_FORMAT = "resetbench-models"
MODEL_VERSION = 1
DATA_FORMAT = "resetbench-data"
DATA_VERSION = 1


class FormatError(ValueError):
    """A file does not match the expected format, version or dimensions."""


def config_hash(cfg: dict) -> str:
    """Short stable digest of a JSON-compatible configuration."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, separators=(",", ":")))
    return path


def _read_json(path):
    return json.loads(Path(path).read_text())


def _array(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarray(d) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


# ---------------------------------------------------------------------------
# scenes


def _shape_to(shape):
    if isinstance(shape, Circle):
        return ["circle", shape.radius]
    return ["rect", shape.half_w, shape.half_h]


def _shape_from(v):
    return Circle(v[1]) if v[0] == "circle" else Rect(v[1], v[2])


def scene_to_dict(state: WorldState) -> dict:
    g = state.goal
    return {
        "specs": [[s.id, int(s.cls), _shape_to(s.shape), s.graspable, s.movable, s.name] for s in state.specs],
        "poses": [[p.x, p.y, p.theta] for p in state.poses],
        "layer": list(state.layer),
        "lift": list(state.lift),
        "env": [state.env_params.sigma_act, state.env_params.sigma_obs, state.env_params.grasp_radius],
        "goal": {
            "task": g.task.value,
            "target_id": g.target_id,
            "r_succ": g.r_succ,
            "container_id": g.container_id,
            "theta_lo": g.theta_lo,
            "theta_hi": g.theta_hi,
            "serve": None if g.serve is None else list(g.serve),
            "instruction": g.instruction,
            "untouched": [list(u) for u in g.untouched],
        },
    }


def scene_from_dict(d: dict) -> WorldState:
    specs = tuple(
        ObjectSpec(i, ObjectClass(c), _shape_from(shape), bool(gr), bool(mv), name)
        for i, c, shape, gr, mv, name in d["specs"]
    )
    gd = d["goal"]
    goal = GoalSpec(
        Task(gd["task"]),
        gd["target_id"],
        gd["r_succ"],
        gd["container_id"],
        gd["theta_lo"],
        gd["theta_hi"],
        None if gd["serve"] is None else tuple(gd["serve"]),
        gd["instruction"],
        tuple((int(i), x, y) for i, x, y in gd["untouched"]),
    )
    poses = tuple(Pose2(*p) for p in d["poses"])
    state = make_state(specs, poses, goal, Theta(*d["env"]), tuple(d["layer"]))
    return state.replace(lift=tuple(d["lift"]))


def save_scene(path, state: WorldState) -> Path:
    return _write_json(path, scene_to_dict(state))


def load_scene(path) -> WorldState:
    return scene_from_dict(_read_json(path))


def _frames_to(states) -> dict:
    """First state in full, later ones as poses/layer/lift only."""
    return {
        "first": scene_to_dict(states[0]),
        "frames": [[[[p.x, p.y, p.theta] for p in s.poses], list(s.layer), list(s.lift)] for s in states[1:]],
    }


def _frames_from(d) -> list:
    first = scene_from_dict(d["first"])
    out = [first]
    for poses, layer, lift in d["frames"]:
        out.append(first.with_poses([Pose2(*p) for p in poses], layer, lift))
    return out


# ---------------------------------------------------------------------------
# observations, flows, primitives


def _obs_to(obs: Observation) -> dict:
    return {
        "points": _array(obs.points),
        "classes": [int(c) for c in obs.classes],
        "instruction": obs.instruction,
        "feature": _array(obs.feature),
    }


def _obs_from(d) -> Observation:
    return Observation(_unarray(d["points"]), np.array(d["classes"], dtype=int), d["instruction"], _unarray(d["feature"]))


def _flow_to(flow):
    if flow is None:
        return None
    return {"data": _array(flow.data), "ids": list(flow.object_ids), "classes": list(flow.object_classes)}


def _flow_from(d):
    if d is None:
        return None
    return PointFlow(_unarray(d["data"]), tuple(d["ids"]), tuple(d["classes"]))


def _prim_to(a: ActionPrimitive):
    return [int(a.cls), list(a.params)]


def _prim_from(v) -> ActionPrimitive:
    return ActionPrimitive(PrimitiveClass(v[0]), tuple(v[1]))


# ---------------------------------------------------------------------------
# datasets


def _demo_to(demo: DemoVideo) -> dict:
    return {
        "task": demo.task.value,
        "states": _frames_to(demo.states),
        "flow": _flow_to(demo.flow),
        "labels": list(map(float, demo.score_labels)),
        "segments": [list(s) for s in demo.segments],
        "actions": [_prim_to(a) for a in demo.actions],
    }


def _demo_from(d) -> DemoVideo:
    return DemoVideo(
        _frames_from(d["states"]),
        _flow_from(d["flow"]),
        np.array(d["labels"]),
        Task(d["task"]),
        [tuple(s) for s in d["segments"]],
        [_prim_from(a) for a in d["actions"]],
    )


def _play_to(r: PlayRecord) -> dict:
    return {
        "obs": _obs_to(r.pre_observation),
        "flow": _flow_to(r.flow),
        "primitive": _prim_to(r.primitive),
        "task": r.task.value,
        "state": scene_to_dict(r.pre_state),
    }


def _play_from(d) -> PlayRecord:
    return PlayRecord(_obs_from(d["obs"]), _flow_from(d["flow"]), _prim_from(d["primitive"]), Task(d["task"]), scene_from_dict(d["state"]))


def _expert_to(e: ExpertDemo) -> dict:
    return {
        "pairs": [[_obs_to(o), _prim_to(a)] for o, a in e.pairs],
        "scene": scene_to_dict(e.scene),
        "final": scene_to_dict(e.final_state),
    }


def _expert_from(d) -> ExpertDemo:
    return ExpertDemo(
        [(_obs_from(o), _prim_from(a)) for o, a in d["pairs"]], scene_from_dict(d["scene"]), scene_from_dict(d["final"])
    )


def save_dataset(path, human=(), expert=(), play=(), cfg_hash: str = "") -> Path:
    return _write_json(
        path,
        {
            "format": DATA_FORMAT,
            "version": DATA_VERSION,
            "config_hash": cfg_hash,
            "human": [_demo_to(d) for d in human],
            "expert": [_expert_to(e) for e in expert],
            "play": [_play_to(r) for r in play],
        },
    )


def load_dataset(path) -> dict:
    d = _read_json(path)
    if d.get("format") != DATA_FORMAT or d.get("version") != DATA_VERSION:
        raise FormatError(f"{path}: not a version {DATA_VERSION} dataset")
    return {
        "config_hash": d["config_hash"],
        "human": [_demo_from(x) for x in d["human"]],
        "expert": [_expert_from(x) for x in d["expert"]],
        "play": [_play_from(x) for x in d["play"]],
    }


# ---------------------------------------------------------------------------
# models


def _models_to(m: ReSETModels, naive: NaiveModel = None) -> dict:
    red = m.reduction
    out = {
        "threshold": m.threshold,
        "score": {"weights": _array(m.score.weights), "lam": m.score.lam},
        "flow": {
            "k": m.flow.k,
            "entries": [
                [_array(e.feature), _flow_to(e.flow), _array(e.start_centroid), _array(e.anchor_centroid), e.moved_class]
                for e in m.flow.entries
            ],
        },
        "reduction": {
            "mean": _array(red.mean),
            "scale": _array(red.scale),
            "cls": _array(red.cls_weights),
            "reg": _array(red.reg_weights),
            "lam": [red.lam_cls, red.lam_reg, red.lam_ridge],
            "history": _array(red.loss_history),
            "losses": [red.cls_loss, red.reg_loss],
        },
        "base": {"weights": _array(m.base.weights), "task": m.base.task, "lam": m.base.lam, "kind": int(m.base.kind)},
    }
    if naive is not None:
        out["naive"] = {"features": _array(naive.features), "actions": [_prim_to(a) for a in naive.actions]}
    return out


def _models_from(d) -> tuple[ReSETModels, NaiveModel]:
    sw = _unarray(d["score"]["weights"])
    score = ScoreModel(sw, d["score"]["lam"], float(np.linalg.norm(sw)))
    entries = [
        FlowEntry(_unarray(f), _flow_from(fl), _unarray(s), _unarray(a), int(c)) for f, fl, s, a, c in d["flow"]["entries"]
    ]
    r = d["reduction"]
    red = ReductionModel(
        _unarray(r["mean"]),
        _unarray(r["scale"]),
        _unarray(r["cls"]),
        _unarray(r["reg"]),
        *r["lam"],
        _unarray(r["history"]),
        *r["losses"],
    )
    bw = _unarray(d["base"]["weights"])
    base = BaseModel(bw, d["base"]["task"], d["base"]["lam"], float(np.linalg.norm(bw)), PrimitiveClass(d["base"]["kind"]))
    naive = None
    if "naive" in d:
        naive = NaiveModel(_unarray(d["naive"]["features"]), [_prim_from(a) for a in d["naive"]["actions"]])
    return ReSETModels(score, d["threshold"], FlowGenerator(entries, d["flow"]["k"]), red, base), naive


def save_models(path, models: dict, cfg_hash: str = "") -> Path:
    """Save ``{task: (ReSETModels, NaiveModel or None)}`` under a versioned header."""
    return _write_json(
        path,
        {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "feature_dim": FEATURE_DIM,
            "config_hash": cfg_hash,
            "tasks": {Task(t).value: _models_to(*pair) for t, pair in models.items()},
        },
    )


def load_models(path) -> tuple[dict, str]:
    d = _read_json(path)
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: not a version {MODEL_VERSION} model file")
    if d.get("feature_dim") != FEATURE_DIM:
        raise FormatError(f"{path}: feature dimension {d.get('feature_dim')} != {FEATURE_DIM}")
    return {Task(t): _models_from(v) for t, v in d["tasks"].items()}, d["config_hash"]


# ---------------------------------------------------------------------------
# sample sets and traces


def save_samples(path, samples: SampleSet) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"n": samples.n, "d": samples.d, **samples.meta})
    np.savetxt(path, samples.vectors, delimiter=",", fmt="%.17g", header=header, comments="# ")
    return path


def load_samples(path) -> SampleSet:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise FormatError(f"{path}: missing sample-set header")
    meta = json.loads(first[2:])
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape != (meta["n"], meta["d"]):
        raise FormatError(f"{path}: header says {meta['n']}x{meta['d']}, found {rows.shape}")
    return SampleSet(rows, meta["task"], meta["split"], meta["policy"], meta["horizon"])


def trace_to_dict(trace: RolloutTrace) -> dict:
    return {
        "outcome": trace.outcome.value,
        "initial_score": trace.initial_score,
        "reduction_steps": [
            {
                "obs": _obs_to(s.observation),
                "flow": _flow_to(s.flow),
                "action": _prim_to(s.action),
                "score_before": s.score_before,
                "score_after": s.score_after,
            }
            for s in trace.reduction_steps
        ],
        "base_steps": [[_obs_to(o), _prim_to(a)] for o, a in trace.base_steps],
        "initial": scene_to_dict(trace.initial_state),
        "handoff": None if trace.handoff_state is None else scene_to_dict(trace.handoff_state),
        "final": scene_to_dict(trace.final_state),
    }


def trace_from_dict(d) -> RolloutTrace:
    steps = [
        ReductionStep(_obs_from(s["obs"]), _flow_from(s["flow"]), _prim_from(s["action"]), s["score_before"], s["score_after"])
        for s in d["reduction_steps"]
    ]
    return RolloutTrace(
        steps,
        [(_obs_from(o), _prim_from(a)) for o, a in d["base_steps"]],
        Outcome(d["outcome"]),
        scene_from_dict(d["final"]),
        scene_from_dict(d["initial"]),
        None if d["handoff"] is None else scene_from_dict(d["handoff"]),
        d["initial_score"],
    )


def save_traces(path, traces, extra=None) -> Path:
    """One JSON record per line; ``extra[i]`` is merged into record ``i``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for i, tr in enumerate(traces):
            rec = trace_to_dict(tr)
            if extra is not None:
                rec.update(extra[i])
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    return path


def load_traces(path) -> list[RolloutTrace]:
    with open(path) as fh:
        return [trace_from_dict(json.loads(line)) for line in fh if line.strip()]
