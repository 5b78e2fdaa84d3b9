"""Shared model-building steps used by the benchmark, the theory checks and the CLI."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .datagen import MAX_SEGMENTS, gen_expert, gen_human, gen_play, oracle_reduction_action
from .learn import (
    NaiveModel,
    ReductionModel,
    calibrate_threshold,
    fit_base,
    fit_flow,
    fit_naive,
    fit_reduction,
    fit_score,
)
from .rollout import ReSETModels
from .sim import (
    Split,
    Task,
    apply_primitive,
    is_valid_ood,
    needs_reduction,
    observe,
    sample_scenario,
    shift_group,
    shift_objects,
)


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for a named cell of an experiment.

    The same ``(seed, keys)`` always gives the same stream, and distinct keys
    never share one.
    """
    words = [int(seed)] + [zlib.crc32(str(k).encode()) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(words))


def calibration_sets(task, n: int, rng, env_params=None):
    """Held-out anchor and non-anchor observations for threshold calibration.

    Anchors are in-distribution starts plus scripted-reduced OOD starts;
    non-anchors are OOD starts and any partially reduced state that still
    needs work.
    """
    task = Task(task)
    anchors, others = [], []
    for _ in range(n):
        anchors.append(observe(sample_scenario(task, Split.IN_DIST, rng, env_params), rng))
    for _ in range(n):
        state = sample_scenario(task, Split.OOD, rng, env_params)
        others.append(observe(state, rng))
        for _ in range(MAX_SEGMENTS):
            action = oracle_reduction_action(state)
            if action is None:
                anchors.append(observe(state, rng))
                break
            state, _ = apply_primitive(state, action, rng)
            if needs_reduction(state):
                others.append(observe(state, rng))
    return anchors, others


@dataclass(frozen=True, eq=False)
class TaskModels:
    task: Task
    reset: ReSETModels
    naive: NaiveModel
    human: list
    expert: list


def build_task_models(
    task,
    play,
    seed: int,
    n_expert: int = 20,
    n_human: int = 20,
    n_calib: int = 50,
    lam_ridge: float = 1e-2,
    lam_score: float = 1e-3,
    lam_cls: float = 1.0,
    lam_reg: float = 10.0,
    alpha: float = 1.0,
    k: int = 1,
    reduction: ReductionModel = None,
    env_params=None,
) -> TaskModels:
    """Generate one task's data and fit every component on it.

    ``reduction`` may be passed in to share one play-trained model across
    tasks; otherwise it is fit on ``play`` here.
    """
    task = Task(task)
    expert = gen_expert(task, n_expert, stream(seed, task.value, "expert", n_expert), env_params)
    human = gen_human(task, n_human, stream(seed, task.value, "human"), env_params, alpha)
    return fit_task_models(
        task, human, expert, play, seed, n_calib, lam_ridge, lam_score, lam_cls, lam_reg, k, reduction, env_params
    )


def fit_task_models(
    task,
    human,
    expert,
    play,
    seed: int,
    n_calib: int = 50,
    lam_ridge: float = 1e-2,
    lam_score: float = 1e-3,
    lam_cls: float = 1.0,
    lam_reg: float = 10.0,
    k: int = 1,
    reduction: ReductionModel = None,
    env_params=None,
) -> TaskModels:
    """Fit every component of one task on already generated data."""
    task = Task(task)
    if reduction is None:
        reduction = fit_reduction(play, lam_cls, lam_reg, lam_ridge)
    fit_rng = stream(seed, task.value, "fit")
    score_model = fit_score(human, lam_score, fit_rng)
    anchors, others = calibration_sets(task, n_calib, stream(seed, task.value, "calibration"), env_params)
    threshold = calibrate_threshold(score_model, anchors, others)
    models = ReSETModels(
        score_model, threshold, fit_flow(human, k, fit_rng), reduction, fit_base(expert, lam_ridge)
    )
    return TaskModels(task, models, fit_naive(human, play, fit_rng), human, expert)


def play_data(seed: int, n_play: int = 300, env_params=None):
    return gen_play(n_play, stream(seed, "play"), env_params=env_params)


def shifted_scenes(task, training_scenes, n: int, rng, shift: float = 0.15, max_tries: int = 10000):
    """Training scenes with the task's key object group displaced by ``shift``.

    Directions are uniform; a displaced scene is kept only if it is still a
    well-formed OOD start of the task.
    """
    task = Task(task)
    group = shift_group(task)
    out = []
    for _ in range(max_tries):
        if len(out) == n:
            return out
        scene = training_scenes[int(rng.integers(len(training_scenes)))]
        angle = rng.uniform(-np.pi, np.pi)
        moved = shift_objects(scene, group, (shift * np.cos(angle), shift * np.sin(angle)))
        if moved is not None and is_valid_ood(moved):
            out.append(moved)
    raise RuntimeError(f"{task.value}: could only build {len(out)} of {n} shifted scenes")
