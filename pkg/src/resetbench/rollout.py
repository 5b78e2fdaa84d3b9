"""Closed-loop execution: reduce the scene until the score drops below threshold, then run the base policy."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .datagen import MAX_SEGMENTS, PointFlow, animate, oracle_base_action, oracle_reduction_action, process_flow
from .learn import (
    BaseModel,
    FlowGenerator,
    NaiveModel,
    ReductionModel,
    ScoreModel,
    predict_base,
    predict_flow,
    predict_naive,
    predict_primitive,
    score,
)
from .sim import ActionPrimitive, Observation, Theta, WorldState, apply_primitive, is_success, needs_reduction, observe

M_MAX = 4
EPS_PROG = 0.01


class Outcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    BUDGET_EXCEEDED = "budget_exceeded"
    NO_PROGRESS = "no_progress"


@dataclass(frozen=True, eq=False)
class ReductionStep:
    observation: Observation
    flow: Optional[PointFlow]
    action: ActionPrimitive
    score_before: float
    score_after: float


@dataclass(frozen=True, eq=False)
class RolloutTrace:
    reduction_steps: list
    base_steps: list
    outcome: Outcome
    final_state: WorldState
    initial_state: WorldState
    handoff_state: Optional[WorldState] = None
    initial_score: float = float("nan")

    @property
    def n_reductions(self) -> int:
        return len(self.reduction_steps)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


@dataclass(frozen=True, eq=False)
class ReSETModels:
    score: ScoreModel
    threshold: float
    flow: FlowGenerator
    reduction: ReductionModel
    base: BaseModel


# (state, obs) -> (flow or None, primitive or None)
Proposer = Callable[[WorldState, Observation], tuple]
Scorer = Callable[[WorldState, Observation], float]
BaseActor = Callable[[WorldState, Observation], ActionPrimitive]


def _base_phase(state: WorldState, act: BaseActor, rng, n_steps: int = 1):
    steps = []
    for _ in range(n_steps):
        obs = observe(state, rng)
        action = act(state, obs)
        steps.append((obs, action))
        state, _ = apply_primitive(state, action, rng)
    return steps, state


def run_loop(
    scene: WorldState,
    scorer: Scorer,
    threshold: float,
    propose: Proposer,
    act: BaseActor,
    rng=None,
    budget: int = M_MAX,
    eps_prog: float = EPS_PROG,
) -> RolloutTrace:
    """Generic reduce-then-execute loop shared by every method."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    state = scene
    obs = observe(state, rng)
    current = scorer(state, obs)
    first = current
    steps = []
    while current >= threshold:
        if len(steps) >= budget:
            return RolloutTrace(steps, [], Outcome.BUDGET_EXCEEDED, state, scene, None, first)
        flow, action = propose(state, obs)
        if action is None:
            return RolloutTrace(steps, [], Outcome.NO_PROGRESS, state, scene, None, first)
        state, _ = apply_primitive(state, action, rng)
        obs_next = observe(state, rng)
        after = scorer(state, obs_next)
        steps.append(ReductionStep(obs, flow, action, current, after))
        if after >= threshold and current - after < eps_prog:
            return RolloutTrace(steps, [], Outcome.NO_PROGRESS, state, scene, None, first)
        obs, current = obs_next, after
    handoff = state
    base_steps, final = _base_phase(state, act, rng)
    outcome = Outcome.SUCCESS if is_success(final) else Outcome.FAILURE
    return RolloutTrace(steps, base_steps, outcome, final, scene, handoff, first)


def _learned_scorer(model: ScoreModel) -> Scorer:
    return lambda state, obs: score(model, obs)


def _learned_base(model: BaseModel) -> BaseActor:
    return lambda state, obs: predict_base(model, obs)


def reset_rollout(models: ReSETModels, scene: WorldState, rng=None, budget: int = M_MAX, eps_prog: float = EPS_PROG) -> RolloutTrace:
    def propose(state, obs):
        flow = predict_flow(models.flow, obs)
        return flow, predict_primitive(models.reduction, flow, obs)

    return run_loop(
        scene, _learned_scorer(models.score), models.threshold, propose, _learned_base(models.base), rng, budget, eps_prog
    )


def direct_rollout(base: BaseModel, scene: WorldState, rng=None) -> RolloutTrace:
    """Base policy only; the scene is never prepared."""
    return run_loop(scene, lambda s, o: -np.inf, 0.0, lambda s, o: (None, None), _learned_base(base), rng, 0)


def naive_rollout(
    naive: NaiveModel, models: ReSETModels, scene: WorldState, rng=None, budget: int = M_MAX, eps_prog: float = EPS_PROG
) -> RolloutTrace:
    """Same loop as ``reset_rollout`` but the primitive is read straight off the observation."""
    return run_loop(
        scene,
        _learned_scorer(models.score),
        models.threshold,
        lambda state, obs: (None, predict_naive(naive, obs)),
        _learned_base(models.base),
        rng,
        budget,
        eps_prog,
    )


# oracle substitutes, usable in place of any learned component


def _noiseless(state: WorldState) -> WorldState:
    return state.replace(env_params=Theta(grasp_radius=state.env_params.grasp_radius))


def oracle_score(state: WorldState, obs: Observation = None) -> float:
    """Number of scripted rearrangements still needed; drops by one per step."""
    state = _noiseless(state)
    remaining = 0
    while needs_reduction(state) and remaining < MAX_SEGMENTS:
        state, _ = apply_primitive(state, oracle_reduction_action(state))
        remaining += 1
    return float(remaining)


ORACLE_THRESHOLD = 0.5


def oracle_propose(state: WorldState, obs: Observation = None) -> tuple:
    """Scripted primitive plus the flow it produces when executed without noise."""
    action = oracle_reduction_action(state)
    if action is None:
        return None, None
    frames, ok = animate(_noiseless(state), action)
    return (process_flow(frames) if ok else None), action


def oracle_base(state: WorldState, obs: Observation = None) -> ActionPrimitive:
    return oracle_base_action(state)


def oracle_rollout(scene: WorldState, rng=None, budget: int = M_MAX) -> RolloutTrace:
    return run_loop(scene, oracle_score, ORACLE_THRESHOLD, oracle_propose, oracle_base, rng, budget)
