"""Monte Carlo experiments relating state spread to generalisation and information flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import MAX_SEGMENTS, oracle_base_action, oracle_reduction_action
from .gap import GapReport, MIReport, cov_trace, empirical_gap, is_anchor, mi_report, rollout_samples
from .learn import BaseModel, NaiveModel, predict_base, predict_flow, predict_naive, predict_primitive, ridge_fit, score
from .rollout import M_MAX, ReSETModels
from .sim import (
    Split,
    Task,
    Theta,
    WorldState,
    apply_primitive,
    goal_vector,
    observe,
    sample_scenario,
    state_vector,
)


# one-step transition operators; each is a fixed point once the scene is ready


def oracle_step(state: WorldState, rng=None) -> WorldState:
    action = oracle_reduction_action(state)
    if action is None:
        return state
    return apply_primitive(state, action, rng)[0]


def learned_step(models: ReSETModels):
    def step(state: WorldState, rng=None) -> WorldState:
        obs = observe(state, rng)
        if score(models.score, obs) < models.threshold:
            return state
        action = predict_primitive(models.reduction, predict_flow(models.flow, obs), obs)
        return apply_primitive(state, action, rng)[0]

    return step


def naive_step(naive: NaiveModel, models: ReSETModels):
    def step(state: WorldState, rng=None) -> WorldState:
        obs = observe(state, rng)
        if score(models.score, obs) < models.threshold:
            return state
        return apply_primitive(state, predict_naive(naive, obs), rng)[0]

    return step


def identity_step(state: WorldState, rng=None) -> WorldState:
    return state


def ood_sampler(task, env_params=None):
    return lambda rng: sample_scenario(task, Split.OOD, rng, env_params)


# ---------------------------------------------------------------------------
# base-policy generalisation gap


def base_outcome(base: BaseModel, state: WorldState, rng=None) -> np.ndarray:
    """Goal-object block after the base policy runs once from ``state``."""
    action = predict_base(base, observe(state, rng))
    return goal_vector(apply_primitive(state, action, rng)[0])


def desired_outcome(state: WorldState) -> np.ndarray:
    """Goal-object block the scripted expert reaches from ``state``, without noise."""
    prepared = state.replace(env_params=Theta(grasp_radius=state.env_params.grasp_radius))
    for _ in range(MAX_SEGMENTS):
        action = oracle_reduction_action(prepared)
        if action is None:
            break
        prepared = apply_primitive(prepared, action)[0]
    return goal_vector(apply_primitive(prepared, oracle_base_action(prepared))[0])


def policy_gap(base: BaseModel, train_scenes, test_scenes, rng=None) -> GapReport:
    """Gap of the base policy, trained on ``train_scenes``, evaluated on ``test_scenes``.

    The loss is the squared distance between the goal-object block the base
    policy reaches and the one the scripted expert reaches.
    """

    def predictor(states):
        return np.array([base_outcome(base, s, rng) for s in states])

    def sampler(n, _rng):
        picked = list(test_scenes)[:n]
        return picked, np.array([desired_outcome(s) for s in picked])

    train_y = np.array([desired_outcome(s) for s in train_scenes])
    feats = np.array([observe(s, rng).feature for s in train_scenes])
    return empirical_gap(
        predictor, train_scenes, train_y, sampler, len(test_scenes), rng, B=base.weight_norm, bound_rows=feats
    )


# ---------------------------------------------------------------------------
# designed linear experiment for the Rademacher bound


def linear_gap_trial(task, n_train: int, n_test: int, rng, lam: float = 1e-2) -> GapReport:
    """Ridge from augmented start state to expert goal block, train and test in-distribution."""
    task = Task(task)

    def draw(n, g):
        scenes = [sample_scenario(task, Split.IN_DIST, g) for _ in range(n)]
        X = np.array([np.append(state_vector(s), 1.0) for s in scenes])
        Y = np.array([desired_outcome(s) for s in scenes])
        return X, Y

    Xtr, Ytr = draw(n_train, rng)
    W = ridge_fit(Xtr, Ytr, lam)
    B = float(np.linalg.norm(W))
    return empirical_gap(lambda X: X @ W, Xtr, Ytr, draw, n_test, rng, B=B)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoryReport:
    task: str
    n: int
    tr_sigma0: float
    tr_sigma_a: float
    tr_sigma_oracle: float
    anchor: bool
    gap0: GapReport
    gap_a: GapReport
    mi_learned: MIReport
    mi_oracle: MIReport

    @property
    def dpi(self) -> bool:
        return self.mi_learned.holds and self.mi_oracle.holds


def reduction_samples(task, step, n: int, rng, horizon: int = M_MAX, env_params=None):
    """Raw OOD starts with their scripted- and ``step``-reduced counterparts.

    The three sample sets share their starts row by row. Returns
    ``(sample_set, states)`` pairs.
    """
    task = Task(task)
    seed = int(np.random.default_rng(rng).integers(2**63))
    sampler = ood_sampler(task, env_params)
    out = []
    for tag, op, t in (("none", identity_step, 0), ("oracle", oracle_step, horizon), ("learned", step, horizon)):
        states = []
        samples = rollout_samples(op, sampler, t, n, seed, keep=states, meta=dict(task=task.value, split="ood", policy=tag))
        out.append((samples, states))
    return tuple(out)


def run_theory(
    task,
    models: ReSETModels,
    expert_scenes,
    n: int = 1000,
    n_mi: int = 2000,
    bins: int = 8,
    rng=None,
    step=None,
    horizon: int = M_MAX,
    env_params=None,
) -> TheoryReport:
    """Spread, base-policy gap and information checks for one task.

    ``step`` is the one-step reduction operator under study and defaults to
    the learned ReSET reduction.
    """
    task = Task(task)
    rng = np.random.default_rng(rng)
    step = learned_step(models) if step is None else step
    (s0, states0), (so, _), (sa, reduced) = reduction_samples(task, step, max(n, n_mi), rng, horizon, env_params)
    gap0 = policy_gap(models.base, expert_scenes, states0[:n], rng)
    gap_a = policy_gap(models.base, expert_scenes, reduced[:n], rng)
    goal = np.array([desired_outcome(s) for s in states0[:n_mi]])
    x0 = s0.vectors[:n_mi]
    # the no-op intermediate: the direct policy performs no reductions
    sb = x0
    return TheoryReport(
        task.value,
        n,
        cov_trace(s0.vectors[:n]),
        cov_trace(sa.vectors[:n]),
        cov_trace(so.vectors[:n]),
        is_anchor(sa.vectors[:n], s0.vectors[:n]),
        gap0,
        gap_a,
        mi_report(x0, sb, sa.vectors[:n_mi], goal, bins),
        mi_report(x0, sb, so.vectors[:n_mi], goal, bins),
    )
