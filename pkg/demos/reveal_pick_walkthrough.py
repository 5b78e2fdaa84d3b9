"""Walk one covered-target scene through the learned reduce-then-act loop.

Run with ``python3 demos/reveal_pick_walkthrough.py [seed]``.
"""

import sys

import numpy as np

from resetbench.learn import score
from resetbench.pipeline import build_task_models, play_data, stream
from resetbench.rollout import direct_rollout, naive_rollout, oracle_rollout, reset_rollout
from resetbench.sim import ObjectClass, Split, Task, observe, sample_scenario


def describe(state):
    names = {i: spec.name for i, spec in enumerate(state.specs)}
    stack = ", ".join(f"{names[top]} on {names[under]}" for under, top in sorted(state.covered_by.items()))
    return stack or "nothing stacked"


def main(seed=0):
    print("fitting models on 300 play records and 20 demos per source ...")
    tm = build_task_models(Task.REVEAL_PICK, play_data(seed), seed)
    print(f"anchor threshold {tm.reset.threshold:.3f}")

    scene = sample_scenario(Task.REVEAL_PICK, Split.OOD, np.random.default_rng(seed))
    print(f"\nstart: {describe(scene)}; score {score(tm.reset.score, observe(scene)):.3f}")

    trace = reset_rollout(tm.reset, scene, stream(seed, "demo"))
    for i, step in enumerate(trace.reduction_steps, 1):
        moved = ObjectClass(step.flow.object_classes[0]).name.lower() if step.flow is not None else "?"
        print(
            f"  reduction {i}: {step.action.cls.name.lower()} the {moved}, "
            f"score {step.score_before:.3f} -> {step.score_after:.3f}"
        )
    print(f"ReSET:  {trace.outcome.value} after {trace.n_reductions} reductions")

    print(f"direct: {direct_rollout(tm.reset.base, scene).outcome.value}")
    print(f"naive:  {naive_rollout(tm.naive, tm.reset, scene).outcome.value}")
    print(f"oracle: {oracle_rollout(scene).outcome.value}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
