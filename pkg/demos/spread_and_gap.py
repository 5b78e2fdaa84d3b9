"""How reduction shrinks the start distribution and the base policy's gap.

Prints state spread, generalization gap and the binned information check
for each task at a modest sample size.
"""

from resetbench.pipeline import build_task_models, play_data, stream
from resetbench.sim import Task
from resetbench.theory import run_theory

play = play_data(0)
print(f"{'task':<14}{'tr S0':>9}{'tr Sa':>9}{'gap S0':>9}{'gap Sa':>9}{'bound':>9}  dpi")
for task in Task:
    tm = build_task_models(task, play, 0)
    rep = run_theory(task, tm.reset, [d.scene for d in tm.expert], n=500, n_mi=1000, rng=stream(0, task, "demo"))
    print(
        f"{task.value:<14}{rep.tr_sigma0:9.4f}{rep.tr_sigma_a:9.4f}"
        f"{rep.gap0.gap:9.4f}{rep.gap_a.gap:9.4f}{rep.gap_a.bound:9.4f}  {rep.dpi}"
    )
