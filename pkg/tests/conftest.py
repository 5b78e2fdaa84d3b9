import numpy as np
import pytest

from resetbench.learn import fit_reduction
from resetbench.pipeline import build_task_models, play_data


@pytest.fixture(scope="session")
def play():
    return play_data(0, 300)


@pytest.fixture(scope="session")
def reduction(play):
    return fit_reduction(play)


@pytest.fixture(scope="session")
def task_models(play, reduction):
    """Fitted models for every task at seed 0, built lazily."""
    cache = {}

    def get(task):
        if task not in cache:
            cache[task] = build_task_models(task, play, 0, reduction=reduction)
        return cache[task]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

