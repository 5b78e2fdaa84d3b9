"""Monte Carlo estimators for state spread, generalisation gaps and information flow."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .sim import WorldState, state_vector

EPS_MI = 0.05


@dataclass(frozen=True, eq=False)
class SampleSet:
    vectors: np.ndarray
    task: str = ""
    split: str = ""
    policy: str = ""
    horizon: int = 0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("a sample set needs at least one row")
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def meta(self) -> dict:
        return {"task": self.task, "split": self.split, "policy": self.policy, "horizon": self.horizon}


def rollout_samples(
    policy: Callable[[WorldState, object], WorldState],
    initial_sampler: Callable[[object], WorldState],
    t: int,
    n: int,
    rng,
    vectorize: Callable[[WorldState], np.ndarray] = state_vector,
    keep: Optional[list] = None,
    meta: Optional[dict] = None,
) -> SampleSet:
    """Draw ``n`` starts and push each through ``t`` applications of ``policy``.

    ``policy(state, rng)`` returns the next state. Row ``i`` only depends on
    the ``i``-th child stream of ``rng``, so calls sharing ``rng`` share their
    starts. Final states are appended to ``keep`` when it is given.
    """
    if n < 1 or t < 0:
        raise ValueError("need n >= 1 and t >= 0")
    streams = np.random.default_rng(rng).spawn(n)
    rows = []
    for stream in streams:
        state = initial_sampler(stream)
        for _ in range(t):
            state = policy(state, stream)
        rows.append(vectorize(state))
        if keep is not None:
            keep.append(state)
    return SampleSet(np.array(rows), horizon=t, **(meta or {}))


def cov_trace(samples) -> float:
    """Trace of the population covariance of the rows."""
    X = samples.vectors if isinstance(samples, SampleSet) else np.atleast_2d(np.asarray(samples, dtype=float))
    centred = X - X.mean(axis=0)
    return float(np.sum(centred**2) / X.shape[0])


def is_anchor(anchor_samples, initial_samples) -> bool:
    a = anchor_samples.vectors if isinstance(anchor_samples, SampleSet) else np.atleast_2d(anchor_samples)
    b = initial_samples.vectors if isinstance(initial_samples, SampleSet) else np.atleast_2d(initial_samples)
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample sets have different dimensions")
    return cov_trace(a) < cov_trace(b)


def _rows(samples) -> np.ndarray:
    return samples.vectors if isinstance(samples, SampleSet) else np.atleast_2d(np.asarray(samples, dtype=float))


def rademacher_linear(samples, B: float) -> float:
    """Empirical Rademacher complexity of ``{s -> <w, s> : ||w|| <= B}``."""
    if B <= 0:
        raise ValueError("B must be positive")
    X = _rows(samples)
    return float(B / X.shape[0] * np.sqrt(np.sum(X**2)))


def gap_bound(samples, B: float) -> float:
    return 2.0 * rademacher_linear(samples, B)


def variance_bound(samples, B: float) -> float:
    """The spread-based surrogate ``B sqrt(tr Sigma) / sqrt(n)``."""
    if B <= 0:
        raise ValueError("B must be positive")
    X = _rows(samples)
    return float(B * np.sqrt(cov_trace(X)) / np.sqrt(X.shape[0]))


def squared_error(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.sum((np.atleast_2d(pred) - np.atleast_2d(target)) ** 2, axis=1)


@dataclass(frozen=True)
class GapReport:
    expected_loss: float
    empirical_loss: float
    gap: float
    tr_sigma: float
    rademacher: float
    bound: float
    n: int
    B: float
    surrogate: float = float("nan")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def empirical_gap(
    predictor: Callable[[np.ndarray], np.ndarray],
    train_x,
    train_y,
    test_sampler: Callable[[int, object], tuple],
    n_test: int,
    rng,
    loss: Callable = squared_error,
    B: Optional[float] = None,
    bound_rows=None,
) -> GapReport:
    """Held-out minus training loss of a fitted predictor.

    ``predictor`` maps a batch of inputs to a batch of outputs.
    ``test_sampler(n, rng)`` returns fresh ``(x, y)`` batches from the
    distribution the predictor is evaluated on. Spread and Rademacher terms
    are computed over ``bound_rows`` (default: the training inputs), the
    latter only when ``B`` is given.
    """
    Ytr = _rows(train_y)
    Xte, Yte = test_sampler(n_test, rng)
    emp = float(np.mean(loss(predictor(train_x), Ytr)))
    exp = float(np.mean(loss(predictor(Xte), _rows(Yte))))
    rows = _rows(train_x if bound_rows is None else bound_rows)
    tr = cov_trace(rows)
    if B is None or B <= 0:
        r = bound = surrogate = float("nan")
    else:
        r = rademacher_linear(rows, B)
        bound = 2.0 * r
        surrogate = variance_bound(rows, B)
    return GapReport(exp, emp, exp - emp, tr, r, bound, len(Ytr), float(B or 0.0), surrogate)


# ---------------------------------------------------------------------------
# mutual information


def _symbols(X: np.ndarray, bins: int) -> np.ndarray:
    """Map each row to one joint symbol over per-dimension equal-width bins."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo, hi = X.min(axis=0), X.max(axis=0)
    width = np.where(hi > lo, hi - lo, 1.0)
    idx = np.floor((X - lo) / width * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    idx[:, hi <= lo] = 0
    _, sym = np.unique(idx, axis=0, return_inverse=True)
    return sym.reshape(-1)


def _column(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _entropy(*symbols: np.ndarray) -> float:
    joint = np.stack(symbols, axis=1)
    _, counts = np.unique(joint, axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def mi_binned(x, y, cond=None, bins: int = 8) -> float:
    """Plug-in (conditional) mutual information in bits.

    Each variable is discretised on its own equal-width grid with ``bins``
    cells per dimension; a multi-dimensional variable becomes one symbol per
    occupied cell.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    x, y = _column(x), _column(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have the same number of samples")
    sx, sy = _symbols(x, bins), _symbols(y, bins)
    if cond is None:
        value = _entropy(sx) + _entropy(sy) - _entropy(sx, sy)
    else:
        z = _column(cond)
        if z.shape[0] != x.shape[0]:
            raise ValueError("conditioning samples must match")
        sz = _symbols(z, bins)
        value = _entropy(sx, sz) + _entropy(sy, sz) - _entropy(sx, sy, sz) - _entropy(sz)
    # exact ties can leave round-off of either sign
    return 0.0 if abs(value) < 1e-12 else float(value)


@dataclass(frozen=True)
class MIReport:
    i_s0_sb: float
    i_s0_sa: float
    bins: int
    n: int
    eps: float = EPS_MI

    @property
    def holds(self) -> bool:
        return self.i_s0_sa <= self.i_s0_sb + self.eps

    def as_dict(self) -> dict:
        return {**self.__dict__, "holds": self.holds}


def mi_report(s0, sb, sa, goal, bins: int = 8, eps: float = EPS_MI) -> MIReport:
    s0, sb, sa, goal = (_rows(v) if isinstance(v, SampleSet) else _column(v) for v in (s0, sb, sa, goal))
    return MIReport(mi_binned(s0, sb, goal, bins), mi_binned(s0, sa, goal, bins), bins, s0.shape[0], eps)


def dpi_check(s0, sb, sa, goal, bins: int = 8, eps: float = EPS_MI) -> bool:
    """Whether conditioning-aware MI does not grow from ``S_b`` to ``S_a`` beyond slack."""
    return mi_report(s0, sb, sa, goal, bins, eps).holds
