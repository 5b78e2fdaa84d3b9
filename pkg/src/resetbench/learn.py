"""Learned components: scene scorer, flow generator, reduction policy and base policy.

Everything is built from three small function classes: ridge least squares,
multinomial logistic regression trained by full-batch gradient descent, and
nearest-neighbour retrieval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datagen import DemoVideo, ExpertDemo, PlayRecord, PointFlow
from .features import featurize
from .geometry import procrustes_angle
from .sim import ActionPrimitive, Observation, PrimitiveClass, observe

__all__ = [
    "featurize",
    "ridge_fit",
    "ScoreModel",
    "fit_score",
    "score",
    "CalibrationError",
    "calibrate_threshold",
    "FlowGenerator",
    "fit_flow",
    "predict_flow",
    "flow_descriptor",
    "ReductionModel",
    "fit_reduction",
    "predict_primitive",
    "BaseModel",
    "fit_base",
    "predict_base",
    "NaiveModel",
    "fit_naive",
    "predict_naive",
]

N_PRIMITIVES = len(PrimitiveClass)
DESCRIPTOR_DIM = 8


def ridge_fit(X, Y, lam: float, penalize_last: bool = True) -> np.ndarray:
    """Solve ``min ||X W - Y||^2 + lam ||W||^2``.

    With ``penalize_last=False`` the last column of ``X`` is treated as an
    unpenalised intercept.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    penalty = np.full(X.shape[1], float(lam))
    if not penalize_last:
        penalty[-1] = 0.0
    A = X.T @ X + np.diag(penalty)
    return np.linalg.lstsq(A, X.T @ Y, rcond=None)[0]


# ---------------------------------------------------------------------------
# scene score


@dataclass(frozen=True, eq=False)
class ScoreModel:
    weights: np.ndarray
    lam: float
    weight_norm: float


def fit_score(demos: Sequence[DemoVideo], lam: float = 1e-3, rng=None) -> ScoreModel:
    """Regress every frame's parabolic label on the frame's features."""
    if not demos:
        raise ValueError("need at least one demo")
    X, y = [], []
    for demo in demos:
        for state, label in zip(demo.states, demo.score_labels):
            X.append(observe(state, rng).feature)
            y.append(label)
    w = ridge_fit(np.array(X), np.array(y), lam)
    return ScoreModel(w, lam, float(np.linalg.norm(w)))


def score(model: ScoreModel, obs: Observation) -> float:
    return float(model.weights @ obs.feature)


class CalibrationError(RuntimeError):
    """Anchor and non-anchor scores overlap too much to place a threshold."""


def calibrate_threshold(model: ScoreModel, anchor_obs, non_anchor_obs) -> float:
    """Midpoint between the 90th percentile of anchor scores and the 10th of the rest."""
    if not len(anchor_obs) or not len(non_anchor_obs):
        raise ValueError("both observation sets must be nonempty")
    hi = np.percentile([score(model, o) for o in anchor_obs], 90)
    lo = np.percentile([score(model, o) for o in non_anchor_obs], 10)
    if hi >= lo:
        raise CalibrationError(
            f"anchor 90th percentile {hi:.4f} is not below non-anchor 10th percentile {lo:.4f}"
        )
    return float(0.5 * (hi + lo))


# ---------------------------------------------------------------------------
# flow generation


@dataclass(frozen=True, eq=False)
class FlowEntry:
    feature: np.ndarray
    flow: PointFlow
    start_centroid: np.ndarray
    anchor_centroid: np.ndarray
    moved_class: int


@dataclass(frozen=True, eq=False)
class FlowGenerator:
    entries: list
    k: int = 1
    features: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.features is None:
            feats = np.array([e.feature for e in self.entries]).reshape(len(self.entries), -1)
            object.__setattr__(self, "features", feats)


def _group_centroid(flow: PointFlow, frame: int, group: int = 0) -> np.ndarray:
    return flow.data[frame, 5 * group : 5 * group + 5].mean(axis=0)


def fit_flow(demos: Sequence[DemoVideo], k: int = 1, rng=None) -> FlowGenerator:
    """Memorise each demo's opening observation with its first-segment flow."""
    if not demos:
        raise ValueError("need at least one demo")
    entries = []
    for demo in demos:
        flow = demo.segment_flow(0)
        if flow is None:
            continue
        entries.append(
            FlowEntry(
                feature=observe(demo.states[0], rng).feature,
                flow=flow,
                start_centroid=_group_centroid(flow, 0),
                anchor_centroid=_group_centroid(flow, -1),
                moved_class=flow.object_classes[0],
            )
        )
    if not entries:
        raise ValueError("no demo contains any motion")
    return FlowGenerator(entries, k)


def predict_flow(gen: FlowGenerator, obs: Observation) -> PointFlow:
    """Retrieve the closest stored flow and move it onto the current object.

    The retrieved flow is translated so that its first-frame centroid sits on
    the observed centroid of the candidate object: the visible object of the
    stored flow's class nearest to where the stored flow started, or the
    nearest visible object of any class if that class is hidden.
    """
    if not gen.entries:
        raise ValueError("flow generator has an empty memory")
    dist = np.linalg.norm(gen.features - obs.feature, axis=1)
    nearest = np.argsort(dist, kind="stable")[: gen.k]
    entry = gen.entries[int(nearest[0])]
    if len(obs.points) == 0:
        return entry.flow
    centroids = obs.centroids()
    candidates = np.flatnonzero(obs.classes == entry.moved_class)
    if candidates.size == 0:
        candidates = np.arange(len(centroids))
    d = np.linalg.norm(centroids[candidates] - entry.start_centroid, axis=1)
    chosen = centroids[candidates[int(np.argmin(d))]]
    return entry.flow.translate(chosen - entry.start_centroid)


def flow_rotation(flow: PointFlow) -> float:
    """Procrustes rotation between the first and last frame of a flow."""
    if flow.points < 2:
        return 0.0
    return procrustes_angle(flow.data[0], flow.data[-1])


def flow_descriptor(flow: PointFlow) -> np.ndarray:
    """Fixed-length summary of a flow.

    ``[c0x, c0y, c1x, c1y, |c1 - c0|, cos(rot), sin(rot), mean path length]``
    where ``c0``/``c1`` are the first/last frame centroids and ``rot`` the
    Procrustes rotation between first and last frame.
    """
    c = flow.centroid()
    c0, c1 = c[0], c[-1]
    rot = flow_rotation(flow)
    steps = np.linalg.norm(np.diff(flow.data, axis=0), axis=-1)
    path = float(steps.sum(axis=0).mean()) if flow.points else 0.0
    return np.array([c0[0], c0[1], c1[0], c1[1], np.linalg.norm(c1 - c0), np.cos(rot), np.sin(rot), path])


# ---------------------------------------------------------------------------
# reduction policy


def _encode_params(action: ActionPrimitive) -> np.ndarray:
    p = np.array(action.params)
    if action.cls == PrimitiveClass.ROTATE:
        # angles are regressed through (cos, sin) and decoded with atan2
        return np.array([p[0], p[1], np.cos(p[2]), np.sin(p[2])])
    return p


def _decode_params(kind: PrimitiveClass, y: np.ndarray) -> np.ndarray:
    if kind == PrimitiveClass.ROTATE:
        return np.array([y[0], y[1], np.arctan2(y[3], y[2]), 0.0])
    return y


def reduction_input(flow: PointFlow, obs: Observation) -> np.ndarray:
    return np.concatenate([flow_descriptor(flow), obs.feature])


@dataclass(frozen=True, eq=False)
class ReductionModel:
    mean: np.ndarray
    scale: np.ndarray
    cls_weights: np.ndarray  # (3, D + 1)
    reg_weights: np.ndarray  # (3, D + 1, 4)
    lam_cls: float
    lam_reg: float
    lam_ridge: float
    loss_history: np.ndarray = field(repr=False)
    cls_loss: float = 0.0
    reg_loss: float = 0.0

    @property
    def total_loss(self) -> float:
        return self.lam_cls * self.cls_loss + self.lam_reg * self.reg_loss

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    def design(self, X: np.ndarray) -> np.ndarray:
        Z = (np.atleast_2d(X) - self.mean) / self.scale
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    def logits(self, flow: PointFlow, obs: Observation) -> np.ndarray:
        return (self.design(reduction_input(flow, obs)) @ self.cls_weights.T)[0]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(P: np.ndarray, labels: np.ndarray) -> float:
    return float(-np.mean(np.log(np.clip(P[np.arange(len(labels)), labels], 1e-300, None))))


def fit_reduction(
    play: Sequence[PlayRecord],
    lam_cls: float = 1.0,
    lam_reg: float = 10.0,
    lam_ridge: float = 1e-2,
    step: float = 0.1,
    iters: int = 2000,
) -> ReductionModel:
    """Fit the primitive classifier and per-class parameter regressors.

    The training objective is ``lam_cls * CE + lam_reg * MSE``. The
    classifier is multinomial logistic regression on standardised inputs,
    trained by full-batch gradient descent from zero weights. Each class's
    regressor is a closed-form ridge fit of its parameters (ridge penalty
    ``lam_ridge / lam_reg`` on the mean squared error).
    """
    X = np.array([reduction_input(r.flow, r.pre_observation) for r in play])
    labels = np.array([int(r.primitive.cls) for r in play])
    missing = set(range(N_PRIMITIVES)) - set(labels.tolist())
    if missing:
        raise ValueError(f"play data lacks primitive classes {sorted(missing)}")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    model = ReductionModel(
        mean, scale, np.zeros((N_PRIMITIVES, X.shape[1] + 1)), np.zeros((N_PRIMITIVES, X.shape[1] + 1, 4)),
        lam_cls, lam_reg, lam_ridge, np.zeros(0),
    )
    Z = model.design(X)
    n = len(labels)

    reg = np.zeros((N_PRIMITIVES, Z.shape[1], 4))
    sq_err = 0.0
    for c in range(N_PRIMITIVES):
        rows = labels == c
        Yc = np.array([_encode_params(r.primitive) for r, keep in zip(play, rows) if keep])
        alpha = lam_ridge / lam_reg if lam_reg > 0 else lam_ridge
        reg[c] = ridge_fit(Z[rows], Yc, rows.sum() * alpha, penalize_last=False)
        sq_err += float(np.sum((Z[rows] @ reg[c] - Yc) ** 2))
    reg_loss = sq_err / (n * 4)

    Y = np.eye(N_PRIMITIVES)[labels]
    W = np.zeros((N_PRIMITIVES, Z.shape[1]))
    history = np.empty(iters + 1)
    for it in range(iters):
        P = _softmax(Z @ W.T)
        history[it] = lam_cls * _cross_entropy(P, labels) + lam_reg * reg_loss
        W = W - step * lam_cls * ((P - Y).T @ Z) / n
    P = _softmax(Z @ W.T)
    cls_loss = _cross_entropy(P, labels)
    history[iters] = lam_cls * cls_loss + lam_reg * reg_loss
    return ReductionModel(mean, scale, W, reg, lam_cls, lam_reg, lam_ridge, history, cls_loss, reg_loss)


def predict_primitive(model: ReductionModel, flow: PointFlow, obs: Observation) -> ActionPrimitive:
    """Most likely primitive class, then that class's regressed parameters."""
    z = model.design(reduction_input(flow, obs))
    kind = PrimitiveClass(int(np.argmax((z @ model.cls_weights.T)[0])))
    params = _decode_params(kind, (z @ model.reg_weights[kind])[0])
    return ActionPrimitive.make(kind, params)


# ---------------------------------------------------------------------------
# base policy


@dataclass(frozen=True, eq=False)
class BaseModel:
    weights: np.ndarray  # (FEATURE_DIM, 4)
    task: str
    lam: float
    weight_norm: float
    kind: PrimitiveClass = PrimitiveClass.PICK_PLACE


def fit_base(demos: Sequence[ExpertDemo], lam: float = 1e-2) -> BaseModel:
    """Behaviour cloning by ridge regression from features to primitive parameters."""
    if not demos:
        raise ValueError("need at least one demo")
    X = np.array([obs.feature for d in demos for obs, _ in d.pairs])
    Y = np.array([a.params for d in demos for _, a in d.pairs])
    kinds = {a.cls for d in demos for _, a in d.pairs}
    if len(kinds) != 1:
        raise ValueError("expert demos mix primitive classes")
    W = ridge_fit(X, Y, lam)
    return BaseModel(W, demos[0].scene.task.value, lam, float(np.linalg.norm(W)), kinds.pop())


def predict_base(model: BaseModel, obs: Observation) -> ActionPrimitive:
    return ActionPrimitive.make(model.kind, obs.feature @ model.weights)


# ---------------------------------------------------------------------------
# naive ablation: observation straight to a play action


@dataclass(frozen=True, eq=False)
class NaiveModel:
    features: np.ndarray
    actions: list


def fit_naive(demos: Sequence[DemoVideo], play: Sequence[PlayRecord], rng=None) -> NaiveModel:
    """Pair each demo's opening observation with the play action whose flow is closest.

    Flow distance is the Euclidean norm of the difference of the two
    18-step flows; only flows with the same number of points compete.
    """
    feats, actions = [], []
    for demo in demos:
        flow = demo.segment_flow(0)
        if flow is None:
            continue
        best, best_d = None, np.inf
        for rec in play:
            if rec.flow.data.shape != flow.data.shape:
                continue
            d = float(np.linalg.norm(rec.flow.data - flow.data))
            if d < best_d:
                best, best_d = rec, d
        if best is None:
            continue
        feats.append(observe(demo.states[0], rng).feature)
        actions.append(best.primitive)
    if not actions:
        raise ValueError("no demo could be aligned with play data")
    return NaiveModel(np.array(feats), actions)


def predict_naive(model: NaiveModel, obs: Observation) -> ActionPrimitive:
    d = np.linalg.norm(model.features - obs.feature, axis=1)
    return model.actions[int(np.argmin(d))]
