import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resetbench.datagen import FLOW_HORIZON, PointFlow, gen_expert, gen_human
from resetbench.geometry import keypoints, rotation
from resetbench.learn import (
    CalibrationError,
    FlowEntry,
    FlowGenerator,
    ScoreModel,
    calibrate_threshold,
    fit_base,
    fit_flow,
    fit_reduction,
    fit_score,
    flow_descriptor,
    predict_base,
    predict_flow,
    predict_primitive,
    ridge_fit,
    score,
)
from resetbench.pipeline import calibration_sets, stream
from resetbench.rollout import direct_rollout
from resetbench.sim import Circle, ObjectClass, Observation, PrimitiveClass, Split, Task, observe, sample_scenario


def test_ridge_constant_labels_exact():
    X = np.column_stack([np.random.default_rng(0).normal(size=(30, 3)), np.ones(30)])
    w = ridge_fit(X, np.full(30, 0.4), 1.0, penalize_last=False)
    np.testing.assert_allclose(X @ w, 0.4, atol=1e-12)


def test_ridge_realizable():
    g = np.random.default_rng(1)
    X = g.normal(size=(50, 6))
    y = X @ g.normal(size=6)
    w = ridge_fit(X, y, 1e-8)
    assert np.mean((X @ w - y) ** 2) <= 1e-8


def test_ridge_residual_monotone_in_lambda():
    g = np.random.default_rng(2)
    X, y = g.normal(size=(40, 8)), g.normal(size=40)
    res = [np.sum((X @ ridge_fit(X, y, lam) - y) ** 2) for lam in (10.0, 1.0, 0.1, 1e-3, 1e-6)]
    assert all(a >= b - 1e-12 for a, b in zip(res, res[1:]))


@pytest.fixture(scope="module")
def reveal(task_models):
    return task_models(Task.REVEAL_PICK)


def test_score_covered_frames_higher(reveal):
    covered, uncovered = [], []
    for demo in reveal.human:
        for state in demo.states:
            s = score(reveal.reset.score, observe(state))
            (covered if 0 in state.covered_by else uncovered).append(s)
    assert np.mean(covered) > np.mean(uncovered)
    assert reveal.reset.score.weight_norm == pytest.approx(np.linalg.norm(reveal.reset.score.weights))


def test_score_linear_labels_recovered():
    g = np.random.default_rng(3)
    demos = gen_human(Task.REVEAL_PICK, 3, g)
    w_true = g.normal(size=observe(demos[0].states[0]).feature.shape)
    relabelled = [
        dataclasses.replace(d, score_labels=np.array([w_true @ observe(s).feature for s in d.states])) for d in demos
    ]
    model = fit_score(relabelled, 1e-10)
    for d in relabelled:
        for s, y in zip(d.states, d.score_labels):
            assert score(model, observe(s)) == pytest.approx(y, abs=1e-6)


def test_score_separates_held_out(reveal):
    anchors, others = calibration_sets(Task.REVEAL_PICK, 100, stream(99, "held-out"))
    thr = reveal.reset.threshold
    assert np.mean([score(reveal.reset.score, o) < thr for o in anchors[:100]]) >= 0.9
    covered = [o for o in others if ObjectClass.TARGET not in o.classes][:100]
    assert len(covered) == 100
    assert np.mean([score(reveal.reset.score, o) >= thr for o in covered]) >= 0.9


class _Fixed:
    """Stand-in observation whose score is its feature's first entry."""

    def __init__(self, v):
        self.feature = np.array([v])


def test_calibration_separated_and_identical():
    model = ScoreModel(np.array([1.0]), 0.0, 1.0)
    g = np.random.default_rng(0)
    lo = [_Fixed(v) for v in 0.1 + 0.02 * g.normal(size=50)]
    hi = [_Fixed(v) for v in 0.9 + 0.02 * g.normal(size=50)]
    c = calibrate_threshold(model, lo, hi)
    assert max(o.feature[0] for o in lo) < c < min(o.feature[0] for o in hi)
    with pytest.raises(CalibrationError):
        calibrate_threshold(model, lo, lo)
    with pytest.raises(ValueError):
        calibrate_threshold(model, [], hi)


def test_flow_exact_match_retrieval(reveal):
    gen = reveal.reset.flow
    for entry, demo in zip(gen.entries, reveal.human):
        got = predict_flow(gen, observe(demo.states[0]))
        assert np.array_equal(got.data, entry.flow.data)


def _synthetic_obs(center):
    kp = keypoints(Circle(0.05), *center, 0.0)
    return Observation(kp[None], np.array([1]), None, np.zeros(3))


def test_flow_translation_retargeting():
    data = np.tile(keypoints(Circle(0.05), 0.3, 0.3, 0.0), (FLOW_HORIZON, 1, 1))
    data[:, :, 0] += np.linspace(0, 0.2, FLOW_HORIZON)[:, None]
    flow = PointFlow(data, (1,), (1,))
    entry = FlowEntry(np.zeros(3), flow, np.array([0.3, 0.3]), data[-1].mean(axis=0), 1)
    got = predict_flow(FlowGenerator([entry]), _synthetic_obs((0.4, 0.35)))
    np.testing.assert_allclose(got.data - flow.data, np.broadcast_to([0.1, 0.05], data.shape), atol=1e-12)


def test_flow_empty_memory_errors():
    with pytest.raises(ValueError):
        predict_flow(FlowGenerator([], features=np.zeros((0, 3))), _synthetic_obs((0.4, 0.35)))
    with pytest.raises(ValueError):
        fit_flow([])


def test_flow_moves_outermost_occluder(reveal):
    g = np.random.default_rng(5)
    hits, single_level = [], []
    for _ in range(100):
        scene = sample_scenario(Task.REVEAL_PICK, Split.OOD, g)
        # the occluder with nothing on top of it
        top = scene.covered_by[0]
        while top in scene.covered_by:
            top = scene.covered_by[top]
        flow = predict_flow(reveal.reset.flow, observe(scene))
        hits.append(flow.object_classes[0] == int(scene.specs[top].cls))
        if scene.covered_by.get(1) is None:
            single_level.append(flow.object_classes[0] == ObjectClass.OBSTRUCTOR)
    assert np.mean(hits) >= 0.9
    assert np.mean(single_level) >= 0.9


def _square_flow(theta, shift=(0.0, 0.0)):
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    frames = [pts @ rotation(theta * s).T + np.multiply(shift, s) for s in np.linspace(0, 1, FLOW_HORIZON)]
    return PointFlow(np.array(frames))


def test_descriptor_quarter_turn():
    d = flow_descriptor(_square_flow(np.pi / 2))
    assert abs(np.arctan2(d[6], d[5]) - np.pi / 2) < 1e-9


def test_descriptor_translation_and_identity():
    d = flow_descriptor(_square_flow(0.0, (0.3, -0.1)))
    assert abs(np.arctan2(d[6], d[5])) < 1e-9
    assert d[4] == pytest.approx(np.hypot(0.3, 0.1), abs=1e-12)
    d = flow_descriptor(_square_flow(0.0))
    assert d[4] == 0.0 and d[7] == 0.0
    single = PointFlow(np.zeros((FLOW_HORIZON, 1, 2)))
    assert flow_descriptor(single)[5:7].tolist() == [1.0, 0.0]


def test_lambda_cls_zero_keeps_init(play):
    model = fit_reduction(play, lam_cls=0.0, iters=50)
    assert np.all(model.cls_weights == 0.0)


def test_reduction_loss_monotone(reduction):
    h = reduction.loss_history
    assert len(h) == 2001
    assert np.all(np.diff(h) <= 1e-12)
    assert reduction.total_loss == pytest.approx(h[-1])


def test_missing_class_errors(play):
    no_rotate = [r for r in play if r.primitive.cls != PrimitiveClass.ROTATE]
    with pytest.raises(ValueError, match="lacks"):
        fit_reduction(no_rotate, iters=5)


def test_synthetic_rotation_classified(reduction):
    g = np.random.default_rng(11)
    tool = sample_scenario(Task.ROTATE_PLACE, Split.OOD, g).specs[0]
    hits = 0
    for _ in range(100):
        scene = sample_scenario(Task.ROTATE_PLACE, Split.OOD, g)
        pose = scene.poses[0]
        turn = np.pi / 2 * g.choice([-1.0, 1.0])
        shift = g.uniform(-0.005, 0.005, 2)
        frames = [
            keypoints(tool.shape, pose.x + s * shift[0], pose.y + s * shift[1], pose.theta + s * turn)
            for s in np.linspace(0, 1, FLOW_HORIZON)
        ]
        flow = PointFlow(np.array(frames), (0,), (int(tool.cls),))
        hits += predict_primitive(reduction, flow, observe(scene)).cls == PrimitiveClass.ROTATE
    assert hits >= 95


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 59))
def test_argmax_invariant_to_logit_scaling(reduction, play, c, i):
    scaled = dataclasses.replace(reduction, cls_weights=c * reduction.cls_weights)
    rec = play[i]
    assert predict_primitive(scaled, rec.flow, rec.pre_observation).cls == predict_primitive(
        reduction, rec.flow, rec.pre_observation
    ).cls


def test_push_pull_endpoints_held_out(play):
    model = fit_reduction(play[:240])
    errs = []
    for r in play[240:]:
        if r.primitive.cls != PrimitiveClass.PUSH_PULL:
            continue
        got = predict_primitive(model, r.flow, r.pre_observation)
        errs.append(np.max(np.abs(np.array(got.params) - r.primitive.params)))
    assert len(errs) > 10
    assert np.mean(np.array(errs) <= 0.05) >= 0.9


@pytest.mark.parametrize("task", list(Task))
def test_base_in_distribution(task):
    base = fit_base(gen_expert(task, 20, np.random.default_rng(0)))
    g = np.random.default_rng(1)
    wins = [direct_rollout(base, sample_scenario(task, Split.IN_DIST, g)).success for _ in range(50)]
    assert np.mean(wins) >= 0.9


def test_base_fails_on_covered_target():
    base = fit_base(gen_expert(Task.REVEAL_PICK, 20, np.random.default_rng(0)))
    g = np.random.default_rng(2)
    wins = [direct_rollout(base, sample_scenario(Task.REVEAL_PICK, Split.OOD, g)).success for _ in range(50)]
    assert np.mean(wins) <= 0.2


def test_base_single_demo_memorised():
    demo = gen_expert(Task.PICK_PLACE, 1, np.random.default_rng(3))
    base = fit_base(demo, lam=1e-8)
    obs, action = demo[0].pairs[0]
    np.testing.assert_allclose(predict_base(base, obs).params, action.params, atol=1e-6)
    assert base.weight_norm == pytest.approx(np.linalg.norm(base.weights))
