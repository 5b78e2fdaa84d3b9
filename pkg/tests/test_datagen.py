import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resetbench.datagen import (
    F_RAW,
    FLOW_HORIZON,
    PointFlow,
    animate,
    downsample_flow,
    extract_flow,
    gen_expert,
    gen_play,
    label_scores,
    locate_moving,
    play_episode,
    script_demo,
)
from resetbench.geometry import procrustes_angle, wrap_angle
from resetbench.sim import (
    RT_BAND,
    ActionPrimitive,
    Pose2,
    PrimitiveClass,
    Split,
    Task,
    is_success,
    needs_reduction,
    sample_scenario,
)


def test_label_examples():
    assert label_scores(5)[0] == 1.0
    assert label_scores(5)[-1] == 0.0
    assert label_scores(5, 1.0, 2 * 4)[-1] == pytest.approx(0.75, abs=1e-15)
    assert label_scores(1).tolist() == [1.0]


@given(st.integers(2, 400), st.floats(0.1, 5.0), st.floats(1.0, 4.0))
def test_labels_are_a_parabola(T, alpha, stretch):
    # beta >= T - 1 keeps every label within [alpha - 1, alpha]
    beta = stretch * (T - 1)
    y = label_scores(T, alpha, beta)
    assert len(y) == T
    assert np.all(np.diff(y) < 0)
    if T >= 3:
        np.testing.assert_allclose(np.diff(y, 2), -2 / beta**2, rtol=0, atol=1e-12)


@given(st.integers(3, 400), st.floats(0.1, 5.0), st.floats(0.5, 500.0))
def test_labels_parabola_any_beta(T, alpha, beta):
    y = label_scores(T, alpha, beta)
    assert np.all(np.diff(y) < 0)
    scale = max(1.0, np.abs(y).max())
    np.testing.assert_allclose(np.diff(y, 2), -2 / beta**2, rtol=0, atol=1e-12 * scale)


def test_label_errors():
    with pytest.raises(ValueError):
        label_scores(0)
    with pytest.raises(ValueError):
        label_scores(3, 1.0, 0.0)


def test_downsample_identity_at_horizon():
    data = np.random.default_rng(0).uniform(size=(FLOW_HORIZON, 5, 2))
    assert np.array_equal(downsample_flow(PointFlow(data)).data, data)


def test_downsample_straight_line():
    t = np.linspace(0, 1, 35)
    flow = PointFlow(np.stack([t, t], axis=1)[:, None, :])
    out = downsample_flow(flow).data[:, 0]
    k = np.arange(FLOW_HORIZON) / 17
    np.testing.assert_allclose(out, np.stack([k, k], axis=1), rtol=0, atol=1e-12)


@settings(max_examples=100)
@given(st.integers(2, 120), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_downsample_exact_for_constant_velocity(F, P, seed):
    g = np.random.default_rng(seed)
    start, vel = g.uniform(-1, 1, (P, 2)), g.uniform(-1, 1, (P, 2))
    t = np.linspace(0, 1, F)[:, None, None]
    out = downsample_flow(PointFlow(start + t * vel)).data
    s = np.linspace(0, 1, FLOW_HORIZON)[:, None, None]
    assert np.max(np.abs(out - (start + s * vel))) <= 1e-12
    assert np.array_equal(out[0], start)
    assert np.array_equal(out[-1], start + vel)


@settings(max_examples=100)
@given(st.integers(2, 120), st.integers(0, 2**32 - 1))
def test_downsample_keeps_endpoints(F, seed):
    data = np.random.default_rng(seed).normal(size=(F, 7, 2))
    out = downsample_flow(PointFlow(data)).data
    assert out.shape == (FLOW_HORIZON, 7, 2)
    assert np.array_equal(out[0], data[0]) and np.array_equal(out[-1], data[-1])


def test_extract_flow_counts(rng):
    s = sample_scenario(Task.PICK_PLACE, Split.IN_DIST, rng)
    assert extract_flow([s] * 5).points == 0
    carrot = s.poses[0]
    frames, ok = animate(s, ActionPrimitive(PrimitiveClass.PUSH_PULL, (carrot.x, carrot.y, carrot.x + 0.2, carrot.y)))
    flow = extract_flow(frames)
    assert ok and flow.points == 5 and flow.object_ids == (0,)
    # move both objects one after the other
    bowl = frames[-1].poses[1]
    more, _ = animate(frames[-1], ActionPrimitive(PrimitiveClass.PUSH_PULL, (bowl.x, bowl.y, bowl.x, bowl.y - 0.2)))
    flow = extract_flow(frames + more[1:])
    assert flow.points == 10 and flow.object_ids == (0, 1)
    np.testing.assert_allclose(flow.data[0, :5].mean(axis=0), [carrot.x, carrot.y], atol=1e-12)


def test_locate_moving_window():
    data = np.zeros((20, 3, 2))
    data[:, 1] = 0.5
    # frames 0..5 at rest, constant speed until frame 12, then rest
    x = np.clip((np.arange(20) - 5) / 7, 0, 1) * 0.3
    data[:, 0, 0] = x
    motion = locate_moving(PointFlow(data))
    assert (motion.start, motion.end) == (5, 12)
    assert motion.point_mask.tolist() == [True, False, False]
    assert locate_moving(PointFlow(data), delta_move=0.31) is None
    assert locate_moving(PointFlow(np.zeros((10, 2, 2)))) is None


def test_reveal_two_level_nesting_gives_two_segments():
    g = np.random.default_rng(0)
    for _ in range(50):
        scene = sample_scenario(Task.REVEAL_PICK, Split.OOD, g, nesting_prob=1.0)
        if scene.covered_by.get(1) == 2:
            break
    demo = script_demo(Task.REVEAL_PICK, scene)
    assert len(demo.segments) == 2
    assert all(a.cls == PrimitiveClass.PICK_PLACE for a in demo.actions)
    assert demo.T == 1 + 2 * (F_RAW - 1)
    assert len(demo.score_labels) == demo.T
    assert np.all(np.diff(demo.score_labels) < 0)


def test_anchor_scene_gives_single_frame(rng):
    scene = sample_scenario(Task.PICK_PLACE, Split.IN_DIST, rng)
    demo = script_demo(Task.PICK_PLACE, scene, alpha=0.7)
    assert demo.T == 1 and demo.score_labels.tolist() == [0.7]


def test_rotate_demo_ends_in_band(rng):
    scene = sample_scenario(Task.ROTATE_PLACE, Split.IN_DIST, rng)
    poses = list(scene.poses)
    center = 0.5 * (RT_BAND[0] + RT_BAND[1])
    poses[0] = Pose2(poses[0].x, poses[0].y, center + np.pi / 3)
    demo = script_demo(Task.ROTATE_PLACE, scene.with_poses(poses))
    theta = demo.states[-1].poses[0].theta
    assert RT_BAND[0] <= theta <= RT_BAND[1]


@pytest.fixture(scope="module")
def records():
    return gen_play(200, np.random.default_rng(0))


def test_play_flows_have_horizon(records):
    assert all(r.flow.frames == FLOW_HORIZON for r in records)
    kinds = {r.primitive.cls for r in records}
    assert kinds == set(PrimitiveClass)


def test_push_pull_centroid_matches_command(records):
    n = 0
    for r in records:
        if r.primitive.cls != PrimitiveClass.PUSH_PULL:
            continue
        x1, y1, x2, y2 = r.primitive.params
        c = r.flow.centroid()
        np.testing.assert_allclose(c[-1] - c[0], [x2 - x1, y2 - y1], rtol=0, atol=1e-6)
        n += 1
    assert n > 20


def test_rotate_flow_angle_matches_command(records):
    n = 0
    for r in records:
        if r.primitive.cls != PrimitiveClass.ROTATE:
            continue
        got = procrustes_angle(r.flow.data[0], r.flow.data[-1])
        assert abs(wrap_angle(got - r.primitive.params[2])) < 1e-6
        n += 1
    assert n > 20


def test_bbox_contains_moved_object_start(records):
    for r in records:
        motion = locate_moving(r.flow)
        pose = r.pre_state.poses[r.flow.object_ids[0]]
        assert motion.bbox_contains(pose.x, pose.y)


def test_play_episode_skips_noop(rng):
    scene = sample_scenario(Task.PICK_PLACE, Split.IN_DIST, rng)
    assert play_episode(scene, ActionPrimitive(PrimitiveClass.PICK_PLACE, (0.95, 0.05, 0.5, 0.5))) is None


def test_expert_demos():
    for task in Task:
        demos = gen_expert(task, 20, np.random.default_rng(1))
        assert len(demos) == 20
        for d in demos:
            assert is_success(d.final_state) and not needs_reduction(d.scene)
            assert len(d.pairs) == 1
            assert d.pairs[0][1].cls == PrimitiveClass.PICK_PLACE
    a = gen_expert(Task.PICK_PLACE, 5, np.random.default_rng(2))
    b = gen_expert(Task.PICK_PLACE, 5, np.random.default_rng(2))
    assert [d.pairs[0][1] for d in a] == [d.pairs[0][1] for d in b]
    with pytest.raises(ValueError):
        gen_expert(Task.PICK_PLACE, 0, np.random.default_rng(0))
