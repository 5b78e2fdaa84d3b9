import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resetbench import geometry
from resetbench.datagen import oracle_solve
from resetbench.gap import cov_trace
from resetbench.sim import (
    RT_BAND,
    ActionPrimitive,
    Circle,
    GoalSpec,
    ObjectClass,
    ObjectSpec,
    Pose2,
    PrimitiveClass,
    Rect,
    Split,
    Task,
    Theta,
    apply_primitive,
    is_success,
    make_state,
    observe,
    sample_scenario,
    state_dim,
    state_vector,
)

PP, PU, RO = PrimitiveClass.PICK_PLACE, PrimitiveClass.PUSH_PULL, PrimitiveClass.ROTATE


def two_objects(p0=(0.2, 0.3, 0.0), p1=(0.8, 0.8, 0.0)):
    specs = [
        ObjectSpec(0, ObjectClass.TARGET, Circle(0.03), True, True),
        ObjectSpec(1, ObjectClass.CONTAINER, Circle(0.07), False, True),
    ]
    goal = GoalSpec(Task.PICK_PLACE, target_id=0, container_id=1, r_succ=0.06)
    return make_state(specs, [Pose2(*p0), Pose2(*p1)], goal)


def test_pick_place_teleports_exactly():
    state, ok = apply_primitive(two_objects(), ActionPrimitive(PP, (0.2, 0.3, 0.7, 0.7)))
    assert ok
    assert (state.poses[0].x, state.poses[0].y) == (0.7, 0.7)


def test_rotate_to_pi_is_stored_as_pi():
    s = two_objects(p0=(0.2, 0.3, np.pi / 2))
    state, ok = apply_primitive(s, ActionPrimitive(RO, (0.2, 0.3, np.pi / 2, 0.0)))
    assert ok and state.poses[0].theta == np.pi


def test_out_of_reach_is_a_noop():
    s = two_objects()
    far = 3 * s.env_params.grasp_radius
    state, ok = apply_primitive(s, ActionPrimitive(PP, (0.2 + far, 0.3, 0.5, 0.5)))
    assert not ok and state is s


def test_push_pull_translates():
    state, ok = apply_primitive(two_objects(), ActionPrimitive(PU, (0.21, 0.3, 0.41, 0.2)))
    assert ok
    assert state.poses[0].x == pytest.approx(0.4, abs=1e-12)
    assert state.poses[0].y == pytest.approx(0.2, abs=1e-12)


def test_pick_place_needs_graspable():
    # the container is movable but not graspable
    _, ok = apply_primitive(two_objects(), ActionPrimitive(PP, (0.8, 0.8, 0.1, 0.1)))
    assert not ok
    _, ok = apply_primitive(two_objects(), ActionPrimitive(PU, (0.8, 0.8, 0.7, 0.7)))
    assert ok


def test_tie_goes_to_lowest_id():
    specs = [ObjectSpec(i, ObjectClass.TARGET, Circle(0.01), True, True) for i in range(2)]
    goal = GoalSpec(Task.PICK_PLACE, target_id=0, container_id=1, r_succ=0.06)
    s = make_state(specs, [Pose2(0.48, 0.5), Pose2(0.52, 0.5)], goal)
    state, _ = apply_primitive(s, ActionPrimitive(PP, (0.5, 0.5, 0.1, 0.1)))
    assert (state.poses[0].x, state.poses[1].x) == (0.1, 0.52)


def test_covered_objects_cannot_be_grasped(rng):
    s = sample_scenario(Task.REVEAL_PICK, Split.OOD, rng)
    block = s.poses[0]
    # the only thing in reach of the block's center is its coverer
    state, ok = apply_primitive(s, ActionPrimitive(PP, (block.x, block.y, 0.1, 0.1)))
    assert ok and state.poses[0] == block


def test_observe_counts_and_occlusion(rng):
    s = two_objects()
    obs = observe(s)
    assert len(obs.keypoints) == 2 * (geometry.N_BOUNDARY + 1)
    ood = sample_scenario(Task.REVEAL_PICK, Split.OOD, rng)
    obs = observe(ood)
    assert ObjectClass.TARGET not in obs.classes.tolist()
    hidden = len(ood.covered_by)
    assert len(obs.keypoints) == (3 - hidden) * (geometry.N_BOUNDARY + 1)


def test_observe_same_seed_identical():
    s = two_objects().replace(env_params=Theta(sigma_obs=0.01))
    a = observe(s, np.random.default_rng(3))
    b = observe(s, np.random.default_rng(3))
    assert a.points.tobytes() == b.points.tobytes()
    assert a.feature.tobytes() == b.feature.tobytes()


def test_success_predicates(rng):
    assert is_success(two_objects(p0=(0.5, 0.5, 0.0), p1=(0.5, 0.5, 0.0)))
    covered = sample_scenario(Task.REVEAL_PICK, Split.OOD, rng)
    served = covered.goal.serve
    # park the block at the serve zone but keep it covered
    poses = list(covered.poses)
    poses[0] = Pose2(*served)
    poses[1] = Pose2(*served)
    hidden = covered.with_poses(poses)
    assert 0 in hidden.covered_by and not is_success(hidden)


def test_rotate_band_is_closed(rng):
    s = sample_scenario(Task.ROTATE_PLACE, Split.IN_DIST, rng)
    poses = list(s.poses)
    poses[0] = Pose2(*s.goal.serve, RT_BAND[0])
    assert is_success(s.with_poses(poses))
    poses[0] = Pose2(*s.goal.serve, RT_BAND[1])
    assert is_success(s.with_poses(poses))
    poses[0] = Pose2(*s.goal.serve, RT_BAND[1] + 1e-6)
    assert not is_success(s.with_poses(poses))


def test_multitask_other_item_must_stay(rng):
    s = sample_scenario(Task.MULTI_TASK, Split.IN_DIST, rng)
    i = s.goal.instruction
    poses = list(s.poses)
    poses[i] = Pose2(*s.goal.serve)
    assert is_success(s.with_poses(poses))
    poses[1 - i] = Pose2(0.5, 0.6)
    assert not is_success(s.with_poses(poses))


def test_reveal_ood_is_covered(rng):
    for _ in range(20):
        assert 0 in sample_scenario(Task.REVEAL_PICK, Split.OOD, rng).covered_by


def test_state_vector_layout():
    assert state_vector(two_objects()).shape == (10,)
    s = two_objects(p0=(0.8, 0.8, np.pi / 2))
    v = state_vector(s)
    np.testing.assert_allclose(v[2:4], [0.0, 1.0], atol=1e-15)
    # the target sits under the bowl, which is stacked on top
    assert v[4] == 1.0 and v[9] == 0.0
    for task in Task:
        assert state_dim(task) == 5 * len(sample_scenario(task, Split.OOD, np.random.default_rng(0)).specs)


def test_in_dist_spread_below_ood():
    g = np.random.default_rng(0)
    ind = np.array([state_vector(sample_scenario(Task.PICK_PLACE, Split.IN_DIST, g)) for _ in range(1000)])
    ood = np.array([state_vector(sample_scenario(Task.PICK_PLACE, Split.OOD, g)) for _ in range(1000)])
    assert cov_trace(ind) < cov_trace(ood)


def test_sampler_deterministic():
    for task in Task:
        a = sample_scenario(task, Split.OOD, np.random.default_rng(9))
        b = sample_scenario(task, Split.OOD, np.random.default_rng(9))
        assert a == b


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_rotate_full_turn_is_fixed_point(seed, theta):
    s = sample_scenario(Task.ROTATE_PLACE, Split.IN_DIST, np.random.default_rng(seed))
    poses = list(s.poses)
    poses[0] = Pose2(poses[0].x, poses[0].y, theta)
    s = s.with_poses(poses)
    p = s.poses[0]
    turned, _ = apply_primitive(s, ActionPrimitive(RO, (p.x, p.y, 2 * np.pi, 0.0)))
    np.testing.assert_allclose(state_vector(turned), state_vector(s), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Task)), st.sampled_from(list(PrimitiveClass)))
def test_occlusion_consistent_after_motion(seed, task, kind):
    g = np.random.default_rng(seed)
    s = sample_scenario(task, Split.OOD, g, Theta(sigma_act=0.01))
    obj = g.integers(len(s.specs))
    p = s.poses[obj]
    if kind == RO:
        action = ActionPrimitive(kind, (p.x, p.y, g.uniform(-3, 3), 0.0))
    else:
        action = ActionPrimitive.make(kind, (p.x, p.y, *g.uniform(0, 1, 2)))
    out, _ = apply_primitive(s, action, g)
    for covered, coverer in out.covered_by.items():
        spec, pose = out.specs[coverer], out.poses[coverer]
        c = out.poses[covered]
        assert geometry.contains(spec.shape, pose.x, pose.y, pose.theta, c.x, c.y)
    for pose in out.poses:
        assert -np.pi < pose.theta <= np.pi


def test_zero_noise_is_pure(rng):
    s = sample_scenario(Task.PICK_PLACE, Split.OOD, rng)
    a = ActionPrimitive(PP, (s.poses[0].x, s.poses[0].y, 0.6, 0.6))
    assert apply_primitive(s, a, np.random.default_rng(1))[0] == apply_primitive(s, a, np.random.default_rng(2))[0]


@pytest.mark.parametrize("task", list(Task))
@pytest.mark.parametrize("split", list(Split))
def test_every_scenario_solvable(task, split):
    g = np.random.default_rng([list(Task).index(task), list(Split).index(split)])
    for _ in range(100):
        final, _ = oracle_solve(sample_scenario(task, split, g))
        assert is_success(final)


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        Circle(0.0)
    with pytest.raises(ValueError):
        Rect(0.1, -1.0)
    with pytest.raises(ValueError):
        Theta(sigma_act=-0.1)
    with pytest.raises(ValueError):
        ActionPrimitive(PP, (0.1, 0.2, 1.3, 0.5))
    with pytest.raises(ValueError):
        GoalSpec(Task.ROTATE_PLACE, 0, 0.05, theta_lo=0.5, theta_hi=0.1)
    assert ActionPrimitive(RO, (0.5, 0.5, 1.0, 0.7)).params[3] == 0.0
