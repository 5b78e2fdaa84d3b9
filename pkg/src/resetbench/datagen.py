"""Synthetic demonstration data.

Three sources stand in for the real data: scripted "human" rearrangement
videos (state sequences with point flows and parabolic score labels), random
task-agnostic play episodes (one primitive each, recorded with its flow) and
in-distribution expert demonstrations for the base policy. The flow
processing pipeline (extract, locate, crop, downsample) lives here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .sim import (
    TASKS,
    ActionPrimitive,
    Observation,
    PrimitiveClass,
    Split,
    Task,
    WorldState,
    apply_primitive,
    needs_reduction,
    observe,
    park_position,
    sample_scenario,
    select_object,
    PP_BOWL,
)

F_RAW = 40
FLOW_HORIZON = 18
DELTA_MOVE = 0.02
V_MIN = 0.005
LIFT_HEIGHT = 0.12
CARRY_BOW = 0.06
CARRY_BOW_GAIN = 0.4
MAX_SEGMENTS = 6


class UnsolvableScene(RuntimeError):
    """The scripted oracle could not bring a scene to its anchor region."""


@dataclass(frozen=True, eq=False)
class PointFlow:
    """Tracked 2D points over time, ``data`` of shape ``(F, P, 2)``.

    Points come in groups of five (center and four boundary keypoints), one
    group per moving object; ``object_ids`` and ``object_classes`` describe
    the groups in order.
    """

    data: np.ndarray
    object_ids: tuple[int, ...] = ()
    object_classes: tuple[int, ...] = ()

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[2] != 2:
            raise ValueError(f"flow data must be (F, P, 2), got {data.shape}")
        if data.shape[0] < 1:
            raise ValueError("flow needs at least one frame")
        if not np.all(np.isfinite(data)):
            raise ValueError("flow coordinates must be finite")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "object_ids", tuple(int(i) for i in self.object_ids))
        object.__setattr__(self, "object_classes", tuple(int(c) for c in self.object_classes))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def points(self) -> int:
        return self.data.shape[1]

    def centroid(self) -> np.ndarray:
        """Per-frame centroid of all points, ``(F, 2)``."""
        return self.data.mean(axis=1)

    def translate(self, offset) -> "PointFlow":
        return PointFlow(self.data + np.asarray(offset, dtype=float), self.object_ids, self.object_classes)

    def window(self, start: int, end: int) -> "PointFlow":
        return PointFlow(self.data[start : end + 1], self.object_ids, self.object_classes)


@dataclass(frozen=True)
class Motion:
    """Moving points found in a flow: first-frame bounding box and frame window."""

    bbox: tuple[float, float, float, float]
    start: int
    end: int
    point_mask: np.ndarray = field(repr=False)

    def bbox_contains(self, x: float, y: float) -> bool:
        x_lo, y_lo, x_hi, y_hi = self.bbox
        return x_lo - 1e-12 <= x <= x_hi + 1e-12 and y_lo - 1e-12 <= y <= y_hi + 1e-12


@dataclass(frozen=True, eq=False)
class DemoVideo:
    states: list
    flow: PointFlow
    score_labels: np.ndarray
    task: Task
    # (first frame, last frame) of each primitive segment
    segments: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.states)

    def segment_flow(self, k: int = 0) -> Optional[PointFlow]:
        """Processed 18-step flow of the ``k``-th segment, None if it has no motion."""
        if k >= len(self.segments):
            return None
        s, e = self.segments[k]
        return process_flow(self.states[s : e + 1])


@dataclass(frozen=True, eq=False)
class PlayRecord:
    pre_observation: Observation
    flow: PointFlow
    primitive: ActionPrimitive
    task: Task
    pre_state: Optional[WorldState] = None


@dataclass(frozen=True, eq=False)
class ExpertDemo:
    pairs: list
    scene: WorldState
    final_state: WorldState


# ---------------------------------------------------------------------------
# score labels


def label_scores(T: int, alpha: float = 1.0, beta: Optional[float] = None) -> np.ndarray:
    """Parabolic frame scores ``alpha - (t / beta)**2`` for ``t = 0..T-1``.

    ``beta`` defaults to ``T - 1`` so every video spans ``[0, alpha]``; a
    single-frame video gets ``beta = 1``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if beta is None:
        beta = float(max(T - 1, 1))
    if not beta > 0:
        raise ValueError("beta must be positive")
    t = np.arange(T, dtype=float)
    return alpha - (t / beta) ** 2


# ---------------------------------------------------------------------------
# scripted oracle


def oracle_reduction_action(state: WorldState) -> Optional[ActionPrimitive]:
    """Next rearranging primitive of the scripted oracle, None at an anchor."""
    if not needs_reduction(state):
        return None
    goal = state.goal
    task = goal.task
    poses = state.poses
    if task == Task.PICK_PLACE:
        bowl = poses[goal.container_id]
        return ActionPrimitive(PrimitiveClass.PUSH_PULL, (bowl.x, bowl.y, PP_BOWL.x, PP_BOWL.y))
    if task == Task.ROTATE_PLACE:
        tool = poses[goal.target_id]
        band_center = 0.5 * (goal.theta_lo + goal.theta_hi)
        return ActionPrimitive(
            PrimitiveClass.ROTATE, (tool.x, tool.y, geometry.wrap_angle(band_center - tool.theta), 0.0)
        )
    # occlusion tasks: lift off the outermost occluder above the target
    top = goal.target_id
    while top in state.covered_by:
        top = state.covered_by[top]
    px, py = park_position(task, top)
    return ActionPrimitive(PrimitiveClass.PICK_PLACE, (poses[top].x, poses[top].y, px, py))


def oracle_base_action(state: WorldState) -> ActionPrimitive:
    """The scripted expert's single task primitive from an anchor state."""
    goal = state.goal
    target = state.poses[goal.target_id]
    if goal.task == Task.PICK_PLACE:
        dest = state.poses[goal.container_id]
        dx, dy = dest.x, dest.y
    else:
        dx, dy = goal.serve
    return ActionPrimitive(PrimitiveClass.PICK_PLACE, (target.x, target.y, dx, dy))


def oracle_solve(state: WorldState, rng=None) -> tuple[WorldState, int]:
    """Run the scripted oracle to completion.

    Returns the final state and the number of rearranging primitives used.
    """
    steps = 0
    for _ in range(MAX_SEGMENTS):
        action = oracle_reduction_action(state)
        if action is None:
            break
        state, ok = apply_primitive(state, action, rng)
        if not ok:
            raise UnsolvableScene(f"oracle primitive {action} found no object")
        steps += 1
    state, _ = apply_primitive(state, oracle_base_action(state), rng)
    return state, steps


# ---------------------------------------------------------------------------
# motion rendering and flow processing


def animate(state: WorldState, action: ActionPrimitive, rng=None, frames: int = F_RAW) -> tuple[list, bool]:
    """Apply ``action`` and render the motion as ``frames`` states.

    Translation is linear in time, rotation is linear in angle and a
    pick-and-place lifts the object and carries it along a bowed half-sine
    arc. The first frame is
    ``state`` and the last is the post-transition state.
    """
    obj = select_object(state, action)
    new, ok = apply_primitive(state, action, rng)
    if not ok:
        return [state], False
    pre, post = state.poses[obj], new.poses[obj]
    dtheta = geometry.wrap_angle(post.theta - pre.theta)
    lifting = action.cls == PrimitiveClass.PICK_PLACE
    # a carried object swings along an arc bowed toward the table center
    chord = np.array([post.x - pre.x, post.y - pre.y])
    normal = np.array([-chord[1], chord[0]])
    if np.linalg.norm(chord) > 0:
        normal /= np.linalg.norm(chord)
    if normal @ (np.array([0.5, 0.5]) - 0.5 * np.array([pre.x + post.x, pre.y + post.y])) < 0:
        normal = -normal
    bow = (CARRY_BOW + CARRY_BOW_GAIN * np.linalg.norm(chord)) if lifting else 0.0
    out = [state]
    for k in range(1, frames - 1):
        s = k / (frames - 1)
        poses = list(state.poses)
        off = bow * np.sin(np.pi * s) * normal
        poses[obj] = type(pre)(
            float(np.clip(pre.x + s * chord[0] + off[0], 0.0, 1.0)),
            float(np.clip(pre.y + s * chord[1] + off[1], 0.0, 1.0)),
            pre.theta + s * dtheta,
        )
        lift = [0.0] * len(poses)
        if lifting:
            lift[obj] = LIFT_HEIGHT * np.sin(np.pi * s)
        out.append(state.with_poses(poses, layer=new.layer, lift=lift))
    out.append(new)
    return out, True


def _tracks(states: Sequence[WorldState]) -> np.ndarray:
    """Ground-truth keypoints of every object, ``(F, n_objects, 5, 2)``."""
    out = []
    for st in states:
        frame = [
            geometry.keypoints(spec.shape, pose.x, pose.y, pose.theta)
            for spec, pose in st.objects
        ]
        out.append(frame)
    return np.array(out, dtype=float)


def extract_flow(states: Sequence[WorldState], delta_move: float = DELTA_MOVE) -> PointFlow:
    """Track the keypoints of objects that move by more than ``delta_move``.

    An object counts as moving when any of its keypoints strays further than
    ``delta_move`` from its first-frame position. Its five tracks are added as
    one contiguous group. A static sequence gives an empty flow (``P = 0``).
    """
    if len(states) < 2:
        raise ValueError("need at least two states to extract a flow")
    tracks = _tracks(states)
    disp = np.linalg.norm(tracks - tracks[:1], axis=-1).max(axis=(0, 2))
    moving = [i for i in range(tracks.shape[1]) if disp[i] > delta_move]
    specs = states[0].specs
    if not moving:
        return PointFlow(np.zeros((len(states), 0, 2)))
    data = tracks[:, moving].reshape(len(states), -1, 2)
    return PointFlow(data, tuple(moving), tuple(int(specs[i].cls) for i in moving))


def downsample_flow(flow: PointFlow, horizon: int = FLOW_HORIZON) -> PointFlow:
    """Linearly resample every point track onto ``horizon`` evenly spaced times."""
    if flow.frames < 2:
        raise ValueError("need at least two frames to resample")
    if flow.frames == horizon:
        return PointFlow(flow.data.copy(), flow.object_ids, flow.object_classes)
    src = np.linspace(0.0, 1.0, flow.frames)
    dst = np.linspace(0.0, 1.0, horizon)
    flat = flow.data.reshape(flow.frames, -1)
    out = np.empty((horizon, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(dst, src, flat[:, j])
    # pin the endpoints exactly
    out[0], out[-1] = flat[0], flat[-1]
    return PointFlow(out.reshape(horizon, flow.points, 2), flow.object_ids, flow.object_classes)


def locate_moving(flow: PointFlow, delta_move: float = DELTA_MOVE, v_min: float = V_MIN) -> Optional[Motion]:
    """Find the moving points of a flow and the frames during which they move.

    Points whose net displacement exceeds ``delta_move`` form the moving set;
    the bounding box is their first-frame extent. The window runs from the
    first to the last frame transition in which any selected point moves
    faster than the speed threshold. The threshold is ``v_min``, lowered to
    half the peak speed for motions too slow to ever reach it.
    """
    if flow.points < 1:
        raise ValueError("flow has no points")
    net = np.linalg.norm(flow.data[-1] - flow.data[0], axis=-1)
    mask = net > delta_move
    if not mask.any():
        return None
    first = flow.data[0, mask]
    bbox = (first[:, 0].min(), first[:, 1].min(), first[:, 0].max(), first[:, 1].max())
    speed = np.linalg.norm(np.diff(flow.data[:, mask], axis=0), axis=-1).max(axis=1)
    threshold = min(v_min, 0.5 * speed.max())
    active = np.flatnonzero(speed > threshold)
    return Motion(tuple(float(v) for v in bbox), int(active[0]), int(active[-1] + 1), mask)


def process_flow(states: Sequence[WorldState]) -> Optional[PointFlow]:
    """Extract, crop to the motion window and downsample to the fixed horizon."""
    flow = extract_flow(states)
    if flow.points == 0:
        return None
    motion = locate_moving(flow)
    if motion is None:
        return None
    return downsample_flow(flow.window(motion.start, motion.end))


# ---------------------------------------------------------------------------
# generators


def script_demo(task, scene: WorldState, rng=None, frames: int = F_RAW, alpha: float = 1.0) -> DemoVideo:
    """Scripted human video: the oracle rearranges ``scene`` into an anchor state."""
    task = Task(task)
    states = [scene]
    segments, actions = [], []
    state = scene
    for _ in range(MAX_SEGMENTS):
        action = oracle_reduction_action(state)
        if action is None:
            break
        rendered, ok = animate(state, action, rng, frames)
        if not ok:
            raise UnsolvableScene(f"{task.value}: oracle primitive {action} found no object")
        start = len(states) - 1
        states.extend(rendered[1:])
        segments.append((start, len(states) - 1))
        actions.append(action)
        state = rendered[-1]
    else:
        if needs_reduction(state):
            raise UnsolvableScene(f"{task.value}: scene still unprepared after {MAX_SEGMENTS} primitives")
    labels = label_scores(len(states), alpha)
    flow = extract_flow(states) if len(states) > 1 else PointFlow(np.zeros((1, 0, 2)))
    return DemoVideo(states, flow, labels, task, segments, actions)


def _play_action(state: WorldState, kind: PrimitiveClass, rng) -> Optional[ActionPrimitive]:
    eligible = [
        spec.id
        for spec in state.specs
        if spec.movable
        and spec.id not in state.covered_by
        and (spec.graspable or kind != PrimitiveClass.PICK_PLACE)
    ]
    if not eligible:
        return None
    obj = eligible[int(rng.integers(len(eligible)))]
    pose = state.poses[obj]
    if kind == PrimitiveClass.PICK_PLACE:
        x2, y2 = rng.uniform(0.05, 0.95, 2)
        return ActionPrimitive(kind, (pose.x, pose.y, x2, y2))
    if kind == PrimitiveClass.PUSH_PULL:
        for _ in range(50):
            ang = rng.uniform(-np.pi, np.pi)
            length = rng.uniform(0.05, 0.7)
            x2, y2 = pose.x + length * np.cos(ang), pose.y + length * np.sin(ang)
            if 0.05 <= x2 <= 0.95 and 0.05 <= y2 <= 0.95:
                return ActionPrimitive(kind, (pose.x, pose.y, x2, y2))
        return None
    dtheta = rng.uniform(0.5, 2.8) * rng.choice([-1.0, 1.0])
    return ActionPrimitive(kind, (pose.x, pose.y, dtheta, 0.0))


def play_episode(state: WorldState, action: ActionPrimitive, rng=None, idle=(0, 0)) -> Optional[PlayRecord]:
    """Execute one primitive and record its flow; None when nothing visibly moves."""
    rendered, ok = animate(state, action, rng)
    if not ok:
        return None
    pre, post = idle
    states = [rendered[0]] * pre + rendered + [rendered[-1]] * post
    flow = process_flow(states)
    if flow is None:
        return None
    return PlayRecord(observe(state, rng), flow, action, state.task, state)


def gen_play(n_episodes: int, rng, tasks=TASKS, env_params=None) -> list[PlayRecord]:
    """Task-agnostic play: random primitives on random scenes of any task."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    records = []
    for _ in range(n_episodes):
        # the class is drawn once per episode so the mix stays balanced
        kind = PrimitiveClass(int(rng.integers(3)))
        record = None
        while record is None:
            task = tasks[int(rng.integers(len(tasks)))]
            split = Split.OOD if rng.uniform() < 0.5 else Split.IN_DIST
            scene = sample_scenario(task, split, rng, env_params)
            action = _play_action(scene, kind, rng)
            if action is None:
                continue
            idle = (int(rng.integers(3, 11)), int(rng.integers(3, 11)))
            record = play_episode(scene, action, rng, idle)
        records.append(record)
    return records


def gen_human(task, n_demos: int, rng, env_params=None, alpha: float = 1.0) -> list[DemoVideo]:
    """Scripted rearrangement videos starting from out-of-distribution scenes."""
    return [
        script_demo(task, sample_scenario(task, Split.OOD, rng, env_params), rng, alpha=alpha) for _ in range(n_demos)
    ]


def gen_expert(task, n_demos: int, rng, env_params=None) -> list[ExpertDemo]:
    """In-distribution expert demonstrations of the task primitive."""
    if n_demos < 1:
        raise ValueError("n_demos must be at least 1")
    demos = []
    for _ in range(n_demos):
        scene = sample_scenario(task, Split.IN_DIST, rng, env_params)
        action = oracle_base_action(scene)
        obs = observe(scene, rng)
        final, _ = apply_primitive(scene, action, rng)
        demos.append(ExpertDemo([(obs, action)], scene, final))
    return demos
