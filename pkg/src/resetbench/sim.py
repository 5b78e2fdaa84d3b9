"""Kinematic 2D tabletop world.

The workspace is the unit square. Objects are circles or rectangles with a
pose ``(x, y, theta)``; occluding objects (obstructors and containers) hide
whatever lies under them. Three action primitives move objects: pick-and-place
teleports, push-and-pull translates and rotate spins an object in place.
There is no contact physics; after every motion the occlusion relation is
recomputed from footprints and stacking order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Mapping, Optional

import numpy as np

from . import geometry
from .features import featurize


class ObjectClass(IntEnum):
    TARGET = 0
    OBSTRUCTOR = 1
    CONTAINER = 2
    TOOL = 3
    DISTRACTOR = 4


OCCLUDERS = frozenset({ObjectClass.OBSTRUCTOR, ObjectClass.CONTAINER})


class PrimitiveClass(IntEnum):
    PICK_PLACE = 0
    PUSH_PULL = 1
    ROTATE = 2


class Task(str, Enum):
    PICK_PLACE = "pick_place"
    REVEAL_PICK = "reveal_pick"
    ROTATE_PLACE = "rotate_place"
    MULTI_TASK = "multi_task"


class Split(str, Enum):
    IN_DIST = "in_dist"
    OOD = "ood"


TASKS = tuple(Task)


@dataclass(frozen=True)
class Circle:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class Rect:
    half_w: float
    half_h: float

    def __post_init__(self):
        if not (self.half_w > 0 and self.half_h > 0):
            raise ValueError("half extents must be positive")


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    cls: ObjectClass
    shape: Circle | Rect
    graspable: bool
    movable: bool
    name: str = ""


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (-1e-12 <= self.x <= 1 + 1e-12 and -1e-12 <= self.y <= 1 + 1e-12):
            raise ValueError(f"position ({self.x}, {self.y}) outside the workspace")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", geometry.wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Theta:
    """Environment parameters of the transition kernel."""

    sigma_act: float = 0.0
    sigma_obs: float = 0.0
    grasp_radius: float = 0.06

    def __post_init__(self):
        if min(self.sigma_act, self.sigma_obs, self.grasp_radius) < 0:
            raise ValueError("environment parameters must be non-negative")


@dataclass(frozen=True)
class GoalSpec:
    task: Task
    target_id: int
    r_succ: float
    container_id: Optional[int] = None
    theta_lo: float = -np.pi
    theta_hi: float = np.pi
    serve: Optional[tuple[float, float]] = None
    instruction: Optional[int] = None
    # (id, x, y) of objects that must stay put for success
    untouched: tuple[tuple[int, float, float], ...] = ()

    def __post_init__(self):
        if not self.r_succ > 0:
            raise ValueError("r_succ must be positive")
        if not self.theta_lo < self.theta_hi:
            raise ValueError("theta_lo must be below theta_hi")


@dataclass(frozen=True)
class ActionPrimitive:
    """Primitive class plus a 4-vector of parameters.

    PickPlace and PushPull carry ``(x1, y1, x2, y2)``; Rotate carries
    ``(x_c, y_c, dtheta, 0)``.
    """

    cls: PrimitiveClass
    params: tuple[float, float, float, float]

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        if len(p) != 4:
            raise ValueError("params must have 4 entries")
        object.__setattr__(self, "cls", PrimitiveClass(self.cls))
        if self.cls == PrimitiveClass.ROTATE:
            coords = p[:2]
            p = (p[0], p[1], geometry.wrap_angle(p[2]), 0.0)
        else:
            coords = p
        if any(c < -1e-12 or c > 1 + 1e-12 for c in coords):
            raise ValueError(f"primitive coordinates outside the workspace: {p}")
        object.__setattr__(self, "params", p)

    @classmethod
    def make(cls, kind, params) -> "ActionPrimitive":
        """Build a primitive, clipping coordinates into the workspace."""
        p = [float(v) for v in params]
        kind = PrimitiveClass(kind)
        n_coord = 2 if kind == PrimitiveClass.ROTATE else 4
        for i in range(n_coord):
            p[i] = min(max(p[i], 0.0), 1.0)
        if kind == PrimitiveClass.ROTATE:
            p[3] = 0.0
        return cls(kind, tuple(p))

    def as_array(self) -> np.ndarray:
        return np.array(self.params)


@dataclass(frozen=True)
class WorldState:
    specs: tuple[ObjectSpec, ...]
    poses: tuple[Pose2, ...]
    covered_by: Mapping[int, int]
    goal: GoalSpec
    env_params: Theta = field(default_factory=Theta)
    # stacking order, larger is higher; decides who occludes whom
    layer: tuple[int, ...] = ()
    # height above the table; nonzero only for frames in the middle of a lift
    lift: tuple[float, ...] = ()

    def __post_init__(self):
        n = len(self.specs)
        if len(self.poses) != n:
            raise ValueError("specs and poses differ in length")
        if [s.id for s in self.specs] != list(range(n)):
            raise ValueError("object ids must be 0..n-1 in order")
        if not self.layer:
            object.__setattr__(self, "layer", tuple(range(n)))
        if not self.lift:
            object.__setattr__(self, "lift", (0.0,) * n)

    @property
    def objects(self) -> list[tuple[ObjectSpec, Pose2]]:
        return list(zip(self.specs, self.poses))

    @property
    def task(self) -> Task:
        return self.goal.task

    def replace(self, **changes) -> "WorldState":
        return dataclasses.replace(self, **changes)

    def with_poses(self, poses, layer=None, lift=None) -> "WorldState":
        """New state with updated poses and a recomputed occlusion relation."""
        poses = tuple(poses)
        layer = self.layer if layer is None else tuple(layer)
        lift = (0.0,) * len(poses) if lift is None else tuple(lift)
        return dataclasses.replace(
            self,
            poses=poses,
            layer=layer,
            lift=lift,
            covered_by=compute_covering(self.specs, poses, layer),
        )


@dataclass(frozen=True, eq=False)
class Observation:
    """Keypoints of the visible objects.

    ``points`` has shape ``(G, 5, 2)``: one group per visible object, center
    first, then the four boundary keypoints. ``classes`` gives the object
    class of each group.
    """

    points: np.ndarray
    classes: np.ndarray
    instruction: Optional[int]
    feature: np.ndarray

    @property
    def keypoints(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Flat ``(point, class one-hot)`` list."""
        out = []
        eye = np.eye(len(ObjectClass))
        for group, c in zip(self.points, self.classes):
            out.extend((p, eye[c]) for p in group)
        return out

    def centroids(self) -> np.ndarray:
        return self.points.mean(axis=1) if len(self.points) else np.zeros((0, 2))


def compute_covering(specs, poses, layer) -> dict[int, int]:
    """Immediate occluder of every covered object.

    An object is covered when the footprint of an occluder stacked above it
    contains its center; the lowest such occluder is recorded. Stacking order
    is strict, so the relation is acyclic.
    """
    covered = {}
    for b, pb in enumerate(poses):
        best = None
        for a, (sa, pa) in enumerate(zip(specs, poses)):
            if a == b or sa.cls not in OCCLUDERS or layer[a] <= layer[b]:
                continue
            if geometry.contains(sa.shape, pa.x, pa.y, pa.theta, pb.x, pb.y):
                if best is None or layer[a] < layer[best]:
                    best = a
        if best is not None:
            covered[b] = best
    return covered


def make_state(specs, poses, goal, env_params=None, layer=None) -> WorldState:
    specs = tuple(specs)
    poses = tuple(poses)
    layer = tuple(range(len(specs))) if layer is None else tuple(layer)
    return WorldState(
        specs=specs,
        poses=poses,
        covered_by=compute_covering(specs, poses, layer),
        goal=goal,
        env_params=env_params or Theta(),
        layer=layer,
    )


def _clip01(v: float) -> float:
    return min(max(float(v), 0.0), 1.0)


def select_object(state: WorldState, action: ActionPrimitive) -> Optional[int]:
    """Object a primitive acts on, or None when nothing is in reach.

    Eligible objects are movable, uncovered and have their center within
    ``grasp_radius`` of the contact point; pick-and-place also requires the
    object to be graspable. Ties in distance go to the lowest id.
    """
    x1, y1 = action.params[0], action.params[1]
    reach = state.env_params.grasp_radius
    best, best_d = None, np.inf
    for spec, pose in state.objects:
        if not spec.movable or spec.id in state.covered_by:
            continue
        if action.cls == PrimitiveClass.PICK_PLACE and not spec.graspable:
            continue
        d = float(np.hypot(pose.x - x1, pose.y - y1))
        if d <= reach + 1e-12 and d < best_d:
            best, best_d = spec.id, d
    return best


def apply_primitive(state: WorldState, action: ActionPrimitive, rng=None) -> tuple[WorldState, bool]:
    """One transition of the world under ``action``.

    Returns the new state and whether an object was actually moved. A
    primitive with no eligible object leaves the state unchanged.
    """
    obj = select_object(state, action)
    if obj is None:
        return state, False
    sigma = state.env_params.sigma_act
    if sigma > 0 and rng is None:
        raise ValueError("a random generator is required when sigma_act > 0")

    def noise(size):
        return rng.normal(0.0, sigma, size) if sigma > 0 else np.zeros(size)

    poses = list(state.poses)
    layer = list(state.layer)
    pose = poses[obj]
    p = action.params
    if action.cls == PrimitiveClass.PICK_PLACE:
        n = noise(2)
        poses[obj] = Pose2(_clip01(p[2] + n[0]), _clip01(p[3] + n[1]), pose.theta)
        # a placed object ends up on top of the stack
        order = sorted(range(len(layer)), key=lambda i: (i == obj, layer[i]))
        layer = [0] * len(order)
        for rank, i in enumerate(order):
            layer[i] = rank
    elif action.cls == PrimitiveClass.PUSH_PULL:
        n = noise(2)
        poses[obj] = Pose2(
            _clip01(pose.x + p[2] - p[0] + n[0]),
            _clip01(pose.y + p[3] - p[1] + n[1]),
            pose.theta,
        )
    else:
        poses[obj] = Pose2(pose.x, pose.y, pose.theta + p[2] + noise(1)[0])
    return state.with_poses(poses, layer=layer), True


def observe(state: WorldState, rng=None) -> Observation:
    """Keypoint view of every uncovered object, in id order."""
    sigma = state.env_params.sigma_obs
    groups, classes = [], []
    for spec, pose in state.objects:
        if spec.id in state.covered_by:
            continue
        kp = geometry.keypoints(spec.shape, pose.x, pose.y, pose.theta)
        groups.append(kp)
        classes.append(int(spec.cls))
    points = np.array(groups, dtype=float).reshape(-1, geometry.N_BOUNDARY + 1, 2)
    if sigma > 0 and len(points):
        if rng is None:
            raise ValueError("a random generator is required when sigma_obs > 0")
        points = points + rng.normal(0.0, sigma, points.shape)
    classes = np.array(classes, dtype=int)
    obs = Observation(points, classes, state.goal.instruction, np.zeros(0))
    object.__setattr__(obs, "feature", featurize(obs))
    return obs


def is_success(state: WorldState) -> bool:
    goal = state.goal
    target = state.poses[goal.target_id]
    if goal.task == Task.PICK_PLACE:
        container = state.poses[goal.container_id]
        return bool(np.hypot(target.x - container.x, target.y - container.y) <= goal.r_succ)
    serve_d = float(np.hypot(target.x - goal.serve[0], target.y - goal.serve[1]))
    if goal.task == Task.REVEAL_PICK:
        return goal.target_id not in state.covered_by and serve_d <= goal.r_succ
    if goal.task == Task.ROTATE_PLACE:
        in_band = goal.theta_lo <= target.theta <= goal.theta_hi
        return bool(in_band and serve_d <= goal.r_succ)
    # multi-task: the instructed item is served and the other one stays put
    if serve_d > goal.r_succ:
        return False
    for oid, x0, y0 in goal.untouched:
        pose = state.poses[oid]
        if np.hypot(pose.x - x0, pose.y - y0) >= goal.r_succ:
            return False
    return True


def state_vector(state: WorldState) -> np.ndarray:
    """``(x, y, cos theta, sin theta, covered)`` per object, in id order."""
    rows = []
    for spec, pose in state.objects:
        rows.append(
            [pose.x, pose.y, np.cos(pose.theta), np.sin(pose.theta), float(spec.id in state.covered_by)]
        )
    return np.array(rows, dtype=float).ravel()


def goal_vector(state: WorldState) -> np.ndarray:
    """The goal-relevant part of the state vector: the target object's block."""
    i = state.goal.target_id
    return state_vector(state)[5 * i : 5 * i + 5]


# ---------------------------------------------------------------------------
# Task layouts and scenario samplers


@dataclass(frozen=True)
class Zone:
    x: float
    y: float
    half: float = 0.025

    def sample(self, rng) -> tuple[float, float]:
        return (
            self.x + rng.uniform(-self.half, self.half),
            self.y + rng.uniform(-self.half, self.half),
        )

    def distance(self, x: float, y: float) -> float:
        return float(np.hypot(x - self.x, y - self.y))


@dataclass(frozen=True)
class Box:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def sample(self, rng) -> tuple[float, float]:
        return rng.uniform(self.x_lo, self.x_hi), rng.uniform(self.y_lo, self.y_hi)

    def contains(self, x: float, y: float) -> bool:
        return self.x_lo <= x <= self.x_hi and self.y_lo <= y <= self.y_hi


R_SUCC = 0.06
NESTING_PROB = 0.5

# pick-and-place: carrot into bowl
PP_SPECS = (
    ObjectSpec(0, ObjectClass.TARGET, Circle(0.025), True, True, "carrot"),
    ObjectSpec(1, ObjectClass.CONTAINER, Circle(0.07), False, True, "bowl"),
)
PP_CARROT = Zone(0.25, 0.45)
PP_BOWL = Zone(0.55, 0.75)
PP_BOWL_OOD = Box(0.45, 0.85, 0.10, 0.42)
PP_ANCHOR_TOL = 0.05

# reveal-and-pick: block under a cup, possibly under a box as well
RP_SPECS = (
    ObjectSpec(0, ObjectClass.TARGET, Rect(0.02, 0.02), True, True, "block"),
    ObjectSpec(1, ObjectClass.OBSTRUCTOR, Circle(0.06), True, True, "cup"),
    ObjectSpec(2, ObjectClass.CONTAINER, Rect(0.12, 0.10), True, True, "box"),
)
RP_BLOCK = Box(0.20, 0.60, 0.30, 0.65)
RP_PARK = {1: Zone(0.85, 0.80), 2: Zone(0.80, 0.17)}
RP_SERVE = (0.12, 0.90)
RP_CUP_OFFSET = 0.02
RP_BOX_OFFSET = 0.03

# rotate-and-place: screwdriver into the tool row
RT_SPECS = (
    ObjectSpec(0, ObjectClass.TOOL, Rect(0.07, 0.015), True, True, "screwdriver"),
    ObjectSpec(1, ObjectClass.DISTRACTOR, Rect(0.07, 0.015), False, False, "rack tool"),
)
RT_TOOL = Box(0.30, 0.65, 0.30, 0.55)
RT_RACK = Pose2(0.30, 0.88, 0.0)
RT_SLOT = (0.60, 0.88)
RT_BAND = (-np.pi / 6, np.pi / 6)
RT_THETA_IN = 0.3
RT_THETA_OOD = (0.9, 2.4)

# multi-task: serve the instructed food, a lid may hide it
MT_SPECS = (
    ObjectSpec(0, ObjectClass.TARGET, Circle(0.04), True, True, "burger"),
    ObjectSpec(1, ObjectClass.DISTRACTOR, Rect(0.05, 0.02), True, True, "banana"),
    ObjectSpec(2, ObjectClass.OBSTRUCTOR, Rect(0.12, 0.12), True, True, "lid"),
)
MT_PLATES = {0: Zone(0.28, 0.42), 1: Zone(0.72, 0.42)}
MT_LID = Zone(0.50, 0.14)
MT_SERVE = (0.50, 0.85)
MT_LID_OFFSET = 0.04

TASK_SPECS = {
    Task.PICK_PLACE: PP_SPECS,
    Task.REVEAL_PICK: RP_SPECS,
    Task.ROTATE_PLACE: RT_SPECS,
    Task.MULTI_TASK: MT_SPECS,
}


def state_dim(task: Task) -> int:
    return 5 * len(TASK_SPECS[Task(task)])


def sample_scenario(task, split, rng, env_params: Optional[Theta] = None, nesting_prob: float = NESTING_PROB) -> WorldState:
    """Draw a start state.

    In-distribution starts come from the narrow regions used for expert
    demonstrations. Out-of-distribution starts carry the task's shift: the
    bowl far from its usual spot, the block hidden under one or two
    occluders, the screwdriver at a steep angle, or the instructed food under
    a lid.
    """
    task, split = Task(task), Split(split)
    env_params = env_params or Theta()
    ood = split == Split.OOD
    if task == Task.PICK_PLACE:
        carrot = Pose2(*PP_CARROT.sample(rng))
        bowl = Pose2(*(PP_BOWL_OOD.sample(rng) if ood else PP_BOWL.sample(rng)))
        goal = GoalSpec(task, target_id=0, container_id=1, r_succ=R_SUCC)
        return make_state(PP_SPECS, (carrot, bowl), goal, env_params)

    if task == Task.REVEAL_PICK:
        bx, by = RP_BLOCK.sample(rng)
        block = Pose2(bx, by)
        layer = (0, 1, 2)
        if ood:
            cx = bx + rng.uniform(-RP_CUP_OFFSET, RP_CUP_OFFSET)
            cy = by + rng.uniform(-RP_CUP_OFFSET, RP_CUP_OFFSET)
            cup = Pose2(cx, cy)
            if rng.uniform() < nesting_prob:
                box = Pose2(
                    cx + rng.uniform(-RP_BOX_OFFSET, RP_BOX_OFFSET),
                    cy + rng.uniform(-RP_BOX_OFFSET, RP_BOX_OFFSET),
                )
            else:
                box = Pose2(*RP_PARK[2].sample(rng))
        else:
            cup = Pose2(*RP_PARK[1].sample(rng))
            box = Pose2(*RP_PARK[2].sample(rng))
        goal = GoalSpec(task, target_id=0, r_succ=R_SUCC, serve=RP_SERVE)
        return make_state(RP_SPECS, (block, cup, box), goal, env_params, layer)

    if task == Task.ROTATE_PLACE:
        x, y = RT_TOOL.sample(rng)
        if ood:
            theta = rng.uniform(*RT_THETA_OOD) * rng.choice([-1.0, 1.0])
        else:
            theta = rng.uniform(-RT_THETA_IN, RT_THETA_IN)
        goal = GoalSpec(
            task, target_id=0, r_succ=R_SUCC, theta_lo=RT_BAND[0], theta_hi=RT_BAND[1], serve=RT_SLOT
        )
        return make_state(RT_SPECS, (Pose2(x, y, theta), RT_RACK), goal, env_params)

    instruction = int(rng.integers(2))
    items = {i: Pose2(*MT_PLATES[i].sample(rng)) for i in (0, 1)}
    if ood:
        item = items[instruction]
        lid = Pose2(
            item.x + rng.uniform(-MT_LID_OFFSET, MT_LID_OFFSET),
            item.y + rng.uniform(-MT_LID_OFFSET, MT_LID_OFFSET),
        )
    else:
        lid = Pose2(*MT_LID.sample(rng))
    other = items[1 - instruction]
    goal = GoalSpec(
        task,
        target_id=instruction,
        r_succ=R_SUCC,
        serve=MT_SERVE,
        instruction=instruction,
        untouched=((1 - instruction, other.x, other.y),),
    )
    return make_state(MT_SPECS, (items[0], items[1], lid), goal, env_params)


def needs_reduction(state: WorldState) -> bool:
    """Whether the scene is outside the anchor region of its task."""
    goal = state.goal
    if goal.task == Task.PICK_PLACE:
        bowl = state.poses[goal.container_id]
        return PP_BOWL.distance(bowl.x, bowl.y) > PP_ANCHOR_TOL
    if goal.task == Task.ROTATE_PLACE:
        theta = state.poses[goal.target_id].theta
        return not (goal.theta_lo <= theta <= goal.theta_hi)
    return goal.target_id in state.covered_by


def park_position(task: Task, obj: int) -> tuple[float, float]:
    """Where the scripted rearrangement puts an occluder out of the way."""
    if task == Task.REVEAL_PICK:
        return RP_PARK[obj].x, RP_PARK[obj].y
    if task == Task.MULTI_TASK:
        return MT_LID.x, MT_LID.y
    raise ValueError(f"task {task} has no park positions")


def shift_group(task: Task) -> tuple[int, ...]:
    """Objects displaced together when building positionally shifted scenes."""
    return {
        Task.PICK_PLACE: (1,),
        Task.REVEAL_PICK: (0, 1, 2),
        Task.ROTATE_PLACE: (0,),
        Task.MULTI_TASK: (2,),
    }[Task(task)]


def shift_objects(state: WorldState, ids, offset) -> Optional[WorldState]:
    """Translate ``ids`` by ``offset``; None if any would leave the workspace."""
    poses = list(state.poses)
    dx, dy = offset
    for i in ids:
        x, y = poses[i].x + dx, poses[i].y + dy
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            return None
        poses[i] = Pose2(x, y, poses[i].theta)
    goal = state.goal
    untouched = tuple(
        (oid, poses[oid].x, poses[oid].y) if oid in ids else (oid, x0, y0) for oid, x0, y0 in goal.untouched
    )
    out = state.with_poses(poses)
    return out.replace(goal=dataclasses.replace(goal, untouched=untouched))


def is_valid_ood(state: WorldState) -> bool:
    """Whether a state matches the structure of the task's OOD sampler."""
    task = state.task
    p = state.poses
    if task == Task.PICK_PLACE:
        return PP_BOWL_OOD.contains(p[1].x, p[1].y) and PP_CARROT.distance(p[0].x, p[0].y) <= PP_CARROT.half * np.sqrt(2)
    if task == Task.REVEAL_PICK:
        if not RP_BLOCK.contains(p[0].x, p[0].y):
            return False
        if state.covered_by.get(0) != 1:
            return False
        # the box is either parked or stacked on the cup
        parked = RP_PARK[2].distance(p[2].x, p[2].y) <= RP_PARK[2].half * np.sqrt(2)
        return parked or state.covered_by.get(1) == 2
    if task == Task.ROTATE_PLACE:
        t = abs(p[0].theta)
        return RT_TOOL.contains(p[0].x, p[0].y) and RT_THETA_OOD[0] <= t <= RT_THETA_OOD[1]
    instructed = state.goal.instruction
    other = 1 - instructed
    return state.covered_by.get(instructed) == 2 and other not in state.covered_by
