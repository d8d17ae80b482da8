"""Deterministic tabletop simulator.

A 12x12 grid over the unit workspace [0,1]^2. Objects occupy single
cells; actions are parameterized pick / place / sweep primitives; the
oracle demonstrator produces trajectories consistent with a hidden
preference profile. Everything is seeded and bit-reproducible: the same
(task, profile, seed) triple always yields identical scenes and demos.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .catalog import Catalog, default_catalog
from .util import stable_seed

logger = logging.getLogger(__name__)

GRID_W = 12
GRID_H = 12
M_WAYPOINTS = 8
GRASP_RADIUS = 0.09
WORKSPACE_DIAGONAL = math.sqrt(2.0)

# Perpendicular clearance used by the demonstrator when an avoid-object
# blocks a sweep. The value is large on purpose: with M=8 waypoints and
# diagonal normalization, a detour of height c shifts the mean waypoint
# distance by only ~0.43*c/sqrt(2), and straight-vs-detour pairs must
# clear the 0.2 behavior-change threshold (0.8 -> ~0.24).
SWEEP_CLEARANCE = 0.8


class WorldError(RuntimeError):
    """Invalid action or scene state."""


class GenerationError(WorldError):
    """Scene generator could not place objects."""


class DemoUnavailableError(WorldError):
    """No profile-consistent demonstration exists for the scene."""


# ---------------------------------------------------------------------------
# scene primitives


@dataclass(frozen=True)
class SceneObject:
    uid: int
    kind: str
    texture: str
    center: tuple[float, float]
    cell: tuple[int, int]  # (row, col)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    objects: tuple[SceneObject, ...]
    grid_dims: tuple[int, int] = (GRID_W, GRID_H)
    held_object: int | None = None

    def object_by_uid(self, uid: int) -> SceneObject:
        for obj in self.objects:
            if obj.uid == uid:
                return obj
        raise WorldError(f"no object with uid {uid} in scene {self.scene_id}")

    def objects_of_kind(self, kind: str) -> list[SceneObject]:
        return [o for o in self.objects if o.kind == kind]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "grid_dims": list(self.grid_dims),
            "held_object": self.held_object,
            "objects": [
                {
                    "uid": o.uid,
                    "kind": o.kind,
                    "texture": o.texture,
                    "center": list(o.center),
                    "cell": list(o.cell),
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        return cls(
            scene_id=data["scene_id"],
            grid_dims=tuple(data["grid_dims"]),
            held_object=data["held_object"],
            objects=tuple(
                SceneObject(
                    uid=o["uid"],
                    kind=o["kind"],
                    texture=o["texture"],
                    center=tuple(o["center"]),
                    cell=tuple(o["cell"]),
                )
                for o in data["objects"]
            ),
        )


def cell_center(cell: tuple[int, int], grid_dims: tuple[int, int] = (GRID_W, GRID_H)):
    row, col = cell
    w, h = grid_dims
    return ((col + 0.5) / w, (row + 0.5) / h)


def cell_of(point: tuple[float, float], grid_dims: tuple[int, int] = (GRID_W, GRID_H)):
    w, h = grid_dims
    col = min(int(point[0] * w), w - 1)
    row = min(int(point[1] * h), h - 1)
    return (row, col)


def occupancy(scene: Scene) -> np.ndarray:
    """Binary (H, W) grid with a 1 wherever any object sits."""
    w, h = scene.grid_dims
    grid = np.zeros((h, w), dtype=np.int8)
    for obj in scene.objects:
        grid[obj.cell[0], obj.cell[1]] = 1
    return grid


def validate_scene(scene: Scene) -> None:
    """Generation-time invariants: cells in bounds, unique, centers inside."""
    w, h = scene.grid_dims
    seen: set[tuple[int, int]] = set()
    for obj in scene.objects:
        row, col = obj.cell
        if not (0 <= row < h and 0 <= col < w):
            raise GenerationError(f"object {obj.uid} cell {obj.cell} out of bounds")
        if obj.cell in seen:
            raise GenerationError(f"cell collision at {obj.cell}")
        seen.add(obj.cell)
        if cell_of(obj.center, scene.grid_dims) != obj.cell:
            raise GenerationError(f"object {obj.uid} center {obj.center} outside its cell")


# ---------------------------------------------------------------------------
# actions and trajectories


@dataclass(frozen=True)
class Pick:
    target: tuple[float, float]


@dataclass(frozen=True)
class Place:
    target: tuple[float, float]


@dataclass(frozen=True)
class Sweep:
    start: tuple[float, float]
    end: tuple[float, float]
    via: tuple[float, float]


Action = Pick | Place | Sweep


def action_to_dict(action: Action) -> dict:
    if isinstance(action, Pick):
        return {"type": "pick", "target": list(action.target)}
    if isinstance(action, Place):
        return {"type": "place", "target": list(action.target)}
    return {
        "type": "sweep",
        "start": list(action.start),
        "end": list(action.end),
        "via": list(action.via),
    }


def action_from_dict(data: dict) -> Action:
    t = data["type"]
    if t == "pick":
        return Pick(target=tuple(data["target"]))
    if t == "place":
        return Place(target=tuple(data["target"]))
    if t == "sweep":
        return Sweep(start=tuple(data["start"]), end=tuple(data["end"]), via=tuple(data["via"]))
    raise WorldError(f"unknown action type {t!r}")


def action_points(action: Action) -> list[tuple[float, float]]:
    """Ordered path polyline for one action."""
    if isinstance(action, (Pick, Place)):
        return [action.target]
    return [action.start, action.via, action.end]


def flatten_action(action: Action) -> np.ndarray:
    """Action parameters as the policy regression target."""
    return np.asarray([c for pt in action_points(action) for c in pt], dtype=float)


def _check_in_bounds(action: Action) -> None:
    for x, y in action_points(action):
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise WorldError(f"action point ({x}, {y}) outside unit workspace")


def resample_polyline(points: Sequence[tuple[float, float]], m: int = M_WAYPOINTS) -> np.ndarray:
    """Resample a polyline to m points uniformly spaced by arc length."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 1:
        return np.tile(pts[0], (m, 1))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total == 0.0:
        return np.tile(pts[0], (m, 1))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, m)
    out = np.empty((m, 2))
    for i, s in enumerate(targets):
        j = int(np.searchsorted(cum, s, side="right") - 1)
        j = min(j, len(seg) - 1)
        t = 0.0 if seg[j] == 0 else (s - cum[j]) / seg[j]
        out[i] = pts[j] + t * (pts[j + 1] - pts[j])
    return out


@dataclass(frozen=True)
class Trajectory:
    initial: Scene
    actions: tuple[Action, ...]
    waypoints: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts: list[tuple[float, float]] = []
        for action in self.actions:
            pts.extend(action_points(action))
        object.__setattr__(self, "waypoints", resample_polyline(pts))

    def to_dict(self) -> dict:
        return {
            "initial": self.initial.to_dict(),
            "actions": [action_to_dict(a) for a in self.actions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        return cls(
            initial=Scene.from_dict(data["initial"]),
            actions=tuple(action_from_dict(a) for a in data["actions"]),
        )


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """Mean waypoint distance normalized by the workspace diagonal."""
    diffs = np.linalg.norm(a.waypoints - b.waypoints, axis=1)
    return float(diffs.mean() / WORKSPACE_DIAGONAL)


# ---------------------------------------------------------------------------
# tasks and preference profiles


@dataclass(frozen=True)
class ObjectPool:
    """Kind/texture pools a scene object is drawn from."""

    kinds: tuple[str, ...]
    textures: tuple[str, ...]


@dataclass(frozen=True)
class TaskSpec:
    """One task family instance with its scene generator parameters.

    For pick/place the target pool is the manipulated/destination object;
    for sweep it is the swept object. Pools are already resolved for one
    data split (the scenario loader builds separate train/test variants).
    """

    id: str
    family: str  # pick | place | sweep
    utterance: str
    target: ObjectPool
    distractor: ObjectPool
    target_slots: tuple[tuple[int, int], ...] = ((6, 1), (6, 4), (6, 7), (6, 10))
    distractor_slots: tuple[tuple[int, int], ...] = ((2, 2), (2, 5), (2, 8))
    trigger: ObjectPool | None = None
    absent_trigger: ObjectPool | None = None
    companion_kind: str | None = None
    held: tuple[str, str] | None = None  # place family: (kind, texture) in gripper
    held_cell: tuple[int, int] = (11, 6)
    goal_kind: str | None = None  # sweep family
    goal_texture: str | None = None
    swept_cell: tuple[int, int] = (10, 1)
    goal_cell: tuple[int, int] = (10, 10)
    obstacle_slots: tuple[tuple[int, int], ...] = ((10, 4), (10, 5), (10, 6), (10, 7))

    def __post_init__(self):
        if not self.utterance:
            raise WorldError("task utterance must be non-empty")
        if self.family not in ("pick", "place", "sweep"):
            raise WorldError(f"unknown task family {self.family!r}")
        if self.family == "sweep" and self.goal_kind is None:
            raise WorldError("sweep task needs a goal_kind")
        if self.family == "place" and self.held is None:
            raise WorldError("place task needs a held object")


@dataclass(frozen=True)
class PreferenceProfile:
    """The hidden 'true' preference the oracle demonstrator encodes."""

    name: str
    allowed_kinds: frozenset[str]
    allowed_textures: frozenset[str] | None = None  # None = any texture
    avoid_kinds: frozenset[str] = frozenset()
    # True: avoid-object triggers when its texture IS in allowed_textures
    # (hot stove = red). False: triggers when its texture is NOT in the
    # set (rug is only sweepable when wooden/granite).
    avoid_requires_texture_match: bool = True

    def __post_init__(self):
        if not self.allowed_kinds:
            raise WorldError(f"profile {self.name!r} has no allowed kinds")

    def allows(self, kind: str, texture: str) -> bool:
        if kind not in self.allowed_kinds:
            return False
        return self.allowed_textures is None or texture in self.allowed_textures

    def is_avoided(self, kind: str, texture: str) -> bool:
        if kind not in self.avoid_kinds:
            return False
        if self.allowed_textures is None:
            return True
        return (texture in self.allowed_textures) == self.avoid_requires_texture_match


def _validate_names(catalog: Catalog, kinds: Iterable[str], textures: Iterable[str]) -> None:
    for name in kinds:
        catalog.kind_id(name)
    for name in textures:
        catalog.texture_id(name)


# ---------------------------------------------------------------------------
# scene sampling


def _choice(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


def sample_scene(
    task: TaskSpec,
    profile: PreferenceProfile,
    feature_present: bool,
    rng_seed: int,
    catalog: Catalog | None = None,
) -> Scene:
    """Sample a scene: target + one unrelated distractor, plus the
    preference-triggering object iff feature_present."""
    catalog = catalog or default_catalog()
    rng = np.random.default_rng(stable_seed("scene", task.id, profile.name, feature_present, rng_seed))
    for attempt in range(8):
        try:
            scene = _build_scene(task, profile, feature_present, rng_seed, rng, catalog)
            validate_scene(scene)
            return scene
        except GenerationError:
            if attempt == 7:
                raise
    raise GenerationError(f"could not generate scene for task {task.id}")


def _build_scene(task, profile, feature_present, rng_seed, rng, catalog) -> Scene:
    objects: list[SceneObject] = []
    uid = 0

    def add(kind: str, texture: str, cell: tuple[int, int]) -> SceneObject:
        nonlocal uid
        uid += 1
        _validate_names(catalog, [kind], [texture])
        obj = SceneObject(uid=uid, kind=kind, texture=texture, center=cell_center(cell), cell=cell)
        objects.append(obj)
        return obj

    held_uid = None
    if task.family in ("pick", "place"):
        slots = list(task.target_slots)
        target_slot = _choice(rng, slots)
        slots.remove(target_slot)
        target = add(_choice(rng, task.target.kinds), _choice(rng, task.target.textures), target_slot)
        if not profile.allows(target.kind, target.texture):
            raise GenerationError(
                f"target pool of {task.id} produced {target.texture} {target.kind}, "
                f"inconsistent with profile {profile.name}"
            )
        if feature_present and task.trigger is not None:
            trig_slot = _choice(rng, slots)
            add(_choice(rng, task.trigger.kinds), _choice(rng, task.trigger.textures), trig_slot)
        if task.companion_kind is not None:
            comp_cell = (target_slot[0] - 1, target_slot[1])
            add(task.companion_kind, "silver", comp_cell)
        if task.family == "place":
            held = add(task.held[0], task.held[1], task.held_cell)
            held_uid = held.uid
    elif task.family == "sweep":
        add(_choice(rng, task.target.kinds), _choice(rng, task.target.textures), task.swept_cell)
        add(task.goal_kind, task.goal_texture or "gray", task.goal_cell)
        obstacle_pool = task.trigger if feature_present else task.absent_trigger
        if obstacle_pool is not None:
            slot = _choice(rng, task.obstacle_slots)
            add(_choice(rng, obstacle_pool.kinds), _choice(rng, obstacle_pool.textures), slot)
    else:
        raise GenerationError(f"unknown family {task.family}")

    dist_slot = _choice(rng, task.distractor_slots)
    add(_choice(rng, task.distractor.kinds), _choice(rng, task.distractor.textures), dist_slot)

    tag = "present" if feature_present else "absent"
    return Scene(
        scene_id=f"{task.id}:{rng_seed}:{tag}",
        objects=tuple(objects),
        grid_dims=(GRID_W, GRID_H),
        held_object=held_uid,
    )


# ---------------------------------------------------------------------------
# transition


def step(scene: Scene, action: Action) -> Scene:
    """Apply one action. Deterministic; returns a new scene."""
    _check_in_bounds(action)
    if isinstance(action, Pick):
        if scene.held_object is not None:
            raise WorldError("pick with an already-held object")
        target = _nearest_object(scene, action.target)
        if target is None:
            logger.warning("pick no-op: nothing within grasp radius of %s", action.target)
            return scene
        return replace(scene, held_object=target.uid)
    if isinstance(action, Place):
        if scene.held_object is None:
            raise WorldError("place with an empty gripper")
        held = scene.object_by_uid(scene.held_object)
        moved = replace(held, center=action.target, cell=cell_of(action.target, scene.grid_dims))
        new_objects = tuple(moved if o.uid == held.uid else o for o in scene.objects)
        return replace(scene, objects=new_objects, held_object=None)
    if isinstance(action, Sweep):
        swept = _nearest_object(scene, action.start)
        if swept is None:
            logger.warning("sweep no-op: nothing within grasp radius of %s", action.start)
            return scene
        moved = replace(swept, center=action.end, cell=cell_of(action.end, scene.grid_dims))
        new_objects = tuple(moved if o.uid == swept.uid else o for o in scene.objects)
        return replace(scene, objects=new_objects)
    raise WorldError(f"unknown action {action!r}")


def _nearest_object(scene: Scene, point: tuple[float, float]) -> SceneObject | None:
    best = None
    best_d = GRASP_RADIUS
    for obj in scene.objects:
        if obj.uid == scene.held_object:
            continue
        d = math.dist(obj.center, point)
        if d <= best_d:
            best, best_d = obj, d
    return best


# ---------------------------------------------------------------------------
# oracle demonstrator


def _point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _pick_place_target(scene: Scene, task: TaskSpec, profile: PreferenceProfile) -> SceneObject:
    candidates = [
        o
        for o in scene.objects
        if o.uid != scene.held_object
        and o.kind in task.target.kinds
        and profile.allows(o.kind, o.texture)
    ]
    if task.companion_kind is not None and len(candidates) > 1:
        companions = scene.objects_of_kind(task.companion_kind)
        adjacent = [
            c
            for c in candidates
            if any(
                max(abs(c.cell[0] - comp.cell[0]), abs(c.cell[1] - comp.cell[1])) <= 1
                for comp in companions
            )
        ]
        if adjacent:
            candidates = adjacent
    if not candidates:
        raise DemoUnavailableError(
            f"no profile-consistent target in scene {scene.scene_id} for profile {profile.name}"
        )
    candidates.sort(key=lambda o: (o.cell[0], o.cell[1], o.uid))
    return candidates[0]


def oracle_demo(scene: Scene, task: TaskSpec, profile: PreferenceProfile) -> Trajectory:
    """Scripted expert demonstration consistent with the hidden profile."""
    if task.family == "pick":
        target = _pick_place_target(scene, task, profile)
        return Trajectory(initial=scene, actions=(Pick(target=target.center),))
    if task.family == "place":
        if scene.held_object is None:
            raise DemoUnavailableError(f"place demo needs a held object in {scene.scene_id}")
        surface = _pick_place_target(scene, task, profile)
        return Trajectory(initial=scene, actions=(Place(target=surface.center),))
    if task.family == "sweep":
        swept = next((o for o in scene.objects if o.kind in task.target.kinds), None)
        goal = next((o for o in scene.objects if o.kind == task.goal_kind), None)
        if swept is None or goal is None:
            raise DemoUnavailableError(f"sweep demo needs swept+goal objects in {scene.scene_id}")
        start, end = swept.center, goal.center
        hazards = [
            o
            for o in scene.objects
            if o.uid not in (swept.uid, goal.uid)
            and profile.is_avoided(o.kind, o.texture)
            and _point_segment_distance(o.center, start, end) < SWEEP_CLEARANCE
        ]
        mid = ((start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0)
        if hazards:
            if mid[1] - SWEEP_CLEARANCE >= 0.0:
                via = (mid[0], mid[1] - SWEEP_CLEARANCE)
            elif mid[1] + SWEEP_CLEARANCE <= 1.0:
                via = (mid[0], mid[1] + SWEEP_CLEARANCE)
            else:
                raise DemoUnavailableError(
                    f"no room for a clearance-{SWEEP_CLEARANCE} detour in {scene.scene_id}"
                )
        else:
            via = mid
        return Trajectory(initial=scene, actions=(Sweep(start=start, end=end, via=via),))
    raise DemoUnavailableError(f"unknown family {task.family}")
