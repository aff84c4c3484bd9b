"""Kinematics-free tabletop world: scene objects, a single arm, timed actions.

The arm is a gripper plus an end-effector point; pick and release take a
fixed virtual duration and apply their effects exactly once when the clock
crosses the finish time, no matter how the elapsed time is partitioned into
step_world calls. Release positions get a seeded uniform noise so repeated
runs with one seed reproduce byte-identical logs.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .geometry import dist, dist_xy, uniform_ball, vec3, xyz

logger = logging.getLogger(__name__)

PLACE = "place"
DROP = "drop"
RELEASE_MODES = (PLACE, DROP)

# FrameResolver maps a frame name to (instance_id | None, translation).
FrameResolver = Callable[[str], tuple[Optional[str], np.ndarray]]


class Gripper(Enum):
    OPEN = "open"
    CLOSED = "closed"


class WorldError(Exception):
    pass


class PreconditionError(WorldError):
    """An action's physical precondition does not hold."""


class BusyArmError(WorldError):
    """A new action was requested while another is still in progress."""


class OutOfWorkspaceError(WorldError):
    pass


class NothingHeldError(PreconditionError):
    pass


@dataclass
class SceneObject:
    id: str
    category: str
    position: np.ndarray
    footprint_radius: float = 0.03

    def __post_init__(self):
        self.position = vec3(self.position)
        if self.position[2] < 0:
            raise ValueError(f"object {self.id!r} below the table (z < 0)")
        if not self.id or not self.category:
            raise ValueError("objects need a non-empty id and category")
        if self.footprint_radius <= 0:
            raise ValueError(f"object {self.id!r} needs a positive footprint radius")


def grasp_point(obj: SceneObject) -> np.ndarray:
    """Category heuristic for where the gripper attaches.

    Bowls are gripped at the rim, offset by the footprint radius along +x;
    everything else at the centroid.
    """
    if obj.category == "bowl":
        return obj.position + vec3(obj.footprint_radius, 0.0, 0.0)
    return obj.position.copy()


def grasp_offset(category: str, footprint_radius: float) -> np.ndarray:
    if category == "bowl":
        return vec3(footprint_radius, 0.0, 0.0)
    return np.zeros(3)


@dataclass
class ActiveAction:
    """Progress record for the one manipulation the arm may run at a time."""

    kind: str  # "pick" or "release"
    node_label: Optional[str]
    started_at: float
    duration: float
    start_ee: np.ndarray
    target_ee: np.ndarray
    target_instance: Optional[str] = None  # pick
    mode: Optional[str] = None  # release
    frame_name: Optional[str] = None
    target_world: Optional[np.ndarray] = None  # release

    def progress(self, clock: float) -> float:
        if self.duration <= 0:
            return 1.0
        return min(1.0, max(0.0, (clock - self.started_at) / self.duration))


class WorldState:
    def __init__(
        self,
        objects: list[SceneObject],
        config: Config = DEFAULT_CONFIG,
        seed: int = 0,
    ):
        self.objects: dict[str, SceneObject] = {}
        for obj in objects:
            if obj.id in self.objects:
                raise ValueError(f"duplicate object id {obj.id!r}")
            self.objects[obj.id] = obj
        self.config = config
        self.gripper = Gripper.OPEN
        self.held: Optional[str] = None
        self.clock = 0.0
        self.ee_position = vec3(0.0, 0.0, 0.30)  # parked above the base
        self.active: Optional[ActiveAction] = None
        self.rng = random.Random(seed)

    # --- invariant-preserving mutators ---------------------------------------

    def set_held(self, instance_id: Optional[str]) -> None:
        """Keep `held implies gripper closed` true in one place."""
        self.held = instance_id
        if instance_id is not None:
            self.gripper = Gripper.CLOSED

    def open_gripper(self) -> None:
        if self.held is not None:
            raise PreconditionError("cannot open the gripper while holding an object")
        self.gripper = Gripper.OPEN

    def add_object(self, obj: SceneObject) -> None:
        if obj.id in self.objects:
            raise ValueError(f"duplicate object id {obj.id!r}")
        for other in self.objects.values():
            if dist_xy(obj.position, other.position) < obj.footprint_radius + other.footprint_radius:
                logger.warning(
                    "object %s overlaps footprint of %s; allowed", obj.id, other.id
                )
        self.objects[obj.id] = obj

    def remove_object(self, instance_id: str) -> SceneObject:
        obj = self.objects.pop(instance_id)
        if self.held == instance_id:
            self.held = None
        return obj

    def move_object(self, instance_id: str, position) -> None:
        self.objects[instance_id].position = vec3(position)

    def snapshot(self) -> dict:
        return {
            "objects": [
                {
                    "id": o.id,
                    "category": o.category,
                    "position": xyz(o.position),
                    "footprint_radius": o.footprint_radius,
                }
                for o in self.objects.values()
            ],
            "gripper": self.gripper.value,
            "held": self.held,
            "clock": round(self.clock, 9),
            "ee": xyz(self.ee_position),
        }


# --- scene files --------------------------------------------------------------


def scene_from_doc(doc) -> list[SceneObject]:
    if not isinstance(doc, list):
        raise ValueError("scene document must be a JSON list of objects")
    objects = []
    for i, entry in enumerate(doc):
        try:
            objects.append(
                SceneObject(
                    id=entry["id"],
                    category=entry["category"],
                    position=vec3(entry["position"]),
                    footprint_radius=float(entry.get("footprint_radius", 0.03)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"scene entry {i}: {exc}") from exc
    return objects


def scene_to_doc(objects: list[SceneObject]) -> list[dict]:
    return [
        {
            "id": o.id,
            "category": o.category,
            "position": xyz(o.position),
            "footprint_radius": o.footprint_radius,
        }
        for o in objects
    ]


# --- actions ------------------------------------------------------------------


def begin_pick(
    world: WorldState,
    frame_name: str,
    resolver: FrameResolver,
    node_label: Optional[str] = None,
) -> ActiveAction:
    """Start a timed pick of the object behind `frame_name`.

    The reach target is the believed grasp point (the frame translation), so a
    stale registry reaches where the object was last seen.
    """
    if world.active is not None:
        raise BusyArmError(f"arm busy with {world.active.kind}")
    if world.held is not None:
        raise PreconditionError("already holding an object")
    if world.gripper is not Gripper.OPEN:
        raise PreconditionError("gripper must be open to pick")
    instance_id, translation = resolver(frame_name)
    if instance_id is None or instance_id not in world.objects:
        raise PreconditionError(f"no graspable object behind frame {frame_name!r}")
    if dist_xy(translation, (0.0, 0.0, 0.0)) > world.config.workspace_radius:
        raise OutOfWorkspaceError(
            f"grasp point for {frame_name!r} outside the {world.config.workspace_radius} m workspace"
        )
    act = ActiveAction(
        kind="pick",
        node_label=node_label,
        started_at=world.clock,
        duration=world.config.pick_duration,
        start_ee=world.ee_position.copy(),
        target_ee=vec3(translation),
        target_instance=instance_id,
        frame_name=frame_name,
    )
    world.active = act
    return act


def begin_release(
    world: WorldState,
    target_pose,
    frame_name: str,
    mode: str,
    resolver: FrameResolver,
    node_label: Optional[str] = None,
) -> ActiveAction:
    """Start a timed place or drop of the held object at target_pose in frame_name."""
    if mode not in RELEASE_MODES:
        raise ValueError(f"unknown release mode {mode!r}")
    if world.active is not None:
        raise BusyArmError(f"arm busy with {world.active.kind}")
    if world.held is None or world.gripper is not Gripper.CLOSED:
        raise NothingHeldError("release requires a held object")
    _, translation = resolver(frame_name)
    target_world = vec3(translation) + vec3(target_pose)
    act = ActiveAction(
        kind="release",
        node_label=node_label,
        started_at=world.clock,
        duration=world.config.release_duration,
        start_ee=world.ee_position.copy(),
        target_ee=target_world.copy(),
        mode=mode,
        frame_name=frame_name,
        target_world=target_world,
    )
    world.active = act
    return act


def step_world(world: WorldState, dt: float) -> Optional[dict]:
    """Advance the virtual clock by dt and progress any active action.

    Returns a completion record when the active action finishes during this
    step, else None. Non-held objects never move here; a held object tracks
    the end-effector.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    world.clock += dt
    act = world.active
    completion = None
    if act is not None:
        t = act.progress(world.clock)
        world.ee_position = act.start_ee + (act.target_ee - act.start_ee) * t
        if t >= 1.0:
            completion = _complete(world, act)
            world.active = None
    if world.held is not None and world.held in world.objects:
        obj = world.objects[world.held]
        obj.position = world.ee_position - grasp_offset(obj.category, obj.footprint_radius)
        if obj.position[2] < 0:
            obj.position[2] = 0.0
    return completion


def _complete(world: WorldState, act: ActiveAction) -> dict:
    record = {"kind": act.kind, "label": act.node_label, "outcome": "done"}
    if act.kind == "pick":
        target = act.target_instance
        if target is not None and target in world.objects:
            world.set_held(target)
            record["instance"] = target
        else:
            # object vanished mid-reach; close on air, re-detection sorts it out
            world.gripper = Gripper.CLOSED
            record["outcome"] = "missed"
            logger.warning("pick finished but target %r is gone", target)
    else:
        radius = world.config.place_noise if act.mode == PLACE else world.config.drop_noise
        noise = uniform_ball(world.rng, radius)
        held = world.held
        if held is not None and held in world.objects:
            obj = world.objects[held]
            landing = act.target_world + noise
            obj.position = landing - grasp_offset(obj.category, obj.footprint_radius)
            if obj.position[2] < 0:
                obj.position[2] = 0.0
            record["instance"] = held
            record["position"] = xyz(obj.position)
        else:
            record["outcome"] = "empty"
        world.held = None
        world.gripper = Gripper.OPEN
    return record


def check_at_pose(
    world: WorldState,
    category: str,
    target_pose,
    frame_name: str,
    mode: str,
    resolver: FrameResolver,
) -> bool:
    """Pure read: is the believed object of `category` at target_pose in frame_name?

    The reference frame is resolved before the object's own frame, so with two
    unresolvable names the frame's category is surfaced first. Place mode
    checks a 3D ball around the target; drop mode checks a vertical cylinder:
    horizontal distance to the target plus height above the frame origin.
    """
    if mode not in RELEASE_MODES:
        raise ValueError(f"unknown release mode {mode!r}")
    _, frame_translation = resolver(frame_name)
    _, obj_point = resolver(category)
    target_world = vec3(frame_translation) + vec3(target_pose)
    if mode == PLACE:
        return dist(obj_point, target_world) <= world.config.place_tolerance
    height = float(obj_point[2] - frame_translation[2])
    return (
        dist_xy(obj_point, target_world) <= world.config.drop_radius
        and 0.0 <= height <= world.config.drop_height
    )
