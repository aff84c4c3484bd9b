"""Synthetic demonstration sets for tests and fixtures.

Each generated demo picks one object and releases it at a fixed offset in a
chosen reference frame, with gaussian noise on the release point in world
coordinates. Because every per-frame entry is derived from the same noisy
world point, the entries stay mutually consistent and only the frame-relative
scatter differs: tight in the intended frame, wide in the others when the
frame object moves between demos.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .bt import BASE_FRAME
from .config import Config, DEFAULT_CONFIG
from .geometry import dist_xy, vec3, xyz
from .lfd import DROP, PICK, DemoAction, Demonstration
from .world import SceneObject, grasp_offset, grasp_point

BOWL_RADIUS = 0.08


@dataclass
class DemoSpec:
    moved_category: str = "banana"
    frame_category: str = "bowl"  # category of the intended reference, or "base"
    mode: str = DROP
    target_in_frame: tuple = (0.0, 0.0, 0.12)
    noise: float = 0.01  # sigma of the world-space release scatter
    demos: int = 3
    frame_spread: float = 0.10  # min pairwise move of the frame object across demos
    min_separation: float = 0.18


def sample_position(rng: random.Random, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """A tabletop point inside both the camera field and the reachable disc."""
    while True:
        x = rng.uniform(-0.45, 0.45)
        y = rng.uniform(0.20, 0.55)
        if dist_xy(vec3(x, y, 0.0), vec3(0.0, 0.0, 0.0)) <= config.workspace_radius - 0.05:
            return vec3(x, y, 0.0)


def _scene_object(category: str, index: int, position) -> SceneObject:
    radius = BOWL_RADIUS if category == "bowl" else 0.03
    return SceneObject(id=f"{category}_{index}", category=category, position=position, footprint_radius=radius)


def _poses_per_frame(ee_world, scene_positions: dict, held: str | None) -> dict:
    poses = {BASE_FRAME: tuple(xyz(ee_world))}
    for category, (position, radius) in scene_positions.items():
        if category == held:
            origin = vec3(ee_world)
        else:
            origin = vec3(position) + grasp_offset(category, radius)
        poses[category] = tuple(xyz(vec3(ee_world) - origin))
    return poses


def generate_demo_set(
    seed: int, spec: DemoSpec = DemoSpec(), config: Config = DEFAULT_CONFIG
) -> list[Demonstration]:
    rng = random.Random(seed)
    frame_positions: list[np.ndarray] = []
    demos: list[Demonstration] = []
    for _ in range(spec.demos):
        for _ in range(1000):
            frame_pos = sample_position(rng, config)
            if all(dist_xy(frame_pos, p) >= spec.frame_spread for p in frame_positions):
                break
        else:
            raise RuntimeError("could not spread the frame object; loosen the spec")
        frame_positions.append(frame_pos)

        for _ in range(1000):
            moved_pos = sample_position(rng, config)
            if dist_xy(moved_pos, frame_pos) >= spec.min_separation:
                break
        else:
            raise RuntimeError("could not separate the objects; loosen the spec")

        frame_obj = _scene_object(spec.frame_category, 1, frame_pos)
        moved_obj = _scene_object(spec.moved_category, 1, moved_pos)
        scene = [moved_obj, frame_obj]
        positions = {
            o.category: (vec3(o.position), o.footprint_radius) for o in scene
        }

        if spec.frame_category == BASE_FRAME:
            target_world = vec3(spec.target_in_frame)
        else:
            target_world = grasp_point(frame_obj) + vec3(spec.target_in_frame)
        noise = vec3(*(rng.gauss(0.0, spec.noise) for _ in range(3)))
        release_ee = target_world + noise

        pick_ee = grasp_point(moved_obj)
        actions = [
            DemoAction(PICK, spec.moved_category, _poses_per_frame(pick_ee, positions, held=None)),
            DemoAction(
                spec.mode,
                spec.moved_category,
                _poses_per_frame(release_ee, positions, held=spec.moved_category),
            ),
        ]
        # no z clamp: the final scene must match the replayed release exactly,
        # so keep target z comfortably above the table relative to the noise
        final_moved = release_ee - grasp_offset(moved_obj.category, moved_obj.footprint_radius)
        final_scene = [
            _scene_object(spec.moved_category, 1, final_moved),
            frame_obj,
        ]
        demos.append(Demonstration(scene, actions, final_scene))
    return demos
