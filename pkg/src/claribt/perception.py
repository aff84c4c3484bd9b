"""Simulated detection and the frame registry.

Detections are grasp points of visible objects. The registry names one frame
per detected object: a lone instance of a category gets the bare category
name, multiple instances get indexed names assigned distance-ascending from
the robot when the ambiguity first appears, and the indices then stick to
their instances across updates. An operator resolution maps the bare name to
one chosen instance and survives the object being carried by the arm.
"""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bt import BASE_FRAME, Blackboard
from .config import Config, DEFAULT_CONFIG
from .geometry import dist, vec3
from .world import WorldState, grasp_point

logger = logging.getLogger(__name__)


class PerceptionError(Exception):
    pass


class FrameUnresolvable(PerceptionError):
    """A bare category name matched several instances; somebody must choose."""

    def __init__(self, category: str):
        super().__init__(f"frame {category!r} is ambiguous")
        self.category = category


class UnknownFrame(PerceptionError):
    def __init__(self, name: str):
        super().__init__(f"no frame named {name!r}")
        self.name = name


class ResolutionVanished(PerceptionError):
    """The chosen instance disappeared before the resolution could be applied."""


@dataclass(frozen=True)
class Detection:
    instance_id: str
    category: str
    position: tuple[float, float, float]  # grasp point
    stamp: float


@dataclass(frozen=True)
class FrameEntry:
    name: str
    instance_id: Optional[str]  # None only for the robot base frame
    category: str
    translation: tuple[float, float, float]


@dataclass(frozen=True)
class FrameRegistry:
    """Frame name -> entry, plus per-category instance counts and resolutions.

    counts include a held (undetected) instance so ambiguity does not blink
    off while the robot carries the chosen object.
    """

    entries: dict[str, FrameEntry] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    resolved: dict[str, str] = field(default_factory=dict)

    def instances_of(self, category: str) -> list[FrameEntry]:
        return [e for e in self.entries.values() if e.category == category]

    def entry_for_instance(self, instance_id: str) -> Optional[FrameEntry]:
        for entry in self.entries.values():
            if entry.instance_id == instance_id:
                return entry
        return None

    def snapshot(self) -> list[dict]:
        return [
            {
                "name": e.name,
                "instance": e.instance_id,
                "category": e.category,
                "position": list(e.translation),
            }
            for e in self.entries.values()
        ]


def detect(
    world: WorldState,
    halted: bool = False,
    config: Config | None = None,
    rng: random.Random | None = None,
) -> Optional[list[Detection]]:
    """Observe the scene; None when halted (registry must stay untouched).

    The held object is excluded (it sits in the gripper, not on the table) and
    objects outside the camera field are not seen. Optional seeded jitter
    perturbs x/y.
    """
    if halted:
        return None
    cfg = config or world.config
    out = []
    for obj in world.objects.values():
        if obj.id == world.held:
            continue
        point = grasp_point(obj)
        if abs(point[0]) > cfg.camera_x_limit or not (
            cfg.camera_y_min <= point[1] <= cfg.camera_y_max
        ):
            continue
        if cfg.detection_jitter > 0 and rng is not None:
            point = point + vec3(
                rng.gauss(0.0, cfg.detection_jitter),
                rng.gauss(0.0, cfg.detection_jitter),
                0.0,
            )
        out.append(
            Detection(
                instance_id=obj.id,
                category=obj.category,
                position=(float(point[0]), float(point[1]), float(point[2])),
                stamp=world.clock,
            )
        )
    return out


_INDEXED = re.compile(r"^(?P<cat>.+)_(?P<idx>[0-9]+)$")


def _origin_distance(position) -> float:
    return dist(position, (0.0, 0.0, 0.0))


def _match_category(
    prev_entries: list[FrameEntry],
    dets: list[Detection],
    config: Config,
    warnings: list[str],
) -> dict[str, Optional[FrameEntry]]:
    """Greedy nearest-neighbour association, smallest displacement first.

    Returns det instance_id -> matched previous entry (or None for newcomers).
    Ties closer than the association threshold are resolved by the lower
    previous instance id, then the lower detection id, and logged.
    """
    pairs = []
    for entry in prev_entries:
        for det in dets:
            d = dist(entry.translation, det.position)
            pairs.append((d, entry.instance_id, det.instance_id, entry, det))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    matched: dict[str, Optional[FrameEntry]] = {}
    used_prev: set[str] = set()
    used_det: set[str] = set()
    displacements = []
    for i, (d, prev_id, det_id, entry, det) in enumerate(pairs):
        if prev_id in used_prev or det_id in used_det:
            continue
        for d2, p2, dd2, _, _ in pairs[i + 1 :]:
            if abs(d2 - d) >= config.association_tie:
                break  # sorted by displacement, no further ties possible
            if p2 in used_prev or dd2 in used_det:
                continue
            if p2 == prev_id or dd2 == det_id:
                msg = (
                    f"association ambiguous for {entry.category!r}: displacements "
                    f"{d:.4f} and {d2:.4f} within {config.association_tie} m; "
                    f"kept lower instance id"
                )
                warnings.append(msg)
                logger.warning(msg)
                break
        matched[det_id] = entry
        used_prev.add(prev_id)
        used_det.add(det_id)
        displacements.append(d)
    for det in dets:
        matched.setdefault(det.instance_id, None)
    return matched


def update_registry(
    prev: FrameRegistry,
    dets: Sequence[Detection],
    held: Optional[tuple[str, str]] = None,
    config: Config = DEFAULT_CONFIG,
    warnings: Optional[list[str]] = None,
) -> FrameRegistry:
    """Fold a detection batch into a new registry (the old one is untouched).

    held is the (instance_id, category) currently in the gripper, if any; it
    counts toward its category but has no frame while carried.
    """
    if warnings is None:
        warnings = []
    by_category: dict[str, list[Detection]] = {}
    for det in dets:
        by_category.setdefault(det.category, []).append(det)
    held_id, held_cat = (held if held is not None else (None, None))
    if held_cat is not None:
        by_category.setdefault(held_cat, [])

    entries: dict[str, FrameEntry] = {}
    counts: dict[str, int] = {}
    resolved: dict[str, str] = {}
    all_displacements: list[float] = []

    for category in by_category:
        cat_dets = by_category[category]
        prev_entries = [e for e in prev.entries.values() if e.category == category]
        match = _match_category(prev_entries, cat_dets, config, warnings)
        for det in cat_dets:
            m = match[det.instance_id]
            if m is not None:
                all_displacements.append(dist(m.translation, det.position))

        count = len(cat_dets) + (1 if held_cat == category else 0)
        counts[category] = count
        res_id = prev.resolved.get(category)
        visible_ids = {d.instance_id for d in cat_dets}
        if res_id is not None and res_id not in visible_ids and res_id != held_id:
            res_id = None  # the chosen instance is truly gone
        if count <= 1:
            res_id = None  # resolution is redundant once the scene is unambiguous

        names: dict[str, str] = {}
        if count == 1 and cat_dets:
            names[cat_dets[0].instance_id] = category
        elif count >= 2:
            if res_id is not None and res_id in visible_ids:
                names[res_id] = category
            carried: set[str] = set()
            fresh: list[Detection] = []
            for det in cat_dets:
                if det.instance_id in names:
                    continue
                prev_entry = match[det.instance_id]
                prev_name = prev_entry.name if prev_entry is not None else None
                m2 = _INDEXED.match(prev_name) if prev_name else None
                if m2 is not None and m2.group("cat") == category and prev_name not in carried:
                    names[det.instance_id] = prev_name
                    carried.add(prev_name)
                else:
                    fresh.append(det)
            used_indices = {
                int(_INDEXED.match(n).group("idx")) for n in carried
            }
            fresh.sort(key=lambda d: (_origin_distance(d.position), d.instance_id))
            next_idx = 1
            for det in fresh:
                while next_idx in used_indices:
                    next_idx += 1
                names[det.instance_id] = f"{category}_{next_idx}"
                used_indices.add(next_idx)

        if res_id is not None:
            resolved[category] = res_id
        for det in cat_dets:
            name = names[det.instance_id]
            entries[name] = FrameEntry(
                name=name,
                instance_id=det.instance_id,
                category=category,
                translation=det.position,
            )

    moved = sum(1 for d in all_displacements if d > config.multi_move_warning)
    if moved >= 2:
        msg = f"{moved} objects moved more than {config.multi_move_warning} m in one halt interval"
        warnings.append(msg)
        logger.warning(msg)

    ordered = dict(sorted(entries.items()))
    return FrameRegistry(entries=ordered, counts=counts, resolved=resolved)


def resolve_frame(reg: FrameRegistry, name: str, bb: Blackboard) -> FrameEntry:
    """Look a frame up; on ambiguity push a query and raise FrameUnresolvable.

    The push is the only mutation this function ever performs, and it is
    idempotent. A resolved category whose instance is temporarily undetected
    (carried by the arm) raises UnknownFrame without queueing anything.
    """
    if name == BASE_FRAME:
        return FrameEntry(BASE_FRAME, instance_id=None, category=BASE_FRAME, translation=(0.0, 0.0, 0.0))
    entry = reg.entries.get(name)
    if entry is not None:
        return entry
    if reg.counts.get(name, 0) >= 2 and name not in reg.resolved:
        bb.enqueue_query(name)
        raise FrameUnresolvable(name)
    raise UnknownFrame(name)
