"""Learning from demonstration: goal extraction, reference-frame inference,
demo grouping and the backchaining planner that emits a behavior tree.

A demonstrated release is summarized by its end-effector point expressed in
every available reference frame. Across at least three demonstrations the
frame whose samples cluster tightest is taken as the intended reference; if
even the best cluster is loose the robot base frame is used. Goals are the
end-of-demo placements of every object that moved, and each goal becomes a
condition-guarded subtree: a Fallback of the goal condition and a Sequence
that achieves the unmet preconditions before running the action.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bt import BASE_FRAME, BTNode, NodeKind, action, condition, fallback, sequence
from .config import Config, DEFAULT_CONFIG
from .geometry import centroid, dist, vec3, xyz
from .world import DROP, PLACE, SceneObject, grasp_offset, scene_from_doc, scene_to_doc

logger = logging.getLogger(__name__)

PICK = "pick"
DEMO_ACTION_KINDS = (PICK, PLACE, DROP)

_CONSISTENCY_TOL = 1e-9


class LfdError(Exception):
    pass


class FewerThanThreeDemos(LfdError):
    def __init__(self, count: int):
        super().__init__(
            f"frame inference needs at least three demonstrations, got {count}"
        )
        self.count = count


class DemoInconsistency(LfdError):
    pass


class PlannerError(LfdError):
    pass


@dataclass(frozen=True)
class DemoAction:
    kind: str  # pick / place / drop
    category: str  # picked object, or the held object for a release
    ee_pose_per_frame: dict  # frame label -> (x, y, z)

    def __post_init__(self):
        if self.kind not in DEMO_ACTION_KINDS:
            raise ValueError(f"unknown demo action kind {self.kind!r}")
        if BASE_FRAME not in self.ee_pose_per_frame:
            raise ValueError("every demo action needs a base-frame pose")


@dataclass(frozen=True)
class Demonstration:
    initial_scene: list[SceneObject]
    actions: list[DemoAction]
    final_scene: list[SceneObject]


@dataclass(frozen=True)
class GoalCondition:
    category: str
    target_pose: tuple[float, float, float]
    frame: str
    mode: str  # place / drop
    order: int = 0
    poses_by_frame: Optional[dict] = None  # per-demo samples, kept on drafts


# --- demo files ---------------------------------------------------------------


def demo_from_doc(doc: dict) -> Demonstration:
    actions = [
        DemoAction(
            kind=a["kind"],
            category=a["category"],
            ee_pose_per_frame={f: tuple(p) for f, p in a["ee_pose_per_frame"].items()},
        )
        for a in doc["actions"]
    ]
    return Demonstration(
        initial_scene=scene_from_doc(doc["initial_scene"]),
        actions=actions,
        final_scene=scene_from_doc(doc["final_scene"]),
    )


def demos_from_doc(doc: dict) -> list[Demonstration]:
    if not isinstance(doc, dict) or "demos" not in doc:
        raise ValueError('demo file must be an object with a "demos" list')
    return [demo_from_doc(d) for d in doc["demos"]]


def demo_to_doc(demo: Demonstration) -> dict:
    return {
        "initial_scene": scene_to_doc(demo.initial_scene),
        "actions": [
            {
                "kind": a.kind,
                "category": a.category,
                "ee_pose_per_frame": {f: list(p) for f, p in a.ee_pose_per_frame.items()},
            }
            for a in demo.actions
        ],
        "final_scene": scene_to_doc(demo.final_scene),
    }


def save_demos(demos: list[Demonstration], path) -> None:
    Path(path).write_text(json.dumps({"demos": [demo_to_doc(d) for d in demos]}, indent=2))


def load_demos(path) -> list[Demonstration]:
    demos = demos_from_doc(json.loads(Path(path).read_text()))
    for i, demo in enumerate(demos):
        try:
            validate_demo(demo)
        except DemoInconsistency as exc:
            raise DemoInconsistency(f"demo {i}: {exc}") from exc
    return demos


# --- validation by replay -----------------------------------------------------


def replay_demo(demo: Demonstration) -> dict[str, np.ndarray]:
    """Apply the recorded actions to the initial scene and return the final
    object positions. Raises DemoInconsistency on impossible traces or
    disagreeing per-frame poses.
    """
    by_category: dict[str, SceneObject] = {}
    for obj in demo.initial_scene:
        if obj.category in by_category:
            raise DemoInconsistency(
                f"demonstration scene has several {obj.category!r}; demos must be unambiguous"
            )
        by_category[obj.category] = obj
    positions = {o.id: vec3(o.position) for o in demo.initial_scene}
    held: Optional[str] = None  # category

    for k, act in enumerate(demo.actions):
        base_pose = vec3(act.ee_pose_per_frame[BASE_FRAME])
        for frame_label, pose in act.ee_pose_per_frame.items():
            if frame_label == BASE_FRAME:
                continue
            if frame_label == held:
                origin = base_pose  # the held object rides on the gripper
            elif frame_label in by_category:
                obj = by_category[frame_label]
                origin = positions[obj.id] + grasp_offset(obj.category, obj.footprint_radius)
            else:
                raise DemoInconsistency(f"action {k}: unknown frame {frame_label!r}")
            if dist(vec3(pose) + origin, base_pose) > _CONSISTENCY_TOL:
                raise DemoInconsistency(
                    f"action {k}: pose in frame {frame_label!r} disagrees with the base pose"
                )
        if act.kind == PICK:
            if held is not None:
                raise DemoInconsistency(f"action {k}: pick while already holding {held!r}")
            if act.category not in by_category:
                raise DemoInconsistency(f"action {k}: pick of unknown {act.category!r}")
            held = act.category
        else:
            if held != act.category:
                raise DemoInconsistency(
                    f"action {k}: release of {act.category!r} while holding {held!r}"
                )
            obj = by_category[act.category]
            positions[obj.id] = base_pose - grasp_offset(obj.category, obj.footprint_radius)
            held = None
    return positions


def validate_demo(demo: Demonstration) -> None:
    final_positions = replay_demo(demo)
    recorded = {o.id: vec3(o.position) for o in demo.final_scene}
    if set(recorded) != set(final_positions):
        raise DemoInconsistency("final scene lists different objects than the replay")
    for obj_id, pos in final_positions.items():
        if dist(pos, recorded[obj_id]) > _CONSISTENCY_TOL:
            raise DemoInconsistency(
                f"object {obj_id!r} ends at {xyz(recorded[obj_id])} but the recorded "
                f"actions leave it at {xyz(pos)} (moved without a release?)"
            )


# --- goal extraction and grouping ----------------------------------------------


def extract_goal(demo: Demonstration, config: Config = DEFAULT_CONFIG) -> list[GoalCondition]:
    """One goal per object that moved, as a draft in the base frame.

    Drafts keep the per-frame pose map of the object's last release so the
    reference frame can be inferred across a group of demonstrations.
    """
    validate_demo(demo)
    initial = {o.id: vec3(o.position) for o in demo.initial_scene}
    final = {o.id: vec3(o.position) for o in demo.final_scene}
    categories = {o.id: o.category for o in demo.initial_scene}
    goals: list[GoalCondition] = []
    for obj_id in initial:
        if dist(initial[obj_id], final[obj_id]) <= config.goal_move_min:
            continue
        category = categories[obj_id]
        release_idx = None
        for k, act in enumerate(demo.actions):
            if act.kind in (PLACE, DROP) and act.category == category:
                release_idx = k
        if release_idx is None:
            raise DemoInconsistency(f"object {obj_id!r} moved but was never released")
        release = demo.actions[release_idx]
        goals.append(
            GoalCondition(
                category=category,
                target_pose=tuple(release.ee_pose_per_frame[BASE_FRAME]),
                frame=BASE_FRAME,
                mode=release.kind,
                order=release_idx,
                poses_by_frame=dict(release.ee_pose_per_frame),
            )
        )
    goals.sort(key=lambda g: g.order)
    if not goals:
        logger.warning("demonstration moved nothing; empty goal")
    return goals


def _signature(goals: list[GoalCondition]) -> tuple:
    return tuple((g.category, g.mode) for g in goals)


def _compatible(a: list[GoalCondition], b: list[GoalCondition], tol: float) -> bool:
    for ga, gb in zip(a, b):
        # the moved object's own frame is degenerate (it rides the gripper,
        # so its release pose is always the origin) and can never be the
        # goal reference; ignore it or everything would group together
        shared = (set(ga.poses_by_frame) & set(gb.poses_by_frame)) - {ga.category}
        if not any(dist(ga.poses_by_frame[f], gb.poses_by_frame[f]) <= tol for f in shared):
            return False
    return True


def group_demos(
    demos: list[Demonstration], config: Config = DEFAULT_CONFIG
) -> list[list[Demonstration]]:
    """Partition demos into task groups.

    Demos group together when they move the same categories the same way and,
    for every goal, agree on the target pose in at least one shared frame
    (transitively).
    """
    goals = [extract_goal(d, config) for d in demos]
    parent = list(range(len(demos)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(demos)):
        for j in range(i + 1, len(demos)):
            if _signature(goals[i]) != _signature(goals[j]):
                continue
            if _compatible(goals[i], goals[j], config.goal_group_tolerance):
                parent[find(j)] = find(i)

    components: dict[int, list[Demonstration]] = {}
    for i, demo in enumerate(demos):
        components.setdefault(find(i), []).append(demo)
    return [components[root] for root in sorted(components)]


# --- frame inference ------------------------------------------------------------


def infer_frame(
    samples: dict, excluded: set[str] | frozenset[str] = frozenset(), config: Config = DEFAULT_CONFIG
) -> str:
    """Pick the frame whose samples cluster tightest (mean distance to their
    centroid). Needs >= 3 samples per frame. Ties within the tie margin prefer
    object frames over the base frame, then the lexicographically first name;
    if even the best cluster is looser than the dispersion ceiling the base
    frame wins outright.
    """
    usable = {f: [vec3(p) for p in pts] for f, pts in samples.items() if f not in excluded}
    if BASE_FRAME not in usable and BASE_FRAME in samples:
        usable[BASE_FRAME] = [vec3(p) for p in samples[BASE_FRAME]]
    if not usable:
        raise LfdError("no candidate frames to infer from")
    counts = {len(pts) for pts in usable.values()}
    if len(counts) != 1:
        raise LfdError("every frame needs one sample per demonstration")
    n = counts.pop()
    if n < 3:
        raise FewerThanThreeDemos(n)

    dispersion = {
        f: float(np.mean([dist(p, centroid(pts)) for p in pts])) for f, pts in usable.items()
    }
    best = min(dispersion.values())
    if best > config.frame_dispersion_max:
        return BASE_FRAME
    tied = [f for f, d in dispersion.items() if d <= best + config.frame_tie_margin]
    tied.sort(key=lambda f: (f == BASE_FRAME, f))
    return tied[0]


def resolve_group_goals(
    group: list[Demonstration], config: Config = DEFAULT_CONFIG
) -> list[GoalCondition]:
    """Fuse a group's goal drafts: infer each goal's reference frame across
    the demos and take the centroid of the targets in that frame."""
    if len(group) < 3:
        raise FewerThanThreeDemos(len(group))
    drafts = [extract_goal(d, config) for d in group]
    signature = _signature(drafts[0])
    for d in drafts[1:]:
        if _signature(d) != signature:
            raise LfdError("group mixes demonstrations with different goals")
    resolved: list[GoalCondition] = []
    for slot in range(len(signature)):
        per_demo = [d[slot] for d in drafts]
        shared = set(per_demo[0].poses_by_frame)
        for g in per_demo[1:]:
            shared &= set(g.poses_by_frame)
        samples = {f: [g.poses_by_frame[f] for g in per_demo] for f in shared}
        frame = infer_frame(samples, excluded={per_demo[0].category}, config=config)
        target = centroid(samples[frame])
        resolved.append(
            GoalCondition(
                category=per_demo[0].category,
                target_pose=(float(target[0]), float(target[1]), float(target[2])),
                frame=frame,
                mode=per_demo[0].mode,
                order=slot,
            )
        )
    return resolved


# --- planner ----------------------------------------------------------------------


def _fmt_pose(pose) -> str:
    return f"({pose[0]:.2f}, {pose[1]:.2f}, {pose[2]:.2f})"


class _Labels:
    """Unique-label allocator; repeated requests get a numeric suffix."""

    def __init__(self):
        self.used: set[str] = set()

    def make(self, base: str) -> str:
        label = base
        n = 2
        while label in self.used:
            label = f"{base} ({n})"
            n += 1
        self.used.add(label)
        return label


def _at_pose_condition(goal: GoalCondition, labels: _Labels) -> BTNode:
    word = "roughly at" if goal.mode == DROP else "at"
    label = labels.make(
        f"{goal.category} {word} {_fmt_pose(goal.target_pose)} in {goal.frame}?"
    )
    return condition(
        label,
        {
            "id": "at_pose",
            "category": goal.category,
            "target": [float(v) for v in goal.target_pose],
            "frame": goal.frame,
            "mode": goal.mode,
        },
    )


def _release_action(goal: GoalCondition, labels: _Labels) -> BTNode:
    verb = "drop" if goal.mode == DROP else "place"
    label = labels.make(
        f"{verb} {goal.category} at {_fmt_pose(goal.target_pose)} in {goal.frame}"
    )
    return action(
        label,
        {
            "id": "release",
            "category": goal.category,
            "target": [float(v) for v in goal.target_pose],
            "frame": goal.frame,
            "mode": goal.mode,
        },
    )


def _in_gripper_condition(category: str, labels: _Labels) -> BTNode:
    return condition(labels.make(f"in gripper {category}?"), {"id": "in_gripper", "category": category})


def _pick_action(category: str, labels: _Labels) -> BTNode:
    return action(labels.make(f"pick {category}"), {"id": "pick", "category": category})


def _ppa_for_goal(goal: GoalCondition, labels: _Labels) -> BTNode:
    """Backchain: Fallback(goal condition, Sequence(precondition subtrees, action)).

    The release's precondition (holding the object) expands into its own
    Fallback of the in-gripper check and the pick action; the pick's
    gripper-open precondition is satisfied internally by the arm, so the pick
    stands bare. The recursion is fixed-shape here, which also means no cycle
    can occur; see _ppa_for_generic for the guarded general walk.
    """
    cond_node = _at_pose_condition(goal, labels)
    pick_guard = fallback(
        labels.make(f"ensure in gripper {goal.category}"),
        [
            _in_gripper_condition(goal.category, labels),
            _pick_action(goal.category, labels),
        ],
    )
    act_node = _release_action(goal, labels)
    body = sequence(labels.make(f"do {act_node.label}"), [pick_guard, act_node])
    return fallback(labels.make(f"ensure {cond_node.label.rstrip('?')}"), [cond_node, body])


def plan_group(goals: list[GoalCondition], labels: Optional[_Labels] = None, name: str = "task") -> BTNode:
    """One group's tree: the goal subtrees in demonstrated order under a Sequence."""
    labels = labels or _Labels()
    if not goals:
        raise PlannerError("cannot plan from an empty goal list")
    children = []
    for goal in goals:
        if goal.mode not in (PLACE, DROP):
            logger.warning("no action achieves goal %r; leaving the bare condition", goal)
            children.append(_at_pose_condition(goal, labels))
        else:
            children.append(_ppa_for_goal(goal, labels))
    return sequence(labels.make(name), children)


def plan_bt(demos: list[Demonstration], config: Config = DEFAULT_CONFIG) -> BTNode:
    """Group the demonstrations and plan one tree.

    A single group plans to its goal Sequence; several groups sit under a root
    Fallback so whichever task's goal can be reached runs.
    """
    groups = group_demos(demos, config)
    for g in groups:
        if len(g) < 3:
            raise FewerThanThreeDemos(len(g))
    labels = _Labels()
    if len(groups) == 1:
        return plan_group(resolve_group_goals(groups[0], config), labels)
    subtrees = [
        plan_group(resolve_group_goals(g, config), labels, name=f"task {i + 1}")
        for i, g in enumerate(groups)
    ]
    return fallback(labels.make("tasks"), subtrees)


SCENE_CLEAR_LABEL = "scene clear?"
DISAMBIGUATE_LABEL = "disambiguate"


def has_disambiguation(tree: BTNode) -> bool:
    return any(
        (node.payload or {}).get("id") == "disambiguate" for node in tree.iter_nodes()
    )


def attach_disambiguation(tree: Optional[BTNode]) -> BTNode:
    """Prefix the tree with the clearing subtree:
    Fallback(scene clear?, disambiguate) runs before the manipulation goals.

    A tree whose root is already a Sequence absorbs the subtree as its first
    child (a net growth of exactly three nodes); any other root is wrapped.
    Attaching twice is an error.
    """
    if tree is None:
        raise PlannerError("cannot attach disambiguation to an empty tree")
    if has_disambiguation(tree):
        raise PlannerError("disambiguation subtree already attached")
    labels = _Labels()
    for node in tree.iter_nodes():
        labels.used.add(node.label)
    clearing = fallback(
        labels.make("ensure scene clear"),
        [
            condition(labels.make(SCENE_CLEAR_LABEL), {"id": "scene_clear"}),
            action(labels.make(DISAMBIGUATE_LABEL), {"id": "disambiguate"}),
        ],
    )
    if tree.kind is NodeKind.SEQUENCE:
        return sequence(tree.label, [clearing] + list(tree.children))
    return sequence(labels.make("task"), [clearing, tree])
