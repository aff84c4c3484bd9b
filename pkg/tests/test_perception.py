import random

import pytest

from claribt.bt import Blackboard
from claribt.config import DEFAULT_CONFIG
from claribt.geometry import dist
from claribt.perception import (
    Detection,
    FrameRegistry,
    FrameUnresolvable,
    UnknownFrame,
    detect,
    resolve_frame,
    update_registry,
)
from claribt.world import SceneObject, WorldState


def det(instance_id, category, x, y, z=0.0, stamp=0.0):
    return Detection(instance_id, category, (float(x), float(y), float(z)), stamp)


def fold(*batches, held_by_batch=None):
    """Run update_registry over successive detection batches."""
    reg = FrameRegistry()
    for i, batch in enumerate(batches):
        held = held_by_batch[i] if held_by_batch else None
        reg = update_registry(reg, batch, held=held)
    return reg


# --- detection -----------------------------------------------------------------


def test_detect_returns_grasp_points():
    world = WorldState([
        SceneObject("w", "bowl", (-0.15, 0.35, 0.0), footprint_radius=0.08),
    ])
    dets = detect(world)
    assert len(dets) == 1
    assert dets[0].position == pytest.approx((-0.07, 0.35, 0.0))


def test_detect_halted_returns_none():
    world = WorldState([SceneObject("b", "banana", (0.1, 0.4, 0.0))])
    assert detect(world, halted=True) is None


def test_detect_excludes_held_and_out_of_field():
    world = WorldState([
        SceneObject("held", "banana", (0.1, 0.4, 0.0)),
        SceneObject("left_out", "banana", (-0.9, 0.4, 0.0)),
        SceneObject("behind_cam", "banana", (0.1, -0.2, 0.0)),
        SceneObject("visible", "banana", (0.2, 0.5, 0.0)),
    ])
    world.set_held("held")
    ids = {d.instance_id for d in detect(world)}
    assert ids == {"visible"}


def test_detection_jitter_is_seeded():
    cfg = DEFAULT_CONFIG.replace(detection_jitter=0.002)
    world = WorldState([SceneObject("b", "banana", (0.1, 0.4, 0.0))], config=cfg)
    a = detect(world, config=cfg, rng=random.Random(3))[0].position
    b = detect(world, config=cfg, rng=random.Random(3))[0].position
    c = detect(world, config=cfg, rng=random.Random(4))[0].position
    assert a == b
    assert a != c
    assert dist(a, (0.1, 0.4, 0.0)) < 0.01


# --- naming ---------------------------------------------------------------------


def test_single_instance_gets_the_bare_name():
    reg = fold([det("b1", "banana", 0.1, 0.4)])
    assert set(reg.entries) == {"banana"}
    assert reg.entries["banana"].instance_id == "b1"
    assert reg.counts == {"banana": 1}


def test_ambiguity_assigns_indices_distance_ascending():
    reg = fold([
        det("far", "banana", 0.25, 0.45),
        det("near", "banana", -0.05, 0.30),
    ])
    assert reg.entries["banana_1"].instance_id == "near"
    assert reg.entries["banana_2"].instance_id == "far"
    assert reg.counts == {"banana": 2}
    assert "banana" not in reg.entries


def test_indices_stick_to_instances_when_objects_move():
    first = [det("near", "banana", -0.05, 0.30), det("far", "banana", 0.25, 0.45)]
    # "far" moves close to the robot; names must follow the instances
    second = [det("near", "banana", -0.05, 0.30), det("far", "banana", 0.02, 0.20)]
    reg = fold(first, second)
    assert reg.entries["banana_1"].instance_id == "near"
    assert reg.entries["banana_2"].instance_id == "far"


def test_newcomer_takes_the_smallest_free_index():
    reg = fold(
        [det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)],
        [det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5), det("c", "banana", 0.0, 0.2)],
    )
    by_instance = {e.instance_id: name for name, e in reg.entries.items()}
    assert by_instance["a"] == "banana_1"
    assert by_instance["b"] == "banana_2"
    assert by_instance["c"] == "banana_3"


def test_collapse_back_to_one_restores_the_bare_name():
    reg = fold(
        [det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)],
        [det("b", "banana", 0.2, 0.5)],
    )
    assert set(e.instance_id for e in reg.instances_of("banana")) == {"b"}
    assert reg.entries["banana"].instance_id == "b"
    assert reg.counts == {"banana": 1}
    assert reg.resolved == {}


def test_resolution_names_survive_updates():
    bb = Blackboard()
    reg = fold([det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)])
    from claribt.dialogue import apply_resolution

    reg = apply_resolution(reg, bb, "banana", "b")
    assert reg.entries["banana"].instance_id == "b"
    assert reg.entries["banana_1"].instance_id == "a"
    # next update keeps the resolution and the names
    reg = update_registry(reg, [det("a", "banana", 0.1, 0.3), det("b", "banana", 0.25, 0.5)])
    assert reg.resolved == {"banana": "b"}
    assert reg.entries["banana"].instance_id == "b"
    assert reg.entries["banana_1"].instance_id == "a"


def test_resolution_cleared_when_the_chosen_instance_disappears():
    bb = Blackboard()
    reg = fold([det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)])
    from claribt.dialogue import apply_resolution

    reg = apply_resolution(reg, bb, "banana", "b")
    reg = update_registry(reg, [det("a", "banana", 0.1, 0.3), det("c", "banana", 0.3, 0.5)])
    assert reg.counts["banana"] == 2
    assert "banana" not in reg.resolved


def test_held_instance_keeps_count_and_resolution_alive():
    bb = Blackboard()
    reg = fold([det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)])
    from claribt.dialogue import apply_resolution

    reg = apply_resolution(reg, bb, "banana", "b")
    # b is now in the gripper: not detected, but still counted and resolved
    reg = update_registry(reg, [det("a", "banana", 0.1, 0.3)], held=("b", "banana"))
    assert reg.counts["banana"] == 2
    assert reg.resolved == {"banana": "b"}
    assert reg.entry_for_instance("b") is None  # no frame while carried
    assert reg.entries["banana_1"].instance_id == "a"


def test_lone_visible_instance_while_another_is_held_keeps_its_index():
    reg = fold([det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)])
    reg = update_registry(reg, [det("a", "banana", 0.1, 0.3)], held=("b", "banana"))
    # count is still 2, so "a" must not usurp the bare name
    assert "banana" not in reg.entries
    assert reg.entries["banana_1"].instance_id == "a"


# --- association properties --------------------------------------------------------


def test_association_follows_instances_under_small_motion():
    rng = random.Random(42)
    for _ in range(300):
        n = rng.randint(2, 4)
        positions = {}
        # spread instances at least 0.3 apart
        while len(positions) < n:
            cand = (rng.uniform(-0.6, 0.6), rng.uniform(0.0, 1.0), 0.0)
            if all(dist(cand, p) >= 0.3 for p in positions.values()):
                positions[f"obj{len(positions)}"] = cand
        reg = update_registry(
            FrameRegistry(),
            [det(i, "thing", *p[:2]) for i, p in positions.items()],
        )
        names_before = {e.instance_id: n for n, e in reg.entries.items()}
        for _ in range(10):
            mover = rng.choice(sorted(positions))
            dx, dy = rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)
            x, y, _ = positions[mover]
            positions[mover] = (x + dx, y + dy, 0.0)
            reg = update_registry(
                reg, [det(i, "thing", *p[:2]) for i, p in positions.items()]
            )
            names_now = {e.instance_id: n for n, e in reg.entries.items()}
            assert names_now == names_before


def test_ambiguous_association_warns_and_keeps_lower_id():
    warnings: list[str] = []
    prev = update_registry(
        FrameRegistry(), [det("a", "thing", 0.0, 0.4), det("b", "thing", 0.3, 0.4)]
    )
    # both detections land exactly between the previous two positions
    update_registry(
        prev,
        [det("a", "thing", 0.15, 0.4), det("b", "thing", 0.15, 0.4)],
        warnings=warnings,
    )
    assert any("association ambiguous" in w for w in warnings)


def test_multiple_large_moves_warn():
    warnings: list[str] = []
    prev = update_registry(
        FrameRegistry(), [det("a", "thing", 0.0, 0.3), det("b", "thing", 0.4, 0.3)]
    )
    update_registry(
        prev,
        [det("a", "thing", 0.05, 0.3), det("b", "thing", 0.45, 0.3)],
        warnings=warnings,
    )
    assert any("moved more than" in w for w in warnings)


def test_naming_invariants_hold_under_random_edits():
    rng = random.Random(9)
    categories = ["banana", "bowl"]
    for _ in range(300):
        alive: dict[str, tuple] = {}
        reg = FrameRegistry()
        serial = 0
        for _ in range(12):
            roll = rng.random()
            if roll < 0.4 or not alive:
                serial += 1
                cat = rng.choice(categories)
                alive[f"{cat}~{serial}"] = (
                    cat,
                    (rng.uniform(-0.6, 0.6), rng.uniform(0.05, 0.95), 0.0),
                )
            elif roll < 0.7:
                victim = rng.choice(sorted(alive))
                del alive[victim]
            else:
                mover = rng.choice(sorted(alive))
                cat, _ = alive[mover]
                alive[mover] = (
                    cat,
                    (rng.uniform(-0.6, 0.6), rng.uniform(0.05, 0.95), 0.0),
                )
            reg = update_registry(
                reg, [det(i, cat, *pos[:2]) for i, (cat, pos) in alive.items()]
            )
            # invariants: one entry per visible instance, bare name iff lone
            # or resolved, indexed names unique per category
            assert len(reg.entries) == len(alive)
            for cat in categories:
                entries = reg.instances_of(cat)
                count = sum(1 for c, _ in alive.values() if c == cat)
                assert reg.counts.get(cat, 0) == count
                names = sorted(e.name for e in entries)
                assert len(set(names)) == len(names)
                if count == 1:
                    assert names == [cat]
                elif count >= 2:
                    assert cat not in names  # nobody resolved anything here


# --- frame resolution ----------------------------------------------------------


def test_resolve_base_frame_is_the_origin():
    bb = Blackboard()
    entry = resolve_frame(FrameRegistry(), "base", bb)
    assert entry.instance_id is None
    assert entry.translation == (0.0, 0.0, 0.0)


def test_resolve_named_frames():
    bb = Blackboard()
    reg = fold([det("b1", "banana", 0.1, 0.4)])
    assert resolve_frame(reg, "banana", bb).instance_id == "b1"
    with pytest.raises(UnknownFrame):
        resolve_frame(reg, "bowl", bb)
    assert bb.queue == ()


def test_resolve_ambiguous_category_enqueues_once():
    bb = Blackboard()
    reg = fold([det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)])
    for _ in range(3):
        with pytest.raises(FrameUnresolvable):
            resolve_frame(reg, "banana", bb)
    assert bb.queue == ("banana",)
    # indexed names still resolve while the bare name is ambiguous
    assert resolve_frame(reg, "banana_1", bb).instance_id == "a"


def test_resolved_but_carried_category_raises_unknown_without_queueing():
    bb = Blackboard()
    reg = fold([det("a", "banana", 0.1, 0.3), det("b", "banana", 0.2, 0.5)])
    from claribt.dialogue import apply_resolution

    reg = apply_resolution(reg, bb, "banana", "b")
    reg = update_registry(reg, [det("a", "banana", 0.1, 0.3)], held=("b", "banana"))
    with pytest.raises(UnknownFrame):
        resolve_frame(reg, "banana", bb)
    assert bb.queue == ()
