"""Tick loop: runs a behavior tree against the simulated world.

Each tick applies queued scene edits, refreshes perception (unless the arm is
busy, which halts the camera), ticks the tree once from the root, then
advances the world clock by one tick period. Everything observable is pushed
onto an append-only event list as JSON-ready dicts, so two runs with the same
seed and script produce byte-identical logs.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from typing import Optional

from .bt import (
    BTNode,
    Blackboard,
    NodeStatus,
    TickContext,
    tick_tree,
    tree_to_doc,
    validate_tree,
)
from .config import Config, DEFAULT_CONFIG
from .dialogue import (
    DialoguePhase,
    DialogueState,
    NoStatement,
    NotAmbiguous,
    Question,
    apply_resolution,
    candidates,
    dialogue_step,
)
from .geometry import vec3
from .perception import (
    FrameRegistry,
    FrameUnresolvable,
    ResolutionVanished,
    UnknownFrame,
    detect,
    resolve_frame,
    update_registry,
)
from .world import (
    SceneObject,
    WorldError,
    WorldState,
    begin_pick,
    begin_release,
    check_at_pose,
    step_world,
)

SUCCESS = "success"
FAILURE = "failure"


def events_to_jsonl(events: list[dict]) -> str:
    return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in events)


def _doc_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


@dataclass
class RunResult:
    status: str  # success / failure
    ticks: int
    events: list[dict]
    executor: "Executor"


class AnswerRejected(Exception):
    """No question is outstanding, or an answer is already pending."""


class Executor:
    """One run of a tree over a world.

    `answers` scripts the operator: a list of {"query", "yes_for"} entries;
    each question about `query` is answered yes exactly when it asks about the
    `yes_for` instance. Without a script, answers arrive via submit_answer.
    `edits` schedules scene changes: (tick, edit_doc) pairs applied at the
    start of that tick.
    """

    def __init__(
        self,
        tree: BTNode,
        world,
        config: Config = DEFAULT_CONFIG,
        seed: int = 0,
        answers: Optional[list[dict]] = None,
        edits: Optional[list[tuple[int, dict]]] = None,
    ):
        validate_tree(tree)
        self.tree = tree
        self.config = config
        if isinstance(world, WorldState):
            self.world = world
        else:
            self.world = WorldState(world, config=config, seed=seed)
        self.bb = Blackboard(on_enqueue=self._on_enqueue)
        self.registry = FrameRegistry()
        self.events: list[dict] = []
        self.tick = 0
        self.answers = list(answers or [])
        for entry in self.answers:
            if "query" not in entry or "yes_for" not in entry:
                raise ValueError('answer script entries need "query" and "yes_for"')
        self.scripted_edits = sorted(edits or [], key=lambda e: e[0])
        self.dialogue: Optional[DialogueState] = None
        self.finished = False
        self.result: Optional[str] = None
        self._last_status: Optional[NodeStatus] = None
        self._last_visits: list[tuple[str, NodeStatus]] = []
        self._last_question: Optional[Question] = None
        self._exhaust_counts: dict[str, int] = {}
        self._fatal = False
        self._lock = threading.Lock()
        self._pending_answer: Optional[bool] = None
        self._inbox_edits: list[dict] = []
        self._snapshot: dict = {}
        self._publish()

    # --- operator / gateway inputs (thread safe) -----------------------------

    def question_outstanding(self) -> bool:
        with self._lock:
            return (
                self.dialogue is not None
                and self.dialogue.awaiting
                and self._pending_answer is None
                and not self.finished
            )

    def submit_answer(self, answer: bool) -> None:
        with self._lock:
            ok = (
                self.dialogue is not None
                and self.dialogue.awaiting
                and self._pending_answer is None
                and not self.finished
            )
            if not ok:
                raise AnswerRejected("no question is waiting for an answer")
            self._pending_answer = bool(answer)

    def queue_edit(self, doc: dict) -> None:
        with self._lock:
            self._inbox_edits.append(dict(doc))

    def has_pending_edits(self) -> bool:
        with self._lock:
            return bool(self._inbox_edits)

    def state_document(self) -> dict:
        with self._lock:
            return self._snapshot

    def tree_doc(self) -> dict:
        return tree_to_doc(self.tree)

    # --- event plumbing --------------------------------------------------------

    def _emit(self, kind: str, **fields) -> None:
        event = {"seq": len(self.events) + 1, "tick": self.tick, "kind": kind}
        event.update(fields)
        self.events.append(event)

    def _on_enqueue(self, category: str) -> None:
        self._emit("QueryEnqueued", category=category)

    def _warn(self, message: str) -> None:
        self._emit("Warning", message=message)

    # --- one tick ----------------------------------------------------------------

    def step(self) -> NodeStatus:
        if self.finished:
            raise RuntimeError("run already finished")
        self.tick += 1
        self._apply_edits()
        self._perceive()
        ctx = TickContext(blackboard=self.bb, runtime=self)
        status = tick_tree(self.tree, ctx, validate=False)
        self._last_visits = list(ctx.visit_log)
        for label, node_status in ctx.visit_log:
            self._emit("NodeVisit", node=label, status=node_status.value)
        self._emit("TickResult", status=status.value, queue=list(self.bb.queue))
        self._last_status = status
        completion = step_world(self.world, self.config.tick_period)
        if completion is not None:
            self._emit(
                "ActionCompleted",
                node=completion["label"],
                action=completion["kind"],
                outcome=completion["outcome"],
            )
        self.bb.held_object = self.world.held
        self._script_answer()
        if status is NodeStatus.SUCCESS:
            self._finish(SUCCESS)
        elif self._fatal or self.tick >= self.config.max_ticks:
            self._finish(FAILURE)
        else:
            self._publish()
        return status

    def run(self, max_ticks: Optional[int] = None) -> RunResult:
        limit = max_ticks if max_ticks is not None else self.config.max_ticks
        while not self.finished:
            status = self.step()
            if status is NodeStatus.SUCCESS or self._fatal:
                break
            if self.tick >= limit:
                self._finish(FAILURE)
                break
        return RunResult(
            status=self.result or FAILURE,
            ticks=self.tick,
            events=self.events,
            executor=self,
        )

    def _finish(self, result: str) -> None:
        self.finished = True
        self.result = result
        self._publish()

    # --- tick phases ------------------------------------------------------------

    def _apply_edits(self) -> None:
        due = [doc for at, doc in self.scripted_edits if at == self.tick]
        with self._lock:
            due.extend(self._inbox_edits)
            self._inbox_edits = []
        for doc in due:
            self._apply_edit(doc)

    def _apply_edit(self, doc: dict) -> None:
        try:
            op = doc.get("op")
            if op == "add":
                spec = doc["object"]
                self.world.add_object(
                    SceneObject(
                        id=spec["id"],
                        category=spec["category"],
                        position=vec3(spec["position"]),
                        footprint_radius=float(spec.get("footprint_radius", 0.03)),
                    )
                )
            elif op == "move":
                if doc["id"] not in self.world.objects:
                    raise KeyError(doc["id"])
                self.world.move_object(doc["id"], vec3(doc["position"]))
            elif op == "remove":
                target = doc["id"]
                if target not in self.world.objects:
                    entry = self.registry.entries.get(target)
                    if entry is not None:
                        target = entry.instance_id
                if target not in self.world.objects:
                    raise KeyError(doc["id"])
                self.world.remove_object(target)
            else:
                raise ValueError(f"unknown op {op!r}")
        except (KeyError, TypeError, ValueError) as exc:
            self._warn(f"scene edit ignored: {exc!r}")

    def _perceive(self) -> None:
        halted = self.world.active is not None
        self.bb.perception_halted = halted
        if halted:
            return
        dets = detect(self.world, halted=False, config=self.config, rng=self.world.rng)
        held = None
        if self.world.held is not None and self.world.held in self.world.objects:
            held = (self.world.held, self.world.objects[self.world.held].category)
        warnings: list[str] = []
        new_reg = update_registry(
            self.registry, dets, held=held, config=self.config, warnings=warnings
        )
        for message in warnings:
            self._warn(message)
        if new_reg != self.registry:
            self.registry = new_reg
            self._emit(
                "RegistryUpdated",
                frames=sorted(new_reg.entries),
                counts=dict(sorted(new_reg.counts.items())),
            )
        self._prune_queue()

    def _prune_queue(self) -> None:
        for category in list(self.bb.queue):
            if self.registry.counts.get(category, 0) >= 2:
                continue
            self.bb.remove_query(category)
            self._warn(f"query for {category!r} dropped; no longer ambiguous")
            if self.dialogue is not None and self.dialogue.query == category:
                self.dialogue = None
                self._last_question = None

    def _script_answer(self) -> None:
        """The scripted operator reads the outstanding question after the tick
        and submits; the executor consumes it on the next tick."""
        if not self.answers or self.finished:
            return
        if self.dialogue is None or not self.dialogue.awaiting:
            return
        if self._pending_answer is not None or self._last_question is None:
            return
        for entry in self.answers:
            if entry["query"] == self.dialogue.query:
                self._pending_answer = self._last_question.candidate == entry["yes_for"]
                return

    # --- leaf handlers ---------------------------------------------------------

    def _resolver(self, name: str):
        entry = resolve_frame(self.registry, name, self.bb)
        return entry.instance_id, vec3(entry.translation)

    def tick_condition(self, node: BTNode, ctx: TickContext) -> NodeStatus:
        payload = node.payload or {}
        leaf = payload.get("id")
        if leaf == "scene_clear":
            return NodeStatus.SUCCESS if not self.bb.queue else NodeStatus.FAILURE
        if leaf == "in_gripper":
            held = self.world.held
            if held is not None and held in self.world.objects:
                if self.world.objects[held].category == payload["category"]:
                    return NodeStatus.SUCCESS
            return NodeStatus.FAILURE
        if leaf == "at_pose":
            try:
                ok = check_at_pose(
                    self.world,
                    payload["category"],
                    vec3(payload["target"]),
                    payload["frame"],
                    payload["mode"],
                    self._resolver,
                )
            except (FrameUnresolvable, UnknownFrame):
                return NodeStatus.FAILURE
            return NodeStatus.SUCCESS if ok else NodeStatus.FAILURE
        raise ValueError(f"condition {node.label!r} has unknown payload id {leaf!r}")

    def tick_action(self, node: BTNode, ctx: TickContext) -> NodeStatus:
        payload = node.payload or {}
        leaf = payload.get("id")
        if leaf == "disambiguate":
            return self._tick_disambiguate()
        if leaf not in ("pick", "release"):
            raise ValueError(f"action {node.label!r} has unknown payload id {leaf!r}")

        active = self.world.active
        if active is not None:
            return (
                NodeStatus.RUNNING
                if active.node_label == node.label
                else NodeStatus.FAILURE
            )
        # an unanswered ambiguity gates all arm actions: no reach may start
        # (and no new query may be pushed by one) until the queue is clear
        if self.bb.queue:
            return NodeStatus.FAILURE
        try:
            if leaf == "pick":
                if self.world.gripper.value == "closed" and self.world.held is None:
                    self.world.open_gripper()
                begin_pick(
                    self.world, payload["category"], self._resolver, node_label=node.label
                )
            else:
                begin_release(
                    self.world,
                    vec3(payload["target"]),
                    payload["frame"],
                    payload["mode"],
                    self._resolver,
                    node_label=node.label,
                )
        except (FrameUnresolvable, UnknownFrame):
            return NodeStatus.FAILURE
        except WorldError as exc:
            self._warn(f"{node.label}: {exc}")
            return NodeStatus.FAILURE
        self._emit(
            "ActionStarted",
            node=node.label,
            action=leaf,
            category=payload["category"],
            duration=self.world.active.duration,
        )
        return NodeStatus.RUNNING

    # --- disambiguation -----------------------------------------------------------

    def _tick_disambiguate(self) -> NodeStatus:
        query = self.bb.queue_head()
        if query is None:
            return NodeStatus.SUCCESS

        if not self._ensure_dialogue(query):
            return NodeStatus.RUNNING

        with self._lock:
            answer = self._pending_answer
            self._pending_answer = None
        if answer is not None:
            self._emit("AnswerReceived", answer="yes" if answer else "no")
            state, _ = dialogue_step(self.dialogue, answer=answer, config=self.config)
            self.dialogue = state
            self._last_question = None
            if state.phase is DialoguePhase.RESOLVED:
                return self._apply_resolution(query, state.resolved_id)
            if state.phase is DialoguePhase.EXHAUSTED:
                return self._handle_exhaustion(query)
            # a plain no: fall through and ask about the next candidate

        if self.dialogue.awaiting:
            return NodeStatus.RUNNING
        objects = list(self.registry.entries.values())
        try:
            state, question = dialogue_step(
                self.dialogue, answer=None, objects=objects, config=self.config
            )
        except NoStatement as exc:
            self._warn(str(exc))
            return self._handle_exhaustion(query)
        self.dialogue = state
        if state.phase is DialoguePhase.EXHAUSTED:
            # a candidate vanished between perception and now; rebuild next tick
            self.dialogue = None
            self._last_question = None
            return NodeStatus.RUNNING
        if question is not None:
            self._last_question = question
            self._emit(
                "QuestionAsked",
                query=question.query,
                candidate=question.candidate,
                text=question.text,
            )
        return NodeStatus.RUNNING

    def _ensure_dialogue(self, query: str) -> bool:
        """Make self.dialogue a live dialogue for `query`; False when the scene
        does not actually support one (the queue entry is then dropped)."""
        current_ids = tuple(
            e.instance_id for e in self._candidates_or_none(query) or ()
        )
        if (
            self.dialogue is not None
            and self.dialogue.query == query
            and set(self.dialogue.candidates) == set(current_ids)
        ):
            return True
        if self.dialogue is not None and self.dialogue.query == query:
            self._warn(f"candidates for {query!r} changed; restarting the dialogue")
        try:
            cands = candidates(query, self.registry)
        except NotAmbiguous:
            self.bb.remove_query(query)
            self._warn(f"query for {query!r} dropped; no longer ambiguous")
            self.dialogue = None
            self._last_question = None
            return False
        self.dialogue = DialogueState.begin(query, cands)
        self._last_question = None
        return True

    def _candidates_or_none(self, query: str):
        try:
            return candidates(query, self.registry)
        except NotAmbiguous:
            return None

    def _apply_resolution(self, query: str, chosen: str) -> NodeStatus:
        try:
            self.registry = apply_resolution(self.registry, self.bb, query, chosen)
        except ResolutionVanished as exc:
            self._warn(str(exc))
            self.dialogue = None
            return NodeStatus.RUNNING
        self._emit("QueryResolved", query=query, instance=chosen)
        self.dialogue = None
        self._exhaust_counts.pop(query, None)
        return NodeStatus.SUCCESS if not self.bb.queue else NodeStatus.RUNNING

    def _handle_exhaustion(self, query: str) -> NodeStatus:
        count = self._exhaust_counts.get(query, 0) + 1
        self._exhaust_counts[query] = count
        self.dialogue = None
        self._last_question = None
        if count == 1:
            self._warn(f"every candidate for {query!r} was denied; asking over")
            return NodeStatus.RUNNING
        self._warn(f"operator denied every candidate for {query!r} twice; giving up")
        self._fatal = True
        return NodeStatus.FAILURE

    # --- published state ------------------------------------------------------------

    def _publish(self) -> None:
        dialogue_doc = None
        if self.dialogue is not None:
            dialogue_doc = {
                "query": self.dialogue.query,
                "awaiting": bool(self.dialogue.awaiting),
                "question": self._last_question.text
                if (self.dialogue.awaiting and self._last_question is not None)
                else None,
                "candidate": self._last_question.candidate
                if (self.dialogue.awaiting and self._last_question is not None)
                else None,
                "questions_asked": self.dialogue.questions_asked(),
            }
        active_doc = None
        if self.world.active is not None:
            act = self.world.active
            active_doc = {
                "node": act.node_label,
                "kind": act.kind,
                "progress": round(act.progress(self.world.clock), 6),
            }
        doc = {
            "tick": self.tick,
            "status": self._last_status.value if self._last_status else "idle",
            "finished": self.finished,
            "result": self.result,
            "world": self.world.snapshot(),
            "frames": self.registry.snapshot(),
            "counts": dict(sorted(self.registry.counts.items())),
            "resolved": dict(sorted(self.registry.resolved.items())),
            "queue": list(self.bb.queue),
            "perception_halted": self.bb.perception_halted,
            "dialogue": dialogue_doc,
            "active_action": active_doc,
            "node_status": {label: s.value for label, s in self._last_visits},
            "events_count": len(self.events),
        }
        doc["hash"] = _doc_hash(doc)
        with self._lock:
            self._snapshot = doc


def run_tree(
    tree: BTNode,
    scene: list[SceneObject],
    config: Config = DEFAULT_CONFIG,
    seed: int = 0,
    answers: Optional[list[dict]] = None,
    edits: Optional[list[tuple[int, dict]]] = None,
    max_ticks: Optional[int] = None,
) -> RunResult:
    ex = Executor(tree, scene, config=config, seed=seed, answers=answers, edits=edits)
    return ex.run(max_ticks=max_ticks)
