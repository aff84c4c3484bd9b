"""Behavior tree core: node model, tick semantics, blackboard, (de)serialization.

Trees are memoryless: every tick starts at the root and walks left to right,
so a condition that flips between ticks reroutes execution on the next tick.
Sequence succeeds only if all children succeed and returns the first
non-Success child status; Fallback fails only if all children fail and
returns the first non-Failure child status. Running is produced by action
leaves only and propagated upward by the control nodes.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional

logger = logging.getLogger(__name__)

BASE_FRAME = "base"


class NodeStatus(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


class NodeKind(Enum):
    SEQUENCE = "sequence"
    FALLBACK = "fallback"
    CONDITION = "condition"
    ACTION = "action"


CONTROL_KINDS = (NodeKind.SEQUENCE, NodeKind.FALLBACK)
LEAF_KINDS = (NodeKind.CONDITION, NodeKind.ACTION)


class TreeStructureError(ValueError):
    """Raised when a tree violates arity or label-uniqueness rules."""


class TreeParseError(ValueError):
    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class BTNode:
    kind: NodeKind
    label: str
    children: list["BTNode"] = field(default_factory=list)
    payload: Optional[dict] = None

    def iter_nodes(self) -> Iterator["BTNode"]:
        """Pre-order walk over this subtree."""
        yield self
        for child in self.children:
            yield from child.iter_nodes()

    def find(self, label: str) -> Optional["BTNode"]:
        for node in self.iter_nodes():
            if node.label == label:
                return node
        return None


def sequence(label: str, children: list[BTNode]) -> BTNode:
    return BTNode(NodeKind.SEQUENCE, label, children)


def fallback(label: str, children: list[BTNode]) -> BTNode:
    return BTNode(NodeKind.FALLBACK, label, children)


def condition(label: str, payload: dict) -> BTNode:
    return BTNode(NodeKind.CONDITION, label, payload=payload)


def action(label: str, payload: dict) -> BTNode:
    return BTNode(NodeKind.ACTION, label, payload=payload)


def count_nodes(tree: BTNode) -> int:
    return sum(1 for _ in tree.iter_nodes())


def validate_tree(tree: BTNode) -> None:
    """Check arity and label uniqueness; raise TreeStructureError otherwise."""
    seen: set[str] = set()
    for node in tree.iter_nodes():
        if not isinstance(node.label, str) or not node.label:
            raise TreeStructureError("every node needs a non-empty string label")
        if node.label in seen:
            raise TreeStructureError(f"duplicate node label {node.label!r}")
        seen.add(node.label)
        if node.kind in CONTROL_KINDS:
            if not node.children:
                raise TreeStructureError(
                    f"{node.kind.value} node {node.label!r} needs at least one child"
                )
        else:
            if node.children:
                raise TreeStructureError(
                    f"{node.kind.value} node {node.label!r} must not have children"
                )


# --- blackboard -------------------------------------------------------------

_SCALARS = (str, bool, int, float)

QUEUE_KEY = "disambiguation_queue"
HALTED_KEY = "perception_halted"
HELD_KEY = "held_object"
RESOLVED_KEY = "resolved_frames"


def _check_value(value, key: str) -> None:
    """Restrict stored values to strings, numbers, flags, lists, poses and
    flat string->scalar maps, so typos surface instead of pickling anything."""
    if value is None or isinstance(value, _SCALARS):
        return
    if isinstance(value, (list, tuple)):
        for item in value:
            if not isinstance(item, _SCALARS):
                raise TypeError(f"blackboard key {key!r}: list items must be scalars")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str) or not isinstance(v, _SCALARS):
                raise TypeError(f"blackboard key {key!r}: maps must be str -> scalar")
        return
    raise TypeError(f"blackboard key {key!r}: unsupported value type {type(value)}")


class Blackboard:
    """Shared key/value store for one run.

    Reserved keys: the disambiguation queue (ordered, duplicate-free),
    the perception-halted flag, the held-object id and the resolved-frames map.
    """

    def __init__(self, on_enqueue: Callable[[str], None] | None = None):
        self._data: dict = {
            QUEUE_KEY: [],
            HALTED_KEY: False,
            HELD_KEY: None,
            RESOLVED_KEY: {},
        }
        self._on_enqueue = on_enqueue

    def set(self, key: str, value) -> None:
        if not isinstance(key, str) or not key:
            raise TypeError("blackboard keys are non-empty strings")
        _check_value(value, key)
        self._data[key] = value

    def get(self, key: str, default=None):
        return self._data.get(key, default)

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, list) else dict(v) if isinstance(v, dict) else v)
                for k, v in self._data.items()}

    # queue helpers ----------------------------------------------------------

    @property
    def queue(self) -> tuple[str, ...]:
        return tuple(self._data[QUEUE_KEY])

    def queue_head(self) -> Optional[str]:
        q = self._data[QUEUE_KEY]
        return q[0] if q else None

    def enqueue_query(self, category: str) -> bool:
        """Append a category to the queue; duplicate enqueues are no-ops.

        Returns True only when the category was actually added.
        """
        q = self._data[QUEUE_KEY]
        if category in q:
            return False
        q.append(category)
        if self._on_enqueue is not None:
            self._on_enqueue(category)
        return True

    def remove_query(self, category: str) -> bool:
        q = self._data[QUEUE_KEY]
        if category in q:
            q.remove(category)
            return True
        return False

    # reserved-key accessors ---------------------------------------------------

    @property
    def perception_halted(self) -> bool:
        return bool(self._data[HALTED_KEY])

    @perception_halted.setter
    def perception_halted(self, value: bool) -> None:
        self._data[HALTED_KEY] = bool(value)

    @property
    def held_object(self) -> Optional[str]:
        return self._data[HELD_KEY]

    @held_object.setter
    def held_object(self, value: Optional[str]) -> None:
        self._data[HELD_KEY] = value

    @property
    def resolved_frames(self) -> dict:
        return dict(self._data[RESOLVED_KEY])

    def set_resolved(self, category: str, instance_id: str) -> None:
        self._data[RESOLVED_KEY][category] = instance_id

    def clear_resolved(self, category: str) -> None:
        self._data[RESOLVED_KEY].pop(category, None)


# --- ticking ----------------------------------------------------------------


@dataclass
class TickContext:
    """Per-tick carrier: blackboard, leaf dispatch and the visit log."""

    blackboard: Blackboard
    runtime: object  # provides tick_condition(node, ctx) / tick_action(node, ctx)
    visit_log: list[tuple[str, NodeStatus]] = field(default_factory=list)


def tick_tree(tree: BTNode, ctx: TickContext, validate: bool = True) -> NodeStatus:
    """Tick the tree once from the root; returns the root status.

    Structural errors are raised before any leaf is evaluated. Every visited
    node is appended to ctx.visit_log with the status it returned, children
    before parents.
    """
    if validate:
        validate_tree(tree)
    return _tick(tree, ctx)


def _tick(node: BTNode, ctx: TickContext) -> NodeStatus:
    if node.kind is NodeKind.SEQUENCE:
        status = NodeStatus.SUCCESS
        for child in node.children:
            status = _tick(child, ctx)
            if status is not NodeStatus.SUCCESS:
                break
    elif node.kind is NodeKind.FALLBACK:
        status = NodeStatus.FAILURE
        for child in node.children:
            status = _tick(child, ctx)
            if status is not NodeStatus.FAILURE:
                break
    elif node.kind is NodeKind.CONDITION:
        status = ctx.runtime.tick_condition(node, ctx)
        if status is NodeStatus.RUNNING:
            raise TreeStructureError(
                f"condition {node.label!r} returned Running; conditions are instant checks"
            )
    else:
        status = ctx.runtime.tick_action(node, ctx)
    if not isinstance(status, NodeStatus):
        raise TypeError(f"leaf {node.label!r} returned {status!r}, not a NodeStatus")
    ctx.visit_log.append((node.label, status))
    return status


# --- serialization ----------------------------------------------------------

_KIND_BY_NAME = {k.value: k for k in NodeKind}


def tree_to_doc(tree: BTNode) -> dict:
    doc: dict = {"kind": tree.kind.value, "label": tree.label}
    if tree.payload is not None:
        doc["payload"] = tree.payload
    if tree.kind in CONTROL_KINDS:
        doc["children"] = [tree_to_doc(c) for c in tree.children]
    return doc


def _node_from_doc(doc, path: str, seen: set[str]) -> BTNode:
    if not isinstance(doc, dict):
        raise TreeParseError("node must be a JSON object", path)
    kind_name = doc.get("kind")
    if kind_name not in _KIND_BY_NAME:
        raise TreeParseError(f"unknown node kind {kind_name!r}", path)
    kind = _KIND_BY_NAME[kind_name]
    label = doc.get("label")
    if not isinstance(label, str) or not label:
        raise TreeParseError("missing or empty label", path)
    if label in seen:
        raise TreeParseError(f"duplicate label {label!r}", path)
    seen.add(label)
    payload = doc.get("payload")
    if payload is not None and not isinstance(payload, dict):
        raise TreeParseError("payload must be an object", path)
    children_doc = doc.get("children")
    if kind in CONTROL_KINDS:
        if not isinstance(children_doc, list) or not children_doc:
            raise TreeParseError(f"{kind_name} node needs a non-empty children list", path)
        children = [
            _node_from_doc(c, f"{path}.children[{i}]", seen)
            for i, c in enumerate(children_doc)
        ]
        return BTNode(kind, label, children, payload)
    if children_doc:
        raise TreeParseError(f"{kind_name} node must not have children", path)
    return BTNode(kind, label, payload=payload)


def parse_tree(text: str) -> BTNode:
    """Parse the JSON tree format; raises TreeParseError with a JSON path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeParseError(f"invalid JSON: {exc}") from exc
    return _node_from_doc(doc, "$", set())


def load_tree(path) -> BTNode:
    with open(path, "r") as fh:
        return parse_tree(fh.read())


def render_tree(tree: BTNode, fmt: str = "text") -> str:
    """Render a tree deterministically.

    "text" is canonical JSON that parse_tree accepts back; "dot" is a Graphviz
    document where Sequence nodes show an arrow glyph and Fallback nodes a
    question mark.
    """
    validate_tree(tree)
    if fmt == "text":
        return json.dumps(tree_to_doc(tree), indent=2) + "\n"
    if fmt == "dot":
        return _render_dot(tree)
    raise ValueError(f"unknown render format {fmt!r}")


def _render_dot(tree: BTNode) -> str:
    lines = ["digraph bt {", "  node [fontname=\"Helvetica\"];"]
    ids: dict[int, str] = {}
    for i, node in enumerate(tree.iter_nodes()):
        ids[id(node)] = f"n{i}"
    for node in tree.iter_nodes():
        nid = ids[id(node)]
        if node.kind is NodeKind.SEQUENCE:
            lines.append(f'  {nid} [shape=box label="→\\n{_esc(node.label)}"];')
        elif node.kind is NodeKind.FALLBACK:
            lines.append(f'  {nid} [shape=box label="?\\n{_esc(node.label)}"];')
        elif node.kind is NodeKind.CONDITION:
            lines.append(f'  {nid} [shape=ellipse label="{_esc(node.label)}"];')
        else:
            lines.append(f'  {nid} [shape=ellipse style=bold label="{_esc(node.label)}"];')
    for node in tree.iter_nodes():
        for child in node.children:
            lines.append(f"  {ids[id(node)]} -> {ids[id(child)]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _esc(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
