"""Yes/no disambiguation: spatial statements about candidates and the
question automaton that walks them.

A statement relates one candidate instance to a landmark object. Statements
that only the candidate satisfies (discriminative) are preferred, then
statements whose landmark category is unique in the scene, then closer
landmarks. Questions are asked per candidate in distance order; the first
affirmative answer resolves the query.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .bt import Blackboard
from .config import Config, DEFAULT_CONFIG
from .geometry import dist, dist_xy
from .perception import FrameRegistry, FrameEntry, ResolutionVanished

logger = logging.getLogger(__name__)


class DialogueError(Exception):
    pass


class NotAmbiguous(DialogueError):
    pass


class NoStatement(DialogueError):
    """No spatial statement can tell the candidates apart (coincident scene)."""


class SpatialRelation(Enum):
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    IN_FRONT = "in_front"
    BEHIND = "behind"
    CLOSE_TO = "close_to"


RELATION_ORDER = list(SpatialRelation)

RELATION_PHRASES = {
    SpatialRelation.LEFT_OF: "to the left of",
    SpatialRelation.RIGHT_OF: "to the right of",
    SpatialRelation.IN_FRONT: "in front of",
    SpatialRelation.BEHIND: "behind",
    SpatialRelation.CLOSE_TO: "close to",
}

_MIRROR = {
    SpatialRelation.LEFT_OF: SpatialRelation.RIGHT_OF,
    SpatialRelation.RIGHT_OF: SpatialRelation.LEFT_OF,
    SpatialRelation.IN_FRONT: SpatialRelation.BEHIND,
    SpatialRelation.BEHIND: SpatialRelation.IN_FRONT,
    SpatialRelation.CLOSE_TO: SpatialRelation.CLOSE_TO,
}


def relations(
    a, b, config: Config = DEFAULT_CONFIG, perspective: Optional[str] = None
) -> set[SpatialRelation]:
    """All relations that hold between points a and b, seen from the robot.

    Axis relations need a margin along x (left/right) or y (front/behind);
    closeness is a horizontal radius. Coincident points (under 1 mm apart)
    yield the empty set with a warning. The operator perspective mirrors
    left/right and front/behind.
    """
    out: set[SpatialRelation] = set()
    if dist_xy(a, b) < 0.001:
        logger.warning("relations of near-coincident points requested; none hold")
        return out
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    margin = config.relation_margin
    if ax <= bx - margin:
        out.add(SpatialRelation.LEFT_OF)
    if ax >= bx + margin:
        out.add(SpatialRelation.RIGHT_OF)
    if ay <= by - margin:
        out.add(SpatialRelation.IN_FRONT)
    if ay >= by + margin:
        out.add(SpatialRelation.BEHIND)
    if dist_xy(a, b) <= config.close_radius:
        out.add(SpatialRelation.CLOSE_TO)
    if (perspective or config.viewer_perspective) == "operator":
        out = {_MIRROR[r] for r in out}
    return out


@dataclass(frozen=True)
class RelationStatement:
    candidate: str  # instance id the statement is about
    relation: SpatialRelation
    landmark_id: str
    landmark_category: str
    landmark_is_candidate: bool  # phrased as "the other <category>"
    discriminative: bool
    landmark_unique: bool
    score: float


def candidates(query: str, reg: FrameRegistry) -> list[FrameEntry]:
    """Instances of the query category, ordered by distance to the robot."""
    found = reg.instances_of(query)
    if reg.counts.get(query, 0) < 2 or len(found) < 2:
        raise NotAmbiguous(f"category {query!r} is not ambiguous")
    return sorted(
        found, key=lambda e: (dist(e.translation, (0, 0, 0)), e.instance_id)
    )


def _statements_for(
    cand: FrameEntry,
    cand_ids: set[str],
    landmarks: list[FrameEntry],
    others: list[FrameEntry],
    object_count: dict[str, int],
    config: Config,
) -> list[RelationStatement]:
    out = []
    for lm in landmarks:
        rels = relations(cand.translation, lm.translation, config)
        for rel in rels:
            disc = not any(
                rel in relations(o.translation, lm.translation, config)
                for o in others
                if o.instance_id != lm.instance_id
            )
            unique = object_count.get(lm.category, 0) == 1
            score = (
                2.0 * disc
                + 1.0 * unique
                - 0.001 * dist(cand.translation, lm.translation)
            )
            out.append(
                RelationStatement(
                    candidate=cand.instance_id,
                    relation=rel,
                    landmark_id=lm.instance_id,
                    landmark_category=lm.category,
                    landmark_is_candidate=lm.instance_id in cand_ids,
                    discriminative=disc,
                    landmark_unique=unique,
                    score=score,
                )
            )
    return out


def select_statement(
    cand: FrameEntry,
    cands: list[FrameEntry],
    objects: list[FrameEntry],
    config: Config = DEFAULT_CONFIG,
) -> RelationStatement:
    """Pick the best statement describing `cand` against the scene.

    Landmarks are the non-candidate objects first; the other candidates are
    only pulled in (phrased "the other <category>") when no discriminative
    statement exists without them. Ties break by relation declaration order,
    then landmark id.
    """
    cand_ids = {c.instance_id for c in cands}
    others = [c for c in cands if c.instance_id != cand.instance_id]
    object_count: dict[str, int] = {}
    for obj in objects:
        object_count[obj.category] = object_count.get(obj.category, 0) + 1
    non_cand = [o for o in objects if o.instance_id not in cand_ids]
    stmts = _statements_for(cand, cand_ids, non_cand, others, object_count, config)
    if not any(s.discriminative for s in stmts):
        stmts += _statements_for(cand, cand_ids, others, others, object_count, config)
    if not stmts:
        raise NoStatement(f"no spatial statement available for {cand.instance_id!r}")

    def sort_key(s: RelationStatement):
        return (-s.score, RELATION_ORDER.index(s.relation), s.landmark_id)

    return sorted(stmts, key=sort_key)[0]


def statement_holds(
    statement: RelationStatement, positions: dict[str, tuple], config: Config = DEFAULT_CONFIG
) -> bool:
    """Ground-truth recheck used at question emission time."""
    cand_pos = positions.get(statement.candidate)
    lm_pos = positions.get(statement.landmark_id)
    if cand_pos is None or lm_pos is None:
        return False
    return statement.relation in relations(cand_pos, lm_pos, config)


def form_question(query: str, statement: RelationStatement) -> str:
    """Template the yes/no question; the query string passes through verbatim
    so descriptors like "white plate" survive."""
    phrase = RELATION_PHRASES[statement.relation]
    if statement.landmark_is_candidate:
        landmark = f"the other {statement.landmark_category}"
    else:
        landmark = f"the {statement.landmark_category}"
    return f"Is the {query} {phrase} {landmark}?"


class DialoguePhase(Enum):
    ASKING = "asking"
    RESOLVED = "resolved"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class Question:
    query: str
    candidate: str
    statement: RelationStatement
    text: str


@dataclass(frozen=True)
class DialogueState:
    """One pass of yes/no questions over the candidates of a single query."""

    query: str
    candidates: tuple[str, ...]  # instance ids in asking order
    cursor: int = 0
    awaiting: bool = False
    phase: DialoguePhase = DialoguePhase.ASKING
    resolved_id: Optional[str] = None
    statements: dict = field(default_factory=dict)  # candidate id -> statement

    @classmethod
    def begin(cls, query: str, cands: list[FrameEntry]) -> "DialogueState":
        if len(cands) < 2:
            raise NotAmbiguous(f"category {query!r} is not ambiguous")
        return cls(query=query, candidates=tuple(c.instance_id for c in cands))

    def questions_asked(self) -> int:
        return len(self.statements)


def dialogue_step(
    state: DialogueState,
    answer: Optional[bool] = None,
    objects: Optional[list[FrameEntry]] = None,
    config: Config = DEFAULT_CONFIG,
) -> tuple[DialogueState, Optional[Question]]:
    """Advance the automaton by one step.

    With no answer and no outstanding question, emit the next question (this
    needs `objects`, the current visible scene). With an answer, consume it:
    yes resolves to the current candidate, no moves on, and running past the
    last candidate exhausts the pass. Answers without an outstanding question
    are logged and ignored.
    """
    if state.phase is not DialoguePhase.ASKING:
        if answer is not None:
            logger.warning("answer received for a finished dialogue; ignored")
        return state, None
    if answer is None:
        if state.awaiting:
            return state, None
        if objects is None:
            raise ValueError("emitting a question needs the current scene objects")
        by_id = {o.instance_id: o for o in objects}
        cands = [by_id[c] for c in state.candidates if c in by_id]
        if len(cands) < 2 or state.candidates[state.cursor] not in by_id:
            # scene changed under us; the executor rebuilds the dialogue
            return replace(state, phase=DialoguePhase.EXHAUSTED), None
        current = by_id[state.candidates[state.cursor]]
        stmt = select_statement(current, cands, objects, config)
        question = Question(
            query=state.query,
            candidate=current.instance_id,
            statement=stmt,
            text=form_question(state.query, stmt),
        )
        statements = dict(state.statements)
        statements[current.instance_id] = stmt
        return replace(state, awaiting=True, statements=statements), question
    if not state.awaiting:
        logger.warning("answer received while no question outstanding; ignored")
        return state, None
    if answer:
        return (
            replace(
                state,
                awaiting=False,
                phase=DialoguePhase.RESOLVED,
                resolved_id=state.candidates[state.cursor],
            ),
            None,
        )
    cursor = state.cursor + 1
    if cursor >= len(state.candidates):
        return replace(state, awaiting=False, cursor=cursor, phase=DialoguePhase.EXHAUSTED), None
    return replace(state, awaiting=False, cursor=cursor), None


def apply_resolution(
    reg: FrameRegistry, bb: Blackboard, query: str, chosen: str
) -> FrameRegistry:
    """Rename the chosen instance's frame to the bare query name.

    The other instances keep their indexed names, the resolution is recorded
    in the registry and mirrored on the blackboard, and the query leaves the
    disambiguation queue.
    """
    entry = reg.entry_for_instance(chosen)
    if entry is None or entry.category != query:
        raise ResolutionVanished(f"instance {chosen!r} is no longer a visible {query!r}")
    entries = {}
    for name, e in reg.entries.items():
        if e.instance_id == chosen:
            entries[query] = FrameEntry(
                name=query,
                instance_id=e.instance_id,
                category=e.category,
                translation=e.translation,
            )
        else:
            entries[name] = e
    resolved = dict(reg.resolved)
    resolved[query] = chosen
    bb.set_resolved(query, chosen)
    bb.remove_query(query)
    return FrameRegistry(
        entries=dict(sorted(entries.items())),
        counts=dict(reg.counts),
        resolved=resolved,
    )
