"""Pick-and-place behavior trees learned from demonstrations, with yes/no
dialogue to clear up ambiguous object references at run time."""

from .bt import (
    BASE_FRAME,
    Blackboard,
    BTNode,
    NodeKind,
    NodeStatus,
    TickContext,
    TreeParseError,
    TreeStructureError,
    action,
    condition,
    count_nodes,
    fallback,
    load_tree,
    parse_tree,
    render_tree,
    sequence,
    tick_tree,
    tree_to_doc,
    validate_tree,
)
from .config import Config, DEFAULT_CONFIG, load_config
from .dialogue import (
    DialogueState,
    NotAmbiguous,
    Question,
    RelationStatement,
    SpatialRelation,
    apply_resolution,
    candidates,
    dialogue_step,
    form_question,
    relations,
    select_statement,
)
from .executor import Executor, RunResult, events_to_jsonl, run_tree
from .lfd import (
    DemoAction,
    Demonstration,
    DemoInconsistency,
    FewerThanThreeDemos,
    GoalCondition,
    PlannerError,
    attach_disambiguation,
    extract_goal,
    group_demos,
    infer_frame,
    load_demos,
    plan_bt,
    resolve_group_goals,
    save_demos,
)
from .perception import (
    Detection,
    FrameEntry,
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
    WorldState,
    begin_pick,
    begin_release,
    check_at_pose,
    grasp_point,
    scene_from_doc,
    scene_to_doc,
    step_world,
)

__version__ = "0.1.0"
