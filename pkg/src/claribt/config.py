"""Tunable thresholds, tolerances and durations shared across the package.

All distances are meters, durations are seconds of virtual clock time.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Config:
    # executor timing
    tick_period: float = 2.5
    max_ticks: int = 100
    # arm action durations (virtual seconds)
    pick_duration: float = 5.0
    release_duration: float = 5.0
    # success tolerances for the two release modes
    place_tolerance: float = 0.03
    drop_radius: float = 0.10
    drop_height: float = 0.20
    # execution noise radius applied at release completion
    place_noise: float = 0.01
    drop_noise: float = 0.04
    # reachability, measured from the robot base at the origin
    workspace_radius: float = 0.6
    # detector
    detection_jitter: float = 0.0
    camera_x_limit: float = 0.8
    camera_y_min: float = 0.0
    camera_y_max: float = 1.0
    # spatial relations
    relation_margin: float = 0.03
    close_radius: float = 0.15
    viewer_perspective: str = "robot"  # or "operator" (mirrors left/right, front/behind)
    # learning
    frame_dispersion_max: float = 0.05
    frame_tie_margin: float = 0.001
    goal_move_min: float = 0.02
    goal_group_tolerance: float = 0.03
    # perception bookkeeping
    association_tie: float = 0.001
    multi_move_warning: float = 0.02

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **overrides) -> "Config":
        return dataclasses.replace(self, **overrides)


DEFAULT_CONFIG = Config()

_FIELD_NAMES = {f.name for f in dataclasses.fields(Config)}


def load_config(path: str | Path | None, **overrides) -> Config:
    """Build a Config from an optional JSON file plus keyword overrides.

    Unknown keys in the file are rejected so typos fail loudly.
    """
    values: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValueError("config file must contain a JSON object")
        unknown = set(raw) - _FIELD_NAMES
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Config(**values)
