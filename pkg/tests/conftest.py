import json
from pathlib import Path

import pytest

from claribt.demogen import generate_demo_set
from claribt.lfd import attach_disambiguation, plan_bt
from claribt.world import SceneObject, scene_from_doc

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture_scene(name: str) -> list[SceneObject]:
    return scene_from_doc(json.loads((FIXTURES / name).read_text()))


def scene_one_banana_one_bowl() -> list[SceneObject]:
    return load_fixture_scene("scene_one_banana_one_bowl.json")


def scene_two_bananas() -> list[SceneObject]:
    return load_fixture_scene("scene_two_bananas.json")


def scene_two_bowls() -> list[SceneObject]:
    return load_fixture_scene("scene_two_bowls.json")


def scene_double() -> list[SceneObject]:
    return load_fixture_scene("scene_double.json")


@pytest.fixture(scope="session")
def demo_set():
    return generate_demo_set(seed=7)


@pytest.fixture(scope="session")
def plain_tree(demo_set):
    """Learned manipulation tree without the disambiguation subtree."""
    return plan_bt(demo_set)


@pytest.fixture(scope="session")
def full_tree(plain_tree):
    return attach_disambiguation(plain_tree)


# --- acceptance reporting -----------------------------------------------------

ACCEPTANCE_RESULTS: dict[str, bool] = {}


def record_acceptance(name: str, ok: bool) -> bool:
    ACCEPTANCE_RESULTS[name] = bool(ok)
    return bool(ok)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(
            f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
        )
