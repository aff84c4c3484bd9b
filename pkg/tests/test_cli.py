import json

import pytest
from click.testing import CliRunner

from claribt.bt import count_nodes, parse_tree
from claribt.cli import main
from claribt.demogen import generate_demo_set
from claribt.lfd import save_demos

from conftest import FIXTURES

DEMOS = str(FIXTURES / "demos_drop_banana_bowl.json")
TREE = str(FIXTURES / "tree_banana_bowl_manip.json")
SCENE_PLAIN = str(FIXTURES / "scene_one_banana_one_bowl.json")
SCENE_AMBIG = str(FIXTURES / "scene_two_bananas.json")
ANSWERS = str(FIXTURES / "answers_banana_b2.json")


@pytest.fixture()
def runner():
    return CliRunner()


def test_learn_writes_a_tree_with_the_clearing_subtree(runner, tmp_path):
    out = tmp_path / "tree.json"
    result = runner.invoke(main, ["learn", DEMOS, "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert "group 1: 3 demonstrations" in result.output
    assert "drop banana at" in result.output
    assert "[inferred frame: bowl]" in result.output
    tree = parse_tree(out.read_text())
    assert count_nodes(tree) == 11


def test_learn_without_disambiguation_prints_to_stdout(runner):
    result = runner.invoke(main, ["learn", DEMOS, "--no-disambiguation"])
    assert result.exit_code == 0
    doc_text = result.output[result.output.index("{") :]
    assert count_nodes(parse_tree(doc_text)) == 8


def test_learn_needs_three_demos(runner, tmp_path):
    path = tmp_path / "two.json"
    save_demos(generate_demo_set(7)[:2], path)
    result = runner.invoke(main, ["learn", str(path)])
    assert result.exit_code == 2
    assert "three demonstrations" in result.output


def test_run_succeeds_on_an_unambiguous_scene(runner, tmp_path):
    learned = tmp_path / "tree.json"
    assert runner.invoke(main, ["learn", DEMOS, "-o", str(learned)]).exit_code == 0
    log = tmp_path / "events.jsonl"
    result = runner.invoke(
        main, ["run", str(learned), SCENE_PLAIN, "--log", str(log)]
    )
    assert result.exit_code == 0, result.output
    assert "result: success after" in result.output
    assert "0 questions" in result.output
    events = [json.loads(l) for l in log.read_text().splitlines()]
    assert events[-1]["kind"] == "TickResult"


def test_run_refuses_an_ambiguous_scene_without_answers(runner, tmp_path):
    learned = tmp_path / "tree.json"
    runner.invoke(main, ["learn", DEMOS, "-o", str(learned)])
    result = runner.invoke(main, ["run", str(learned), SCENE_AMBIG])
    assert result.exit_code == 2
    assert "questions would go unanswered" in result.output
    assert "--answers or --serve" in result.output


def test_run_with_scripted_answers(runner, tmp_path):
    learned = tmp_path / "tree.json"
    runner.invoke(main, ["learn", DEMOS, "-o", str(learned)])
    result = runner.invoke(main, ["run", str(learned), SCENE_AMBIG, "--answers", ANSWERS])
    assert result.exit_code == 0, result.output
    assert "result: success after 8 ticks, 2 questions" in result.output


def test_run_failure_exits_nonzero(runner):
    # the manipulation tree alone cannot clear an ambiguous scene
    result = runner.invoke(
        main, ["run", TREE, SCENE_AMBIG, "--answers", ANSWERS, "--max-ticks", "10"]
    )
    assert result.exit_code == 1
    assert "result: failure after 10 ticks" in result.output


def test_export_dot(runner):
    result = runner.invoke(main, ["export-dot", TREE])
    assert result.exit_code == 0
    assert result.output.startswith("digraph")
    assert '"pick banana"' in result.output
