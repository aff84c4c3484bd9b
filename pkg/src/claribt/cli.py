"""Command line: learn a tree from demos, run it against a scene, serve the
gateway, export Graphviz."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bt import load_tree, render_tree
from .config import DEFAULT_CONFIG, load_config
from .executor import events_to_jsonl, run_tree
from .gateway import RunService, create_app
from .lfd import (
    FewerThanThreeDemos,
    LfdError,
    attach_disambiguation,
    group_demos,
    load_demos,
    plan_bt,
    resolve_group_goals,
)
from .world import scene_from_doc


def _load_config(path):
    if path is None:
        return DEFAULT_CONFIG
    return load_config(path)


def _load_scene(path):
    return scene_from_doc(json.loads(Path(path).read_text()))


@click.group()
def main():
    """Pick-and-place behavior trees learned from demonstrations, with yes/no
    disambiguation of ambiguous object references."""


@main.command()
@click.argument("demos_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Tree JSON output; stdout when omitted.")
@click.option("--no-disambiguation", is_flag=True, help="Skip the scene-clearing subtree.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def learn(demos_path, output, no_disambiguation, config_path):
    """Learn a behavior tree from a demonstration file."""
    config = _load_config(config_path)
    try:
        demos = load_demos(demos_path)
        if len(demos) < 3:
            raise FewerThanThreeDemos(len(demos))
        for i, group in enumerate(group_demos(demos, config)):
            goals = resolve_group_goals(group, config)
            click.echo(f"group {i + 1}: {len(group)} demonstrations")
            for goal in goals:
                pose = ", ".join(f"{v:.3f}" for v in goal.target_pose)
                click.echo(
                    f"  {goal.mode} {goal.category} at ({pose}) "
                    f"[inferred frame: {goal.frame}]"
                )
        tree = plan_bt(demos, config)
        if not no_disambiguation:
            tree = attach_disambiguation(tree)
    except FewerThanThreeDemos as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except LfdError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    text = render_tree(tree, "text")
    if output:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("tree_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--answers", "answers_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON list of {query, yes_for} scripted operator answers.")
@click.option("--max-ticks", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--log", "log_path", type=click.Path(dir_okay=False), help="Write the event log (JSON lines).")
@click.option("--serve", is_flag=True, help="Answer questions over HTTP instead of a script.")
@click.option("--port", type=int, default=8080, envvar="CLARIBT_PORT", show_default=True)
@click.option("--pace", type=float, default=0.5, show_default=True,
              help="Seconds between ticks when serving.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def run(tree_path, scene_path, answers_path, max_ticks, seed, log_path, serve, port, pace, config_path):
    """Run a tree against a scene; exits 0 only on success."""
    config = _load_config(config_path)
    if max_ticks is not None:
        config = config.replace(max_ticks=max_ticks)
    tree = load_tree(tree_path)
    scene = _load_scene(scene_path)
    answers = json.loads(Path(answers_path).read_text()) if answers_path else None

    counts: dict[str, int] = {}
    for obj in scene:
        counts[obj.category] = counts.get(obj.category, 0) + 1
    ambiguous = sorted(c for c, n in counts.items() if n >= 2)
    if ambiguous and not answers and not serve:
        click.echo(
            f"error: scene has several {', '.join(ambiguous)}; questions would go "
            "unanswered. Provide --answers or --serve.",
            err=True,
        )
        sys.exit(2)

    if serve:
        import uvicorn

        service = RunService(config)
        service.start(tree, scene, seed=seed, answers=answers, pace=pace)
        app = create_app(service)
        click.echo(f"serving the run on http://127.0.0.1:{port}")
        uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
        return

    result = run_tree(tree, scene, config=config, seed=seed, answers=answers)
    if log_path:
        Path(log_path).write_text(events_to_jsonl(result.events))
    questions = sum(1 for e in result.events if e["kind"] == "QuestionAsked")
    click.echo(f"result: {result.status} after {result.ticks} ticks, {questions} questions")
    sys.exit(0 if result.status == "success" else 1)


@main.command()
@click.option("--port", type=int, default=8080, envvar="CLARIBT_PORT", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--pace", type=float, default=0.5, show_default=True,
              help="Seconds between ticks for runs started over HTTP.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def serve(port, host, pace, config_path):
    """Serve the gateway; runs are started with POST /run."""
    import uvicorn

    config = _load_config(config_path)
    service = RunService(config)
    service.pace = pace
    app = create_app(service)
    click.echo(f"gateway on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("export-dot")
@click.argument("tree_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Output file; stdout when omitted.")
def export_dot(tree_path, output):
    """Render a tree file as Graphviz dot."""
    text = render_tree(load_tree(tree_path), "dot")
    if output:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
