"""Administration and evaluation command line.

Verbs: ``serve``, ``replay``, ``inspect-user``, ``show-summary``,
``init-store``. All verbs take ``--config`` (YAML); flags override the
matching config keys for the run.
"""

from __future__ import annotations

import sys

import click

from .config import EngineConfig, load_config
from .engine import MemoryEngine
from .evalharness import SUPPORTED_CATEGORIES, replay_eval


def _load(config_path: str | None) -> EngineConfig:
    return load_config(config_path)


@click.group()
def main() -> None:
    """Persistent, recency-weighted memory for chat applications."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8800, show_default=True)
def serve(config_path: str | None, host: str, port: int) -> None:
    """Run the HTTP service."""
    from .service import serve as run_service

    run_service(_load(config_path), host=host, port=port)


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--mode", type=click.Choice(["memory", "full-context"]), default="memory", show_default=True)
@click.option("--category", type=click.Choice(list(SUPPORTED_CATEGORIES)), default=None,
              help="Restrict to one question category.")
@click.option("--k", type=int, default=None, help="Override retrieval.k.")
@click.option("--decay-rate", type=float, default=None,
              help="Override retrieval.decay_rate (0 forces uniform weights).")
@click.option("--provider", "provider_kind", type=click.Choice(["mock", "http"]), default=None,
              help="Override provider.kind.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write the structured report to this file.")
@click.option("--ablation", is_flag=True, default=False,
              help="Also run a decay-rate-0 pass and report the accuracy delta.")
def replay(
    dataset: str,
    config_path: str | None,
    mode: str,
    category: str | None,
    k: int | None,
    decay_rate: float | None,
    provider_kind: str | None,
    report_path: str | None,
    ablation: bool,
) -> None:
    """Replay a benchmark dataset and report accuracy/tokens/latency."""
    config = _load(config_path)
    if k is not None:
        config.retrieval.k = k
    if decay_rate is not None:
        config.retrieval.decay_rate = decay_rate
    if provider_kind is not None:
        config.provider.kind = provider_kind
    config.validate()
    report = replay_eval(
        dataset,
        config,
        mode=mode,
        categories=[category] if category else None,
        ablation=ablation,
    )
    click.echo(report.table())
    if report_path:
        report.save(report_path)
        click.echo(f"report written to {report_path}")


@main.command("inspect-user")
@click.argument("name")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def inspect_user(name: str, config_path: str | None) -> None:
    """Print a user's persona graph and stored triplets."""
    engine = MemoryEngine.from_config(_load(config_path))
    try:
        if not engine.store.has_user_history(name):
            click.echo(f"user {name!r} has no history")
            return
        graph = engine.knowledge.get_persona(name)
        click.echo(f"user: {name}")
        click.echo(f"nodes ({len(graph.nodes)}): {', '.join(sorted(graph.nodes))}")
        click.echo(f"edges ({len(graph.edges)}):")
        for subject, predicate, obj, triplet_id in sorted(graph.edges, key=lambda e: e[3]):
            click.echo(f"  #{triplet_id} ({subject}) -[{predicate}]-> ({obj})")
    finally:
        engine.close()


@main.command("show-summary")
@click.argument("session_id")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def show_summary(session_id: str, config_path: str | None) -> None:
    """Print the rolling summary for a session."""
    engine = MemoryEngine.from_config(_load(config_path))
    try:
        record = engine.store.get_summary(session_id)
        if record is None:
            click.echo(f"no summary for session {session_id!r}")
            sys.exit(1)
        click.echo(f"session: {record.session_id} (user {record.user_name})")
        click.echo(f"updated: {record.updated_at.isoformat()}  turns covered: {record.turns_covered}")
        click.echo(record.summary_text)
    finally:
        engine.close()


@main.command("init-store")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def init_store(config_path: str | None) -> None:
    """Create (or verify) the store and index files."""
    config = _load(config_path)
    engine = MemoryEngine.from_config(config)
    try:
        click.echo(f"store ready at {config.store.path} (schema ok)")
        click.echo(f"index ready at {config.index.path} ({len(engine.index)} entries)")
    finally:
        engine.close()


if __name__ == "__main__":
    main()
