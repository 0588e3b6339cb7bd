"""Command-line entry points: serve, session management, experiments."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .evaluation import (
    ExperimentSpec,
    run_recovery_experiment,
    run_weight_estimation_experiment,
    summarize_weight_estimation,
    vega_lite_spec,
    write_weight_estimation_csv,
)
from .inference import InferenceConfig
from .querying import SelectionMode, SelectionPolicy
from .session import (
    BudgetExhaustedError,
    DEFAULT_TEMPLATE,
    SessionStore,
    VoteBatch,
    create_session,
    import_answers,
    next_question,
    posterior_report,
    record_votes,
    record_insert,
)
from .tree_dist import ConceptDomain


@click.group()
def main():
    """Active learning of concept hierarchies."""


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default=None, help="session storage directory")
@click.option("--frontend", default=None, help="directory with the built web UI")
def serve(port, host, data_dir, frontend):
    """Run the HTTP session service."""
    import uvicorn

    from .service import create_app

    app = create_app(SessionStore(data_dir), frontend_dir=frontend)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.group()
def session():
    """Create and inspect sessions."""


@session.command("new")
@click.option("--concepts", help="comma-separated concept labels")
@click.option("--concepts-file", type=click.Path(exists=True))
@click.option("--root-label", default="root", show_default=True)
@click.option("--budget", default=100, show_default=True)
@click.option(
    "--policy",
    default="worst_case_gain",
    type=click.Choice([m.value for m in SelectionMode]),
    show_default=True,
)
@click.option("--m", default=10_000, show_default=True, help="samples per update")
@click.option("--beta", default="0.01", show_default=True, help="l1 coefficient or 'auto'")
@click.option("--seed", default=0, show_default=True)
@click.option("--template", default=DEFAULT_TEMPLATE, show_default=True)
@click.option("--data-dir", default=None)
def session_new(concepts, concepts_file, root_label, budget, policy, m, beta, seed, template, data_dir):
    """Create a session and print its id."""
    if concepts_file:
        labels = [ln.strip() for ln in Path(concepts_file).read_text().splitlines() if ln.strip()]
    elif concepts:
        labels = [c.strip() for c in concepts.split(",") if c.strip()]
    else:
        raise click.UsageError("provide --concepts or --concepts-file")
    cfg = InferenceConfig(
        m=m, beta=float(beta) if beta != "auto" else "auto", seed=seed
    )
    state = create_session(
        ConceptDomain(tuple(labels), root_label),
        cfg,
        SelectionPolicy(SelectionMode(policy)),
        budget,
        question_template=template,
    )
    SessionStore(data_dir).create(state)
    click.echo(state.id)


@main.command()
@click.option("--session", "session_id", required=True)
@click.option("--data-dir", default=None)
def ask(session_id, data_dir):
    """Interactive terminal loop: answer questions one by one."""
    store = SessionStore(data_dir)
    state = store.load(session_id)
    while True:
        try:
            q = next_question(state)
        except BudgetExhaustedError:
            click.echo("budget exhausted; session complete")
            break
        click.echo(state.question_text(q))
        answer = click.prompt("y/n/q", type=click.Choice(["y", "n", "q"]))
        if answer == "q":
            store.save_snapshot(state)
            break
        outcome = record_votes(
            store, state, VoteBatch(q, (1 if answer == "y" else 0,))
        )
        report = posterior_report(state)
        uncertain = ", ".join(u.label for u in report.uncertain) or "none"
        click.echo(
            f"recorded answer={outcome.record.answer} gamma={outcome.record.gamma:.3f} "
            f"remaining={outcome.remaining_budget} uncertain=[{uncertain}]"
        )


@main.command("import")
@click.argument("path", type=click.Path(exists=True))
@click.option("--session", "session_id", required=True)
@click.option("--data-dir", default=None)
def import_cmd(path, session_id, data_dir):
    """Replay a JSON-lines or CSV answer file into a session."""
    store = SessionStore(data_dir)
    state = store.load(session_id)
    count = import_answers(state, path)
    store.save_snapshot(state)
    click.echo(f"imported {count} answers; remaining budget {state.budget}")


@main.command()
@click.option("--session", "session_id", required=True)
@click.option(
    "--format", "fmt", default="json", type=click.Choice(["json", "dot"]), show_default=True
)
@click.option("--data-dir", default=None)
def report(session_id, fmt, data_dir):
    """Print the posterior report as JSON or the MAP tree as DOT."""
    state = SessionStore(data_dir).load(session_id)
    rep = posterior_report(state)
    if fmt == "json":
        click.echo(json.dumps(rep.to_dict(), indent=2))
    else:
        click.echo(rep.map_tree.to_dot(state.domain))


@main.command()
@click.argument("label")
@click.option("--session", "session_id", required=True)
@click.option("--data-dir", default=None)
def insert(label, session_id, data_dir):
    """Insert a new concept into the session's hierarchy distribution."""
    store = SessionStore(data_dir)
    state = store.load(session_id)
    record_insert(store, state, label)
    click.echo(f"inserted {label!r}; domain now has {state.domain.n} concepts")


@main.group()
def experiment():
    """Synthetic experiment replications."""


@experiment.command()
@click.option("--n", default=10, show_default=True)
@click.option("--noise", default=0.0, show_default=True)
@click.option(
    "--strategy",
    default="worst_case_gain",
    type=click.Choice([m.value for m in SelectionMode] + ["active", "random"]),
    show_default=True,
)
@click.option("--budget", default=None, type=int, help="defaults to 2*n^2")
@click.option("--m", default=10_000, show_default=True)
@click.option("--beta", default=0.01, show_default=True)
@click.option("--trials", default=10, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--out", default=None, help="prefix for CSV/JSON result files")
def recovery(n, noise, strategy, budget, m, beta, trials, seed, out):
    """Recover hidden ground-truth trees; prints the mean AUC trajectory tail."""
    if strategy == "active":
        strategy = SelectionMode.WORST_CASE_GAIN.value
    spec = ExperimentSpec(
        n=n,
        noise=noise,
        strategy=SelectionPolicy(SelectionMode(strategy)),
        budget=budget if budget is not None else 2 * n * n,
        m=m,
        beta=beta,
        trials=trials,
        seed=seed,
    )
    result = run_recovery_experiment(spec)
    mean = result.mean_auc_trajectory
    click.echo(f"final AUC per trial: {[round(float(a), 4) for a in result.final_auc]}")
    click.echo(f"mean final AUC: {float(mean[-1]) if mean.size else float('nan'):.4f}")
    click.echo(f"yes counts: {result.yes_counts}")
    click.echo(f"wall clock: {result.wall_clock:.1f}s")
    if out:
        result.write_csv(f"{out}.csv")
        Path(f"{out}.json").write_text(result.to_json())
        Path(f"{out}.vl.json").write_text(json.dumps(vega_lite_spec(result)))
        click.echo(f"wrote {out}.csv, {out}.json and {out}.vl.json")


@experiment.command()
@click.option("--n", default=20, show_default=True)
@click.option("--m-grid", default="100,1000,10000", show_default=True)
@click.option("--beta-grid", default="0.01", show_default=True)
@click.option("--trials", default=10, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--held-out", default=1000, show_default=True)
@click.option("--out", default=None, help="prefix for CSV/JSON result files")
def weights(n, m_grid, beta_grid, trials, seed, held_out, out):
    """Weight estimation quality versus sample count."""
    ms = [int(x) for x in m_grid.split(",")]
    betas = [float(x) for x in beta_grid.split(",")]
    rows = run_weight_estimation_experiment(n, ms, betas, trials, seed, held_out)
    summary = summarize_weight_estimation(rows)
    for (m, beta), stats in summary.items():
        click.echo(
            f"m={m:>7} beta={beta:<6} median ll fit={stats['median_ll_fit']:.4f} "
            f"truth={stats['median_ll_truth']:.4f} gap={stats['relative_gap']:.3%}"
        )
    if out:
        write_weight_estimation_csv(rows, f"{out}.csv")
        Path(f"{out}.json").write_text(
            json.dumps({f"{k[0]},{k[1]}": v for k, v in summary.items()}, indent=2)
        )
        click.echo(f"wrote {out}.csv and {out}.json")


if __name__ == "__main__":
    main()
