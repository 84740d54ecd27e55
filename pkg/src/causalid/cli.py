"""Command-line entry point: ``causalid run | sweep | plot | corr``."""

from __future__ import annotations

import ast
import sys
from pathlib import Path

import click
from pydantic import ValidationError

from .harness.config import load_config
from .harness.report import emit_correlation, emit_plots
from .harness.runner import final_losses, format_sweep, run_experiment, run_sweep


def parse_grid(text: str) -> list[tuple[int, int]]:
    """``"(1,5),(2,5)"`` -> ``[(1, 5), (2, 5)]``."""
    try:
        value = ast.literal_eval(f"[{text}]")
        pairs = [(int(a), int(b)) for a, b in value]
    except (ValueError, SyntaxError, TypeError) as exc:
        raise click.BadParameter(f"expected pairs like (1,5),(2,5); got {text!r}") from exc
    if not pairs:
        raise click.BadParameter("grid must contain at least one (lookahead, horizon) pair")
    return pairs


def _overrides(seeds, horizon, policy, out, jobs) -> dict:
    o = {}
    if seeds:
        o["seeds"] = [int(s) for s in seeds.split(",") if s.strip()]
    if horizon is not None:
        o["horizon"] = horizon
    if policy:
        o["policy"] = policy
    if out:
        o["output.dir"] = out
    if jobs is not None:
        o["jobs"] = jobs
    return o


def _load(config, **kw):
    try:
        return load_config(config, _overrides(**kw))
    except ValidationError as exc:
        raise click.ClickException(f"invalid config {config}:\n{exc}") from exc


def _common(f):
    f = click.option("--jobs", type=int, default=None, help="Worker processes (one seed per task).")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--policy", type=click.Choice(["passive", "rollout"]), default=None)(f)
    f = click.option("--horizon", type=int, default=None, help="Number of time steps T.")(f)
    f = click.option("--seeds", default=None, help="Comma-separated master seeds.")(f)
    return f


@click.group()
def main():
    """Online identification of causal functions with GP beliefs and rollout planning."""


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@_common
def run(config, seeds, horizon, policy, out, jobs):
    """Run one experiment and write records.csv, trace.csv, decisions.csv and losses.csv."""
    cfg = _load(config, seeds=seeds, horizon=horizon, policy=policy, out=out, jobs=jobs)
    out_dir = Path(cfg.output.dir)
    try:
        records = run_experiment(cfg, out_dir, base_dir=Path(config).parent)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    for seed, value in final_losses(records).items():
        click.echo(f"seed {seed}: final loss {value:.6g}")
    click.echo(f"wrote {out_dir / 'records.csv'}")


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--grid", "grid", required=True, help='(lookahead, horizon) pairs, e.g. "(1,5),(2,5)".')
@_common
def sweep(config, grid, seeds, horizon, policy, out, jobs):
    """Compare the base policy with rollout policies over a (lookahead, horizon) grid."""
    pairs = parse_grid(grid)
    cfg = _load(config, seeds=seeds, horizon=horizon, policy=policy, out=out, jobs=jobs)
    try:
        rows = run_sweep(cfg, pairs, Path(cfg.output.dir), base_dir=Path(config).parent)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(format_sweep(rows))


@main.command()
@click.argument("records", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--switch-t", type=int, default=None, help="Mark a system change at this step.")
def plot(records, out, switch_t):
    """Plot mean +- std loss curves of one or more records.csv files."""
    try:
        png, data = emit_plots(list(records), out, switch_t)
    except (ValueError, KeyError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {png} and {data}")


@main.command()
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def corr(trace, out):
    """Pearson correlation matrix over the variables of a trace.csv."""
    try:
        path = emit_correlation(trace, out)
    except (ValueError, KeyError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    sys.exit(main())
