"""The online identification loop and its CSV outputs."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimator import LOSS_COLUMNS, fit_belief, loss_by_variable, make_grids, point_estimate, surrogate_by_variable
from ..policy import passive_policy, rollout_policy_step
from ..rng import derive_rng
from ..scm import Dataset, Intervention
from .config import ExperimentConfig, dump_config

RUN_COLUMNS = [
    "seed",
    "t",
    "dataset_size",
    "loss_total",
    "surrogate_loss",
    "cumulative_cost",
    "intervention_kind",
    "intervention_values",
    "wallclock_ms",
]
DECISION_COLUMNS = ["seed", "t", "candidate_kind", "values", "objective", "chosen", "wallclock_ms"]


@dataclass
class RunRecord:
    seed: int
    t: int
    dataset_size: int
    loss_total: float
    surrogate_loss: float
    cumulative_cost: float
    intervention: Intervention
    wallclock_ms: float

    def row(self, wallclock: bool) -> list:
        return [
            self.seed,
            self.t,
            self.dataset_size,
            repr(float(self.loss_total)),
            repr(float(self.surrogate_loss)),
            repr(float(self.cumulative_cost)),
            self.intervention.kind,
            self.intervention.format_values(),
            f"{self.wallclock_ms:.3f}" if wallclock else "",
        ]


@dataclass
class SeedResult:
    seed: int
    records: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    variables: list = field(default_factory=list)


def run_seed(cfg: ExperimentConfig, seed: int, base_dir: Path | None = None) -> SeedResult:
    env = cfg.build_env(base_dir)
    graph = env.graph
    grids = make_grids(graph, cfg.grid.resolution, cfg.grid.sobol_points, env.grid_mass, cfg.grid.seed)
    rcfg = cfg.rollout.build()
    gamma = rcfg.gamma
    ds = Dataset(cfg.capacity)
    env_rng = derive_rng(seed, "env")
    out = SeedResult(seed, variables=graph.ids)
    cum, prev = 0.0, None
    for t in range(1, cfg.horizon + 1):
        b = fit_belief(graph, ds, env.kernels, grids)
        per_loss = loss_by_variable(point_estimate(b), env.truth(), grids)
        per_sur = surrogate_by_variable(b)
        total, sur = sum(per_loss.values()), sum(per_sur.values())
        if prev is not None:
            prev_loss, prev_u = prev
            cum += gamma ** (t - 2) * (total - prev_loss + env.cost(prev_u))
        for vid in grids:
            out.losses.append([seed, t, vid, per_loss[vid], per_sur[vid], b.n_train(vid)])
        out.losses.append([seed, t, "total", total, sur, sum(b.n_train(v) for v in grids)])

        t0 = time.perf_counter()
        if cfg.policy == "passive":
            u = passive_policy(b)
            evals = [(u.kind, u, float("nan"), 0.0)]
        else:
            dec = rollout_policy_step(b, rcfg, env.cost, passive_policy, derive_rng(seed, "policy", t), derive_rng(seed, "de", t))
            u, evals = dec.chosen, dec.evaluations
        ms = 1e3 * (time.perf_counter() - t0)
        for kind, cand, val, cms in evals:
            out.decisions.append([seed, t, kind, cand.format_values(), val, cand == u, cms])
        out.records.append(RunRecord(seed, t, len(ds), total, sur, cum, u, ms))

        samples = env.step(u, rcfg.samples, env_rng)
        for i, s in enumerate(samples):
            out.trace.append([seed, t, i, u.kind, u.format_values()] + [s[v] for v in graph.ids])
        ds.extend(u, samples)
        env.advance()
        prev = (total, u)
    return out


def _run_seed_task(args):
    return run_seed(*args)


def run_seeds(cfg: ExperimentConfig, base_dir: Path | None = None, jobs: int | None = None) -> list[SeedResult]:
    """Run every seed; results come back in seed-list order for any ``jobs``."""
    jobs = cfg.jobs if jobs is None else jobs
    tasks = [(cfg, s, base_dir) for s in cfg.seeds]
    if jobs <= 1 or len(tasks) == 1:
        return [run_seed(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_seed_task, tasks))


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_outputs(cfg: ExperimentConfig, results: list[SeedResult], out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wall = cfg.output.record_wallclock
    _write(out_dir / "records.csv", RUN_COLUMNS, [r.row(wall) for res in results for r in res.records])
    variables = results[0].variables
    _write(
        out_dir / "trace.csv",
        ["seed", "t", "sample", "intervention_kind", "intervention_values"] + variables,
        [[_fmt(x) for x in row] for res in results for row in res.trace],
    )
    dec_rows = []
    for res in results:
        for row in res.decisions:
            *head, ms = row
            dec_rows.append([_fmt(x) for x in head] + [f"{ms:.3f}" if wall else ""])
    _write(out_dir / "decisions.csv", DECISION_COLUMNS, dec_rows)
    _write(out_dir / "losses.csv", LOSS_COLUMNS, [[_fmt(x) for x in row] for res in results for row in res.losses])
    dump_config(cfg, out_dir / "config.resolved.yaml")
    return out_dir / "records.csv"


def run_experiment(cfg: ExperimentConfig, out_dir=None, base_dir: Path | None = None, jobs: int | None = None) -> list[RunRecord]:
    """Run all seeds and, when ``out_dir`` is given, write the CSV outputs there."""
    results = run_seeds(cfg, base_dir, jobs)
    if out_dir is not None:
        write_outputs(cfg, results, out_dir)
    return [r for res in results for r in res.records]


def final_losses(records: list[RunRecord]) -> dict[int, float]:
    last = {}
    for r in records:
        if r.seed not in last or r.t > last[r.seed].t:
            last[r.seed] = r
    return {s: r.loss_total for s, r in last.items()}


SWEEP_COLUMNS = ["policy", "lookahead", "horizon", "mean_final_loss", "std_final_loss", "mean_step_seconds"]


def run_sweep(cfg: ExperimentConfig, grid, out_dir=None, base_dir: Path | None = None, jobs: int | None = None) -> list[list]:
    """One summary row for the passive base policy, then one per ``(lookahead, horizon)``."""
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid must be nonempty")
    settings = [("passive", None, None)] + [("rollout", l, m) for l, m in grid]
    rows = []
    for policy, lookahead, horizon in settings:
        update = {"policy": policy}
        if lookahead is not None:
            update["rollout"] = cfg.rollout.model_copy(update={"lookahead": lookahead, "horizon": horizon})
        sub = cfg.model_copy(update=update)
        sub_dir = None
        if out_dir is not None:
            label = "base" if policy == "passive" else f"l{lookahead}_m{horizon}"
            sub_dir = Path(out_dir) / label
        records = run_experiment(sub, sub_dir, base_dir, jobs)
        finals = np.array(list(final_losses(records).values()))
        step_s = float(np.mean([r.wallclock_ms for r in records])) / 1e3
        rows.append([policy, lookahead or "", horizon or "", float(finals.mean()), float(finals.std()), step_s])
    if out_dir is not None:
        _write(Path(out_dir) / "sweep.csv", SWEEP_COLUMNS, [[_fmt(x) for x in r] for r in rows])
    return rows


def format_sweep(rows) -> str:
    head = f"{'policy':<10}{'l':>4}{'m':>5}{'final loss':>16}{'std':>12}{'step (s)':>11}"
    lines = [head, "-" * len(head)]
    for policy, l, m, mean, std, sec in rows:
        lines.append(f"{policy:<10}{str(l):>4}{str(m):>5}{mean:>16.2f}{std:>12.2f}{sec:>11.3f}")
    return "\n".join(lines)
