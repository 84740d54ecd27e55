"""Factorized GP belief over causal functions, point estimates and losses."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.stats import norm, qmc

from .gp import FixedFunction, GpData, GpPosterior, KernelSpec, sample_function
from .scm import CausalGraph, Constant, Dataset, Normal, ScmError, Uniform


@dataclass(frozen=True)
class VariableGrid:
    """Quadrature points (raw units, one column per input parent) and weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("grid weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class EvaluationGrid:
    """Discretized loss measure for every endogenous variable.

    ``mass`` is the total measure of each variable's region. With ``mass=1``
    the loss is a probability-weighted average; larger masses rescale the
    loss relative to intervention costs.
    """

    grids: Mapping[str, VariableGrid]
    mass: float = 1.0

    def __getitem__(self, vid: str) -> VariableGrid:
        return self.grids[vid]

    def __iter__(self):
        return iter(self.grids)


def _marginal(spec, n: int):
    """1-D quadrature for one parent: (points, weights, inverse-cdf for Sobol)."""
    rng_ = spec.range
    dist = spec.distribution
    if spec.exogenous and isinstance(dist, Constant) and not spec.controllable:
        v = float(dist.value)
        return np.array([v]), np.ones(1), lambda u: np.full_like(u, v)
    if rng_.is_discrete:
        vals = np.asarray(rng_.values)
        return vals, np.full(len(vals), 1.0 / len(vals)), lambda u: vals[np.minimum((u * len(vals)).astype(int), len(vals) - 1)]
    if spec.exogenous and isinstance(dist, Normal):
        lo, hi = dist.support()
        lo, hi = max(lo, rng_.lo), min(hi, rng_.hi)
        pts = np.linspace(lo, hi, n)
        w = dist.pdf(pts)
        icdf = lambda u: np.clip(norm.ppf(np.clip(u, 1e-9, 1 - 1e-9), dist.mean, np.sqrt(dist.var)), lo, hi)
        return pts, w / w.sum(), icdf
    if spec.exogenous and isinstance(dist, Uniform):
        lo, hi = dist.lo, dist.hi
    else:
        if not rng_.is_bounded:
            raise ScmError(f"no finite measure for parent {spec.id}")
        lo, hi = rng_.lo, rng_.hi
    pts = np.linspace(lo, hi, n)
    return pts, np.full(n, 1.0 / n), lambda u: lo + u * (hi - lo)


def make_grids(
    graph: CausalGraph,
    resolution: int = 41,
    sobol_points: int = 256,
    mass: float = 1.0,
    seed: int = 0,
) -> EvaluationGrid:
    """Build per-variable grids over the input parents of each endogenous node.

    Exogenous parents use their declared law (Gaussian density, uniform, or
    a point mass for constants). A constant law on a controllable knob only
    records its current setting, so such knobs are uniform over their range,
    as are endogenous parents and exogenous parents without a law. A single varying
    continuous input gets ``resolution`` points, all-discrete inputs are
    enumerated, and several varying inputs use a scrambled Sobol design.
    Point-mass inputs are held fixed in every design.
    """
    grids = {}
    for vid in graph.endogenous():
        parents = graph.input_parents(vid)
        specs = [graph.var(p) for p in parents]
        margs = [_marginal(s, resolution) for s in specs]
        if not parents:
            grids[vid] = VariableGrid(np.zeros((1, 0)), np.ones(1))
            continue
        live = [j for j, m in enumerate(margs) if len(m[0]) > 1]
        if len(live) <= 1 or all(specs[j].range.is_discrete for j in live):
            mesh = np.meshgrid(*[m[0] for m in margs], indexing="ij")
            wmesh = np.meshgrid(*[m[1] for m in margs], indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            w = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
            grids[vid] = VariableGrid(pts, w / w.sum())
        else:
            sob = qmc.Sobol(len(live), scramble=True, seed=seed).random(sobol_points)
            cols = [np.full(sobol_points, m[0][0]) for m in margs]
            for k, j in enumerate(live):
                cols[j] = margs[j][2](sob[:, k])
            pts = np.stack(cols, axis=1)
            grids[vid] = VariableGrid(pts, np.full(sobol_points, 1.0 / sobol_points))
    return EvaluationGrid(grids, mass)


def _as_kernels(graph: CausalGraph, kernel) -> dict[str, KernelSpec]:
    if isinstance(kernel, KernelSpec):
        return {v: kernel for v in graph.endogenous()}
    return {v: kernel[v] for v in graph.endogenous()}


@dataclass
class Belief:
    """One independent posterior per endogenous variable, in scaled units.

    Inputs to variable ``v``'s posterior are its non-noise parents divided
    by their units; targets are ``v`` divided by its unit.
    """

    graph: CausalGraph
    grids: EvaluationGrid
    posteriors: dict
    kernels: dict[str, KernelSpec]
    _cache: dict = field(default_factory=dict, repr=False)

    def inputs(self, vid: str) -> list[str]:
        return self.graph.input_parents(vid)

    def scale_inputs(self, vid: str, X) -> np.ndarray:
        units = np.array([self.graph.var(p).unit for p in self.inputs(vid)])
        return np.asarray(X, dtype=float).reshape(-1, len(units)) / units

    def scaled_grid(self, vid: str) -> np.ndarray:
        key = ("grid", vid)
        if key not in self._cache:
            self._cache[key] = self.scale_inputs(vid, self.grids[vid].points)
        return self._cache[key]

    def grid_moments(self, vid: str) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance on the grid (scaled units)."""
        key = ("moments", vid)
        if key not in self._cache:
            self._cache[key] = self.posteriors[vid].predict(self.scaled_grid(vid))
        return self._cache[key]

    def n_train(self, vid: str) -> int:
        return self.posteriors[vid].n

    def updated(self, records) -> "Belief":
        """Bayes update with extra (intervention, sample) records, no eviction."""
        new = {}
        for vid, post in self.posteriors.items():
            X, y = training_pairs(self.graph, records, vid)
            if len(y):
                new[vid] = post.with_data(X, y)
            else:
                new[vid] = post
        return Belief(self.graph, self.grids, new, self.kernels)

    @classmethod
    def point_mass(cls, graph: CausalGraph, grids: EvaluationGrid, functions: Mapping[str, Callable], kernel=KernelSpec()):
        """Belief concentrated on ``functions`` (raw-unit callables of the input parents)."""
        kernels = _as_kernels(graph, kernel)
        posts = {}
        for vid in graph.endogenous():
            units = np.array([graph.var(p).unit for p in graph.input_parents(vid)])
            unit_v = graph.var(vid).unit
            fn = functions[vid]
            posts[vid] = FixedFunction(lambda x, fn=fn, units=units, u=unit_v: fn(np.asarray(x) * units) / u, len(units), kernels[vid])
        return cls(graph, grids, posts, kernels)


def training_pairs(graph: CausalGraph, records, vid: str) -> tuple[np.ndarray, np.ndarray]:
    """Scaled (inputs, targets) for ``vid`` from records where it was not intervened."""
    parents = graph.input_parents(vid)
    units = np.array([graph.var(p).unit for p in parents])
    unit_v = graph.var(vid).unit
    X, y = [], []
    for u, sample in records:
        if vid in u:
            continue
        X.append([sample[p] for p in parents])
        y.append(sample[vid])
    X = np.asarray(X, dtype=float).reshape(-1, len(parents)) / units
    return X, np.asarray(y, dtype=float) / unit_v


def fit_belief(graph: CausalGraph, ds: Dataset, kernel, grids: EvaluationGrid) -> Belief:
    kernels = _as_kernels(graph, kernel)
    posts = {}
    for vid in graph.endogenous():
        X, y = training_pairs(graph, ds, vid)
        posts[vid] = GpPosterior(kernels[vid], GpData(X, y))
    return Belief(graph, grids, posts, kernels)


class EstimatedModel:
    """Posterior-mean causal functions, evaluated in raw units."""

    def __init__(self, belief: Belief):
        self.belief = belief

    def __call__(self, vid: str, points) -> np.ndarray:
        b = self.belief
        mean = b.posteriors[vid].mean(b.scale_inputs(vid, points))
        return mean * b.graph.var(vid).unit

    def on_grid(self, vid: str) -> np.ndarray:
        return self.belief.grid_moments(vid)[0] * self.belief.graph.var(vid).unit


def point_estimate(b: Belief) -> EstimatedModel:
    return EstimatedModel(b)


TruthFn = Callable[[str, np.ndarray], np.ndarray]


def loss_by_variable(est: EstimatedModel, truth: TruthFn, grids: EvaluationGrid) -> dict[str, float]:
    """Weighted squared error per variable, in the estimator's units."""
    graph = est.belief.graph
    out = {}
    for vid in grids:
        g = grids[vid]
        t = np.asarray(truth(vid, g.points), dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError(f"truth undefined on the grid of {vid}")
        err = (t - est(vid, g.points)) / graph.var(vid).unit
        out[vid] = float(grids.mass * np.dot(g.weights, err**2))
    return out


def loss(est: EstimatedModel, truth: TruthFn, grids: EvaluationGrid) -> float:
    return sum(loss_by_variable(est, truth, grids).values())


def surrogate_by_variable(b: Belief) -> dict[str, float]:
    return {
        vid: float(b.grids.mass * np.dot(b.grids[vid].weights, b.grid_moments(vid)[1]))
        for vid in b.grids
    }


def surrogate_loss(b: Belief, mode: str = "analytic", samples: int = 1000, rng: np.random.Generator | None = None) -> float:
    """Expected loss of the posterior mean under the belief.

    ``analytic`` integrates the posterior variance; ``monte-carlo`` averages
    the loss of joint grid draws against the posterior mean.
    """
    if mode == "analytic":
        return sum(surrogate_by_variable(b).values())
    if mode != "monte-carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if samples < 1 or rng is None:
        raise ValueError("monte-carlo mode needs samples >= 1 and an rng")
    total = 0.0
    for vid in b.grids:
        post = b.posteriors[vid]
        if isinstance(post, FixedFunction):
            continue
        grid = b.scaled_grid(vid)
        draws = sample_function(post, grid, rng, size=samples)
        mean = b.grid_moments(vid)[0]
        total += b.grids.mass * float(np.mean((draws - mean) ** 2 @ b.grids[vid].weights))
    return total


LOSS_COLUMNS = ["seed", "t", "variable", "loss", "surrogate", "n_train"]


def loss_rows(seed: int, t: int, b: Belief, truth: TruthFn) -> list[list]:
    per_loss = loss_by_variable(point_estimate(b), truth, b.grids)
    per_sur = surrogate_by_variable(b)
    rows = [[seed, t, vid, per_loss[vid], per_sur[vid], b.n_train(vid)] for vid in b.grids]
    rows.append([seed, t, "total", sum(per_loss.values()), sum(per_sur.values()), sum(b.n_train(v) for v in b.grids)])
    return rows


def write_loss_report(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOSS_COLUMNS)
        for r in rows:
            w.writerow([r[0], r[1], r[2], repr(float(r[3])), repr(float(r[4])), r[5]])
