"""Stage costs, base-policy rollouts and the lookahead rollout policy.

``fantasy_step``, ``stage_cost`` and ``rollout_value`` work directly on
beliefs with exact posterior refits. ``rollout_policy_step`` evaluates the
same lookahead objective with the batched engine in ``lookahead``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..estimator import Belief, surrogate_loss
from ..gp import KernelSpec
from ..scm import Intervention, Normal
from .costs import CostModel
from .de import Dimension, differential_evolution
from .lookahead import FantasySimulator, Realizations, discounted_costs

Policy = Callable[[Belief], Intervention]


@dataclass(frozen=True)
class RolloutConfig:
    lookahead: int = 1
    horizon: int = 5
    trajectories: int = 10
    gamma: float = 0.9
    fantasies: int = 10
    samples: int = 1
    de_pop: int = 10
    de_iters: int = 30
    joint: bool = False
    terminal: str = "surrogate"

    def __post_init__(self):
        if min(self.lookahead, self.horizon, self.trajectories, self.fantasies, self.samples) < 1:
            raise ValueError("lookahead, horizon, trajectories, fantasies and samples must be >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.terminal not in ("surrogate", "zero"):
            raise ValueError(f"unknown terminal {self.terminal!r}")


def passive_policy(b: Belief) -> Intervention:
    return Intervention.passive()


passive_policy.open_loop = True


def default_exo_sampler(graph):
    def sample(rng):
        return {vid: float(graph.var(vid).distribution.sample(rng)) for vid in sorted(graph.exogenous())}

    return sample


def _with_kernel(b: Belief, kernel) -> Belief:
    if kernel is None:
        return b
    kernels = {v: kernel for v in b.kernels} if isinstance(kernel, KernelSpec) else dict(kernel)
    return Belief(b.graph, b.grids, b.posteriors, kernels)


def fantasy_step(b: Belief, u: Intervention, exo_sampler=None, kernel=None, rng=None, M: int = 1):
    """One simulated measurement under a model realization drawn from ``b``.

    All ``M`` samples come from the same realization with independent
    exogenous draws and noise. Returns the updated belief and the samples.
    """
    rng = rng if rng is not None else np.random.default_rng()
    b = _with_kernel(b, kernel)
    exo_sampler = exo_sampler or default_exo_sampler(b.graph)
    real = Realizations(b, 1, rng)
    draws = [exo_sampler(rng) for _ in range(M)]
    exo = {vid: np.array([[[d[vid] for d in draws]]]) for vid in draws[0]}
    noise = {vid: rng.standard_normal((1, 1, M)) for vid in b.graph.endogenous()}
    sim = FantasySimulator(real, exo, noise, 1, M)
    _, records = sim.simulate([u], with_loss=False, with_samples=True)
    records = records[0]
    return b.updated(records), [s for _, s in records]


def stage_cost(b: Belief, u: Intervention, cfg: RolloutConfig, cost: CostModel, rng, exo_sampler=None) -> float:
    """Expected surrogate change from ``u`` over ``cfg.fantasies`` fantasies, plus c(u)."""
    before = surrogate_loss(b)
    after = [surrogate_loss(fantasy_step(b, u, exo_sampler, None, rng, cfg.samples)[0]) for _ in range(cfg.fantasies)]
    return float(np.mean(after)) - before + cost(u)


@dataclass
class FantasyTrajectory:
    steps: list = field(default_factory=list)  # (belief, intervention, samples, stage cost)
    final: Belief | None = None


def fantasy_trajectory(b: Belief, cfg: RolloutConfig, cost: CostModel, base: Policy, rng, first=None, exo_sampler=None) -> FantasyTrajectory:
    """Simulate ``first`` (if given) then ``cfg.horizon`` base-policy steps.

    Each stage cost is the realized surrogate change of its fantasy plus c(u).
    """
    traj = FantasyTrajectory()
    cur, cur_loss = b, surrogate_loss(b)
    plan = ([first] if first is not None else []) + [None] * cfg.horizon
    for u in plan:
        u = base(cur) if u is None else u
        nxt, samples = fantasy_step(cur, u, exo_sampler, None, rng, cfg.samples)
        nxt_loss = surrogate_loss(nxt)
        traj.steps.append((cur, u, samples, nxt_loss - cur_loss + cost(u)))
        cur, cur_loss = nxt, nxt_loss
    traj.final = cur
    return traj


def _terminal(cfg: RolloutConfig, terminal):
    if terminal is not None:
        return terminal
    return surrogate_loss if cfg.terminal == "surrogate" else (lambda b: 0.0)


def trajectory_value(traj: FantasyTrajectory, gamma: float, terminal) -> float:
    total = sum(gamma**j * g for j, (_, _, _, g) in enumerate(traj.steps))
    return total + gamma ** len(traj.steps) * terminal(traj.final)


def rollout_value(b: Belief, cfg: RolloutConfig, cost: CostModel, base: Policy = passive_policy, terminal=None, rng=None, exo_sampler=None) -> float:
    """Mean over ``cfg.trajectories`` fantasy trajectories of the base policy's discounted cost."""
    rng = rng if rng is not None else np.random.default_rng()
    term = _terminal(cfg, terminal)
    vals = [
        trajectory_value(fantasy_trajectory(b, cfg, cost, base, rng, None, exo_sampler), cfg.gamma, term)
        for _ in range(cfg.trajectories)
    ]
    return float(np.mean(vals))


def lookahead_value(b: Belief, u: Intervention, cfg: RolloutConfig, cost: CostModel, base: Policy = passive_policy, rng=None, exo_sampler=None) -> float:
    """Slow-path one-step objective g(b,u) + gamma * E[rollout value of b'], via exact refits."""
    rng = rng if rng is not None else np.random.default_rng()
    term = _terminal(cfg, None)
    n = cfg.fantasies * cfg.trajectories
    vals = [trajectory_value(fantasy_trajectory(b, cfg, cost, base, rng, u, exo_sampler), cfg.gamma, term) for _ in range(n)]
    return float(np.mean(vals))


# -- fast lookahead -----------------------------------------------------------


def search_dimension(b: Belief, vid: str) -> Dimension:
    spec = b.graph.var(vid)
    if spec.range.is_discrete or spec.range.is_bounded:
        return Dimension.of(spec.range)
    if isinstance(spec.distribution, Normal):
        lo, hi = spec.distribution.support()
        return Dimension(max(lo, spec.range.lo), min(hi, spec.range.hi))
    raise ValueError(f"no finite search interval for {vid}")


def candidate_kinds(b: Belief, joint: bool = False) -> list[tuple[str, ...]]:
    ctrl = b.graph.controllable()
    kinds = [()] + [(v,) for v in ctrl]
    if joint and len(ctrl) > 1:
        kinds.append(tuple(ctrl))
    return kinds


def continuation_set(b: Belief, dims: dict) -> list[Intervention]:
    """Finite menu for steps beyond the first: do(∅) plus each knob at a few levels."""
    out = [Intervention.passive()]
    for vid, dm in dims.items():
        if dm.values is not None and len(dm.values) <= 5:
            levels = dm.values
        elif dm.values is not None:
            levels = dm.values[[0, len(dm.values) // 2, -1]]
        else:
            levels = [dm.lo, 0.5 * (dm.lo + dm.hi), dm.hi]
        out.extend(Intervention({vid: float(x)}) for x in levels)
    return out


class LookaheadObjective:
    """The lookahead objective q(u) under common random numbers.

    ``q(u) = mean_k [ sum_j gamma^j (L_{j+1} - L_j + c(u_j)) + gamma^n L_n ]``
    over ``fantasies * trajectories`` simulated trajectories, where the first
    ``lookahead`` interventions are ``u`` followed by a greedy open-loop
    continuation, and the remaining ``horizon`` steps follow the base policy
    evaluated at the root belief. Construction consumes ``rng``; the object
    is deterministic afterwards.
    """

    def __init__(self, b: Belief, cfg: RolloutConfig, cost: CostModel, base: Policy, rng: np.random.Generator):
        self.b, self.cfg, self.cost = b, cfg, cost
        K = cfg.fantasies * cfg.trajectories
        steps = cfg.lookahead + cfg.horizon
        self.real = Realizations(b, K, rng)
        self.sim = FantasySimulator.draw(self.real, steps, cfg.samples, rng)
        self.base_u = base(b)
        self.dims = {v: search_dimension(b, v) for v in b.graph.controllable()}
        self._menu = continuation_set(b, self.dims) if cfg.lookahead > 1 else []
        self._seq_cache: dict = {}
        self.evaluations = 0

    def sequence_value(self, seq: tuple) -> float:
        if seq not in self._seq_cache:
            path, _ = self.sim.simulate(list(seq))
            costs = [self.cost(u) for u in seq]
            vals = discounted_costs(path, costs, self.cfg.gamma, self.cfg.terminal == "surrogate")
            self._seq_cache[seq] = float(vals.mean())
            self.evaluations += 1
        return self._seq_cache[seq]

    def plan(self, u: Intervention) -> tuple:
        cfg = self.cfg
        tail = (self.base_u,) * cfg.horizon
        prefix = (u,)
        for depth in range(1, cfg.lookahead):
            fill = (self.base_u,) * (cfg.lookahead - depth - 1)
            best = None
            for c in self._menu:
                seq = prefix + (c,) + fill + tail
                val = self.sequence_value(seq)
                if best is None or val < best[0]:
                    best = (val, c)
            prefix = prefix + (best[1],)
        return prefix + tail

    def __call__(self, u: Intervention) -> float:
        return self.sequence_value(self.plan(u))


@dataclass
class Decision:
    chosen: Intervention
    objective: float
    evaluations: list  # (kind, intervention, objective, wallclock ms)


def rollout_policy_step(b: Belief, cfg: RolloutConfig, cost: CostModel, base: Policy = passive_policy, rng=None, de_rng=None) -> Decision:
    """Minimize the lookahead objective over do(∅) and each candidate kind.

    Each non-passive kind gets one DE run over its assigned values. Ties
    keep the earlier candidate, so do(∅) wins ties.
    """
    rng = rng if rng is not None else np.random.default_rng()
    obj = LookaheadObjective(b, cfg, cost, base, rng)
    if de_rng is None:
        de_rng = np.random.default_rng(rng.integers(2**63))
    evaluations = []
    best = None
    for kind in candidate_kinds(b, cfg.joint):
        t0 = time.perf_counter()
        if not kind:
            u = Intervention.passive()
            val = obj(u)
        else:
            dims = [obj.dims[v] for v in kind]

            def f(x, kind=kind):
                return obj(Intervention(zip(kind, map(float, x))))

            x, val = differential_evolution(f, dims, cfg.de_pop, cfg.de_iters, de_rng)
            u = Intervention(zip(kind, map(float, x)))
        ms = 1e3 * (time.perf_counter() - t0)
        evaluations.append((u.kind, u, val, ms))
        if best is None or val < best[1]:
            best = (u, val)
    return Decision(best[0], best[1], evaluations)
