"""Simulated target systems with do-interventions and evaluation-only truth oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .gp import KernelSpec
from .policy.costs import CostModel
from .scm import (
    ENDOGENOUS,
    EXOGENOUS,
    CausalGraph,
    Constant,
    GroundTruthScm,
    Intervention,
    Normal,
    Range,
    ScmError,
    VariableSpec,
    evaluate_scm,
    validate_intervention,
)


class TruthOracle:
    """Noiseless access to the active causal functions, for scoring only."""

    def __init__(self, graph: CausalGraph, functions: Mapping[str, Callable]):
        self._graph = graph
        self._functions = functions

    def __call__(self, vid: str, points) -> np.ndarray:
        graph = self._graph
        spec = graph.var(vid)
        if spec.exogenous:
            raise ScmError(f"{vid} is exogenous")
        parents = graph.parents(vid)
        inputs = graph.input_parents(vid)
        pts = np.asarray(points, dtype=float).reshape(-1, len(inputs))
        for j, p in enumerate(inputs):
            col = pts[:, j]
            r = graph.var(p).range
            if r.is_discrete:
                ok = np.isin(col, r.values)
            else:
                ok = (col >= r.lo - 1e-12) & (col <= r.hi + 1e-12)
            if not np.all(ok):
                raise ScmError(f"input for {p} outside its range")
        out = np.empty(len(pts))
        for i, row in enumerate(pts):
            full = dict(zip(inputs, row))
            x = np.array([full.get(p, 0.0) for p in parents])  # noise parents at 0
            out[i] = spec.range.clip(float(self._functions[vid](x)))
        return out


@dataclass
class Environment:
    """A time-indexed ground-truth SCM.

    ``regimes`` is a list of ``(start_t, functions)`` sorted by start time.
    Measurement noise is added to endogenous variables that have no noise
    parent; variables with a noise parent get their noise structurally.
    """

    name: str
    graph: CausalGraph
    regimes: list
    noise_var: dict
    cost: CostModel
    kernels: dict
    grid_mass: float = 1.0
    scenario: int | None = None
    t: int = 1

    @property
    def switch_steps(self) -> list[int]:
        return [start for start, _ in self.regimes[1:]]

    def _functions(self):
        active = self.regimes[0][1]
        for start, fns in self.regimes:
            if self.t >= start:
                active = fns
        return active

    def scm(self) -> GroundTruthScm:
        return GroundTruthScm(self.graph, self._functions())

    def truth(self) -> TruthOracle:
        return TruthOracle(self.graph, self._functions())

    def step(self, u: Intervention, M: int, rng: np.random.Generator) -> list[dict]:
        validate_intervention(self.graph, u)
        scm = self.scm()
        endo = sorted(self.graph.endogenous())
        samples = []
        for _ in range(M):
            exo = scm.sample_exogenous(rng)
            noise = rng.standard_normal(len(endo))
            s = evaluate_scm(scm, exo, u)
            for z, vid in zip(noise, endo):
                var = self.noise_var.get(vid, 0.0)
                if vid in u or var == 0.0:
                    continue
                s[vid] = float(self.graph.var(vid).range.clip(s[vid] + math.sqrt(var) * z))
            samples.append(s)
        return samples

    def advance(self) -> "Environment":
        self.t += 1
        return self


def env_step(env: Environment, u: Intervention, M: int, rng: np.random.Generator) -> list[dict]:
    return env.step(u, M, rng)


def advance_time(env: Environment) -> Environment:
    return env.advance()


def truth_eval(env: Environment, vid: str, x) -> float:
    return float(env.truth()(vid, np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])


# -- illustrative example ---------------------------------------------------

ILLUSTRATIVE_NOISE = 0.05


def illustrative_graph() -> CausalGraph:
    return CausalGraph(
        (
            VariableSpec("U", EXOGENOUS, True, Range.unbounded(), Normal(0.0, 0.1)),
            VariableSpec("X", ENDOGENOUS, True, Range.interval(-5, 5)),
            VariableSpec("Z", ENDOGENOUS, True, Range.interval(-5, 20)),
            VariableSpec("Y", ENDOGENOUS, True, Range.interval(-5, 5)),
        ),
        (("U", "X"), ("X", "Z"), ("Z", "Y")),
    ).check()


ILLUSTRATIVE_FUNCTIONS = {
    "X": lambda x: x[0],
    "Z": lambda x: math.exp(-x[0]),
    "Y": lambda x: math.cos(x[0]) - math.exp(-x[0] / 20.0),
}


def make_illustrative_env(seed: int | None = None, grid_mass: float = 41.0) -> Environment:
    """The four-variable chain U -> X -> Z -> Y.

    ``seed`` is accepted for interface symmetry; randomness is supplied per
    step. ``grid_mass`` defaults to the point count of a 41-point grid, i.e.
    an unnormalized Riemann sum.
    """
    graph = illustrative_graph()
    return Environment(
        name="illustrative",
        graph=graph,
        regimes=[(1, ILLUSTRATIVE_FUNCTIONS)],
        noise_var={v: ILLUSTRATIVE_NOISE for v in graph.endogenous()},
        cost=CostModel({}, passive=0.0, default=1.0),
        kernels={v: KernelSpec(ILLUSTRATIVE_NOISE) for v in graph.endogenous()},
        grid_mass=grid_mass,
    )


# -- service-mesh environment -----------------------------------------------

MU = 12.0  # requests per second per CPU
BASE_LATENCY = 0.05
DOWNSTREAM_DELAY = 0.02
R_CEILING = 10.0
S1_BACKGROUND = 20.0  # requests/s added at each shared node once S1 starts
LOAD_UNIT = 50.0  # loads enter the GPs in units of the 50 requests/s range
MESH_NOISE = {"Lc": 0.25, "R": 0.01}
MESH_COSTS = {"L": 3000.0, "P": 1000.0, "B": 2000.0, "C": 3000.0}
MESH_GRID_MASS = 1.0e5


def node_delay(load: float, capacity: float) -> float:
    if load >= capacity:
        return R_CEILING
    return min(1.0 / (capacity - load), R_CEILING)


def carried_load(x) -> float:
    b, load = x
    return (1.0 - b) * load


def response_time(lc1, lc2, p1, p2, c1, c3, p_own, background=0.0) -> float:
    load1 = p1 * lc1 + p2 * lc2 + background
    load3 = (1.0 - p1) * lc1 + (1.0 - p2) * lc2 + background
    d1 = node_delay(load1, MU * c1)
    d3 = node_delay(load3, MU * c3)
    r = BASE_LATENCY + p_own * d1 + (1.0 - p_own) * d3 + DOWNSTREAM_DELAY
    return min(r, R_CEILING)


def _mesh_var(vid, kind, controllable, rng_, dist=None, noise=False, unit=1.0):
    return VariableSpec(vid, kind, controllable, rng_, dist, noise, unit)


def mesh_graph(scenario: int) -> CausalGraph:
    unit01, load, cpu = Range.interval(0, 1), Range.interval(0, 50), Range.discrete(range(1, 6))
    resp = Range.interval(0, 10)
    eps = Normal(0.0, MESH_NOISE["R"])
    if scenario == 1:
        nominal = {"B1": 0.0, "B2": 0.0, "L1": 4.0, "L2": 15.0, "P1": 0.5, "P2": 0.5, "C1": 1.0, "C3": 1.0}
        variables = [
            _mesh_var("B1", EXOGENOUS, True, unit01, Constant(nominal["B1"])),
            _mesh_var("B2", EXOGENOUS, True, unit01, Constant(nominal["B2"])),
            _mesh_var("L1", EXOGENOUS, True, load, Constant(nominal["L1"]), unit=LOAD_UNIT),
            _mesh_var("L2", EXOGENOUS, True, load, Constant(nominal["L2"]), unit=LOAD_UNIT),
            _mesh_var("P1", EXOGENOUS, True, unit01, Constant(nominal["P1"])),
            _mesh_var("P2", EXOGENOUS, True, unit01, Constant(nominal["P2"])),
            _mesh_var("C1", EXOGENOUS, True, cpu, Constant(nominal["C1"])),
            _mesh_var("C3", EXOGENOUS, True, cpu, Constant(nominal["C3"])),
            _mesh_var("eps_R1", EXOGENOUS, False, Range.unbounded(), eps, noise=True),
            _mesh_var("eps_R2", EXOGENOUS, False, Range.unbounded(), eps, noise=True),
            _mesh_var("Lc1", ENDOGENOUS, False, load, unit=LOAD_UNIT),
            _mesh_var("Lc2", ENDOGENOUS, False, load, unit=LOAD_UNIT),
            _mesh_var("R1", ENDOGENOUS, False, resp),
            _mesh_var("R2", ENDOGENOUS, False, resp),
        ]
        r_parents = ["Lc1", "Lc2", "P1", "P2", "C1", "C3"]
        edges = [("B1", "Lc1"), ("L1", "Lc1"), ("B2", "Lc2"), ("L2", "Lc2")]
        edges += [(p, "R1") for p in r_parents] + [("eps_R1", "R1")]
        edges += [(p, "R2") for p in r_parents] + [("eps_R2", "R2")]
    elif scenario == 2:
        variables = [
            _mesh_var("B2", EXOGENOUS, True, unit01, Constant(0.0)),
            _mesh_var("L2", EXOGENOUS, True, load, Constant(1.0), unit=LOAD_UNIT),
            _mesh_var("P2", EXOGENOUS, True, unit01, Constant(0.5)),
            _mesh_var("C1", EXOGENOUS, True, cpu, Constant(1.0)),
            _mesh_var("C3", EXOGENOUS, True, cpu, Constant(1.0)),
            _mesh_var("eps_R2", EXOGENOUS, False, Range.unbounded(), eps, noise=True),
            _mesh_var("Lc2", ENDOGENOUS, False, load, unit=LOAD_UNIT),
            _mesh_var("R2", ENDOGENOUS, False, resp),
        ]
        edges = [("B2", "Lc2"), ("L2", "Lc2")]
        edges += [(p, "R2") for p in ["Lc2", "P2", "C1", "C3"]] + [("eps_R2", "R2")]
    else:
        raise ScmError(f"invalid scenario {scenario!r}; expected 1 or 2")
    return CausalGraph(tuple(variables), tuple(edges)).check()


def _scenario1_functions():
    return {
        "Lc1": carried_load,
        "Lc2": carried_load,
        "R1": lambda x: response_time(*x[:6], p_own=x[2]) + x[6],
        "R2": lambda x: response_time(*x[:6], p_own=x[3]) + x[6],
    }


def _scenario2_functions(background: float):
    def r2(x):
        lc2, p2, c1, c3, eps = x
        return response_time(0.0, lc2, 0.0, p2, c1, c3, p_own=p2, background=background) + eps

    return {"Lc2": carried_load, "R2": r2}


def mesh_costs(graph: CausalGraph) -> CostModel:
    per = {v: MESH_COSTS[v[0]] for v in graph.controllable()}
    return CostModel(per, passive=1.0, default=0.0)


def make_mesh_env(scenario: int = 1, seed: int | None = None, switch_t: int = 11, grid_mass: float = MESH_GRID_MASS) -> Environment:
    """Two-service mesh with blocking, routing and scalable CPUs at nodes 1 and 3."""
    graph = mesh_graph(scenario)
    if scenario == 1:
        regimes = [(1, _scenario1_functions())]
    else:
        regimes = [(1, _scenario2_functions(0.0)), (switch_t, _scenario2_functions(S1_BACKGROUND))]
    noise = {v: MESH_NOISE["Lc"] for v in graph.endogenous() if v.startswith("Lc")}
    kernels = {}
    for v in graph.endogenous():
        family = "Lc" if v.startswith("Lc") else "R"
        kernels[v] = KernelSpec(MESH_NOISE[family] / graph.var(v).unit ** 2)
    return Environment(
        name="mesh",
        graph=graph,
        regimes=regimes,
        noise_var=noise,
        cost=mesh_costs(graph),
        kernels=kernels,
        grid_mass=grid_mass,
        scenario=scenario,
    )


def make_scm_env(scm: GroundTruthScm, noise_var=0.05, cost: CostModel | None = None, grid_mass: float = 1.0, name: str = "custom") -> Environment:
    """Stationary environment around any ground-truth SCM.

    ``noise_var`` is one measurement-noise variance for every endogenous
    variable without a noise parent, or a per-variable mapping.
    """
    graph = scm.graph
    endo = graph.endogenous()
    if isinstance(noise_var, Mapping):
        noise = {v: float(noise_var.get(v, 0.0)) for v in endo}
    else:
        noise = {v: float(noise_var) for v in endo}
    for v in endo:
        if any(graph.var(p).noise for p in graph.parents(v)):
            noise[v] = 0.0
    kernels = {}
    for v in endo:
        var = noise[v]
        if var == 0.0:
            noise_parents = [graph.var(p).distribution for p in graph.parents(v) if graph.var(p).noise]
            var = sum(d.var for d in noise_parents if isinstance(d, Normal)) or 1e-6
        kernels[v] = KernelSpec(var / graph.var(v).unit ** 2)
    return Environment(
        name=name,
        graph=graph,
        regimes=[(1, dict(scm.functions))],
        noise_var=noise,
        cost=cost or CostModel(),
        kernels=kernels,
        grid_mass=grid_mass,
    )


def make_env(name: str, scenario: int | None = None, **kwargs) -> Environment:
    if name == "illustrative":
        return make_illustrative_env(**kwargs)
    if name == "mesh":
        return make_mesh_env(scenario if scenario is not None else 1, **kwargs)
    raise ScmError(f"unknown environment {name!r}")
