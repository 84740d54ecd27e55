import numpy as np
import pytest

from causalid.envs import make_illustrative_env, make_scm_env
from causalid.estimator import fit_belief, make_grids
from causalid.policy import CostModel
from causalid.scm import ENDOGENOUS, EXOGENOUS, CausalGraph, Dataset, GroundTruthScm, Intervention, Normal, Range, VariableSpec


def random_dataset(env, n: int, rng: np.random.Generator) -> Dataset:
    """``n`` samples under a mix of passive and random single-variable interventions."""
    ds = Dataset()
    choices = [None, "X", "Z"]
    for _ in range(n):
        pick = choices[rng.integers(len(choices))]
        if pick is None:
            u = Intervention()
        else:
            r = env.graph.var(pick).range
            u = Intervention({pick: float(rng.uniform(r.lo, r.hi))})
        ds.extend(u, env.step(u, 1, rng))
    return ds


def random_belief(seed: int, mass: float = 1.0, n: int | None = None):
    env = make_illustrative_env()
    rng = np.random.default_rng(seed)
    grids = make_grids(env.graph, mass=mass)
    n = int(rng.integers(2, 15)) if n is None else n
    return fit_belief(env.graph, random_dataset(env, n, rng), env.kernels, grids), env


@pytest.fixture
def illustrative():
    return make_illustrative_env()


def discrete_knob_env(grid_mass: float = 10.0):
    """U -> X -> Y with X controllable over three values; the only knob."""
    graph = CausalGraph(
        (
            VariableSpec("U", EXOGENOUS, False, Range.unbounded(), Normal(0.0, 0.1)),
            VariableSpec("X", ENDOGENOUS, True, Range.discrete([-1.0, 0.0, 1.0])),
            VariableSpec("Y", ENDOGENOUS, False, Range.interval(-5, 5)),
        ),
        (("U", "X"), ("X", "Y")),
    ).check()
    fns = {"X": lambda x: round(float(np.clip(x[0], -1, 1))), "Y": lambda x: np.sin(2 * x[0])}
    return make_scm_env(GroundTruthScm(graph, fns), 0.05, CostModel({}, 0.0, 1.0), grid_mass)


# criterion number -> (passed, description, detail), filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
