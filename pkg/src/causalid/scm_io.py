"""Load SCM descriptions from YAML documents.

A document has ``variables`` (id, kind, controllable, range, plus optional
distribution, noise and unit), ``edges`` as ``[parent, child]`` pairs and,
for ground-truth models, ``functions`` mapping each endogenous id to a
built-in function name with keyword parameters::

    functions:
      Z: {name: exp_neg}
      Y: {name: linear, params: {coef: [2.0], intercept: 1.0}}
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from .scm import (
    CausalGraph,
    Constant,
    GroundTruthScm,
    Normal,
    Range,
    ScmError,
    Uniform,
    VariableSpec,
)


def _identity():
    return lambda x: float(x[0])


def _linear(coef, intercept=0.0):
    coef = np.asarray(coef, dtype=float)
    return lambda x: float(coef @ np.asarray(x[: len(coef)]) + intercept)


def _exp_neg(scale=1.0):
    return lambda x: math.exp(-scale * x[0])


def _cos_minus_exp(decay=20.0):
    return lambda x: math.cos(x[0]) - math.exp(-x[0] / decay)


def _carried_load():
    from .envs import carried_load

    return carried_load


def _response_time(own: int, background=0.0):
    # parents: Lc1, Lc2, P1, P2, C1, C3[, eps]; ``own`` selects the routing weight (0 or 1)
    from .envs import response_time

    def f(x):
        eps = x[6] if len(x) > 6 else 0.0
        return response_time(*x[:6], p_own=x[2 + own], background=background) + eps

    return f


BUILTINS: dict[str, Callable[..., Callable]] = {
    "identity": _identity,
    "linear": _linear,
    "exp_neg": _exp_neg,
    "cos_minus_exp": _cos_minus_exp,
    "carried_load": _carried_load,
    "response_time": _response_time,
}


def _range(doc) -> Range:
    if doc is None or doc == "unbounded":
        return Range.unbounded()
    if isinstance(doc, dict):
        if "values" in doc:
            return Range.discrete(doc["values"])
        return Range.interval(float(doc["lo"]), float(doc["hi"]))
    lo, hi = doc
    return Range.interval(float(lo), float(hi))


def _distribution(doc):
    if doc is None:
        return None
    kind = doc.get("family")
    if kind == "normal":
        return Normal(float(doc["mean"]), float(doc["var"]))
    if kind == "constant":
        return Constant(float(doc["value"]))
    if kind == "uniform":
        return Uniform(float(doc["lo"]), float(doc["hi"]))
    raise ScmError(f"unknown distribution family {kind!r}")


def parse_scm(doc: dict):
    """Return ``(graph, functions)``; ``functions`` is ``None`` if the document has none."""
    allowed = {"variables", "edges", "functions"}
    extra = set(doc) - allowed
    if extra:
        raise ScmError(f"unknown SCM keys {sorted(extra)}")
    variables = []
    for v in doc.get("variables", []):
        variables.append(
            VariableSpec(
                id=str(v["id"]),
                kind=v["kind"],
                controllable=bool(v.get("controllable", False)),
                range=_range(v.get("range")),
                distribution=_distribution(v.get("distribution")),
                noise=bool(v.get("noise", False)),
                unit=float(v.get("unit", 1.0)),
            )
        )
    graph = CausalGraph(tuple(variables), tuple(tuple(e) for e in doc.get("edges", []))).check()
    fdoc = doc.get("functions")
    if fdoc is None:
        return graph, None
    functions = {}
    for vid, ref in fdoc.items():
        name = ref["name"] if isinstance(ref, dict) else ref
        params = ref.get("params", {}) if isinstance(ref, dict) else {}
        if name not in BUILTINS:
            raise ScmError(f"unknown built-in function {name!r}")
        functions[vid] = BUILTINS[name](**params)
    return graph, functions


def load_scm(path) -> GroundTruthScm | CausalGraph:
    graph, functions = parse_scm(yaml.safe_load(Path(path).read_text()))
    return graph if functions is None else GroundTruthScm(graph, functions)
