"""Structural causal models: variables, graphs, interventions and datasets."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

EXOGENOUS = "exogenous"
ENDOGENOUS = "endogenous"


class ScmError(ValueError):
    """Raised for malformed graphs, interventions or samples."""


class GraphError(ScmError):
    def __init__(self, violation: str, detail: str = ""):
        self.violation = violation
        super().__init__(f"{violation}: {detail}" if detail else violation)


@dataclass(frozen=True)
class Range:
    """A closed interval ``[lo, hi]`` or a finite sorted set of reals."""

    lo: float
    hi: float
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.values is not None:
            if not self.values:
                raise ScmError("discrete range must be non-empty")
            if list(self.values) != sorted(self.values):
                raise ScmError("discrete range must be sorted")
        elif not self.lo <= self.hi:
            raise ScmError(f"interval range needs lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Range":
        return cls(float(lo), float(hi))

    @classmethod
    def discrete(cls, values: Iterable[float]) -> "Range":
        vals = tuple(sorted(float(v) for v in values))
        return cls(vals[0] if vals else 0.0, vals[-1] if vals else 0.0, vals)

    @classmethod
    def unbounded(cls) -> "Range":
        return cls(-math.inf, math.inf)

    @property
    def is_discrete(self) -> bool:
        return self.values is not None

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, v: float) -> bool:
        if self.values is not None:
            return float(v) in self.values
        return self.lo <= v <= self.hi

    def clip(self, v):
        """Clip scalar or array values into the range (nearest member for sets)."""
        if self.values is not None:
            vals = np.asarray(self.values)
            arr = np.asarray(v, dtype=float)
            idx = np.abs(arr[..., None] - vals).argmin(axis=-1)
            out = vals[idx]
            return float(out) if np.ndim(out) == 0 else out
        out = np.clip(v, self.lo, self.hi)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Normal:
    mean: float
    var: float

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, math.sqrt(self.var), size=size)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.var) / math.sqrt(2 * math.pi * self.var)

    def support(self, width: float = 4.0) -> tuple[float, float]:
        s = width * math.sqrt(self.var)
        return self.mean - s, self.mean + s


@dataclass(frozen=True)
class Constant:
    value: float

    def sample(self, rng: np.random.Generator, size=None):
        # consume one draw so that stream positions do not depend on the distribution family
        u = rng.random(size=size)
        return np.full_like(u, self.value) if size is not None else float(self.value)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size=size)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)


Distribution = Normal | Constant | Uniform


@dataclass(frozen=True)
class VariableSpec:
    """One SCM variable.

    ``noise`` marks exogenous noise terms that the learner never regresses on.
    ``unit`` is the declared measurement unit: the estimator works with
    ``value / unit``.
    """

    id: str
    kind: str
    controllable: bool = False
    range: Range = field(default_factory=Range.unbounded)
    distribution: Distribution | None = None
    noise: bool = False
    unit: float = 1.0

    def __post_init__(self):
        if self.kind not in (EXOGENOUS, ENDOGENOUS):
            raise ScmError(f"unknown variable kind {self.kind!r}")
        if self.noise and (self.kind != EXOGENOUS or self.controllable):
            raise ScmError(f"noise variable {self.id} must be exogenous and not controllable")
        if self.unit <= 0:
            raise ScmError("unit must be positive")

    @property
    def exogenous(self) -> bool:
        return self.kind == EXOGENOUS


@dataclass(frozen=True)
class CausalGraph:
    variables: tuple[VariableSpec, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "edges", tuple((str(p), str(c)) for p, c in self.edges))
        object.__setattr__(self, "_index", {v.id: v for v in self.variables})

    @property
    def ids(self) -> list[str]:
        return [v.id for v in self.variables]

    def var(self, vid: str) -> VariableSpec:
        try:
            return self._index[vid]
        except KeyError:
            raise ScmError(f"unknown variable {vid!r}") from None

    def __contains__(self, vid: str) -> bool:
        return vid in self._index

    def parents(self, vid: str) -> list[str]:
        """Parents in edge declaration order."""
        return [p for p, c in self.edges if c == vid]

    def input_parents(self, vid: str) -> list[str]:
        """Parents that feed the learner's regression (noise parents dropped)."""
        return [p for p in self.parents(vid) if not self.var(p).noise]

    def children(self, vid: str) -> list[str]:
        return [c for p, c in self.edges if p == vid]

    def endogenous(self) -> list[str]:
        return [v.id for v in self.variables if not v.exogenous]

    def exogenous(self) -> list[str]:
        return [v.id for v in self.variables if v.exogenous]

    def controllable(self) -> list[str]:
        return [v.id for v in self.variables if v.controllable]

    def descendants(self, vid: str) -> set[str]:
        out, stack = set(), [vid]
        while stack:
            for c in self.children(stack.pop()):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def check(self) -> "CausalGraph":
        violation = validate_graph(self)
        if violation is not None:
            raise GraphError(*violation)
        return self


def validate_graph(graph: CausalGraph) -> tuple[str, str] | None:
    """Return ``None`` if the graph is a valid causal DAG, else ``(violation, detail)``."""
    seen = set()
    for v in graph.variables:
        if v.id in seen:
            return "duplicate variable id", v.id
        seen.add(v.id)
    for p, c in graph.edges:
        if p not in seen or c not in seen:
            return "unknown variable", f"{p}->{c}"
    for p, c in graph.edges:
        if p == c:
            return "cycle", f"self-loop on {p}"
    for p, c in graph.edges:
        if graph.var(c).exogenous:
            return "edge into exogenous", f"{p}->{c}"
    if len(_kahn(graph)) != len(graph.variables):
        return "cycle", "no topological order exists"
    return None


def _kahn(graph: CausalGraph) -> list[str]:
    indeg = {v: 0 for v in graph.ids}
    for _, c in graph.edges:
        indeg[c] += 1
    ready = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in graph.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    return order


def topological_order(graph: CausalGraph) -> list[str]:
    """Parents before children; ties broken by variable id."""
    return _kahn(graph)


class Intervention(Mapping[str, float]):
    """An atomic intervention do(X'=x'); the empty intervention is passive."""

    __slots__ = ("_items",)

    def __init__(self, assignments: Mapping[str, float] | Iterable[tuple[str, float]] = ()):
        items = dict(assignments)
        self._items = tuple(sorted((str(k), float(v)) for k, v in items.items()))

    @classmethod
    def passive(cls) -> "Intervention":
        return cls()

    def __getitem__(self, key: str) -> float:
        for k, v in self._items:
            if k == key:
                return v
        raise KeyError(key)

    def __iter__(self) -> Iterator[str]:
        return (k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return hash(self._items)

    def __eq__(self, other) -> bool:
        if isinstance(other, Intervention):
            return self._items == other._items
        return NotImplemented

    @property
    def is_passive(self) -> bool:
        return not self._items

    @property
    def kind(self) -> str:
        return "passive" if not self._items else "+".join(k for k, _ in self._items)

    def format_values(self) -> str:
        return ";".join(f"{k}={v:.6g}" for k, v in self._items)

    @classmethod
    def parse(cls, kind: str, values: str) -> "Intervention":
        if kind == "passive" or not values:
            return cls()
        return cls((k, float(v)) for k, v in (item.split("=") for item in values.split(";")))

    def __repr__(self) -> str:
        return f"do({self.format_values() or '∅'})"


def validate_intervention(graph: CausalGraph, u: Intervention) -> None:
    for vid, value in u.items():
        spec = graph.var(vid)
        if not spec.controllable:
            raise ScmError(f"{vid} is not controllable")
        if not spec.range.contains(value):
            raise ScmError(f"do({vid}={value}) outside range of {vid}")


Sample = dict
"""A total map from variable id to measured value."""


@dataclass
class Dataset:
    """Time-ordered (intervention, sample) records, optionally a FIFO of fixed capacity."""

    capacity: int | None = None
    records: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity is not None and self.capacity < 1:
            raise ScmError("capacity must be a positive integer")
        self.records = deque(self.records)
        while self.capacity is not None and len(self.records) > self.capacity:
            self.records.popleft()

    def push(self, intervention: Intervention, sample: Mapping[str, float]) -> "Dataset":
        self.records.append((intervention, dict(sample)))
        if self.capacity is not None and len(self.records) > self.capacity:
            self.records.popleft()
        return self

    def extend(self, intervention: Intervention, samples: Iterable[Mapping[str, float]]) -> "Dataset":
        for s in samples:
            self.push(intervention, s)
        return self

    def copy(self) -> "Dataset":
        return Dataset(self.capacity, deque(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def dataset_push(ds: Dataset, record: tuple[Intervention, Mapping[str, float]]) -> Dataset:
    return ds.push(*record)


CausalFunction = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class GroundTruthScm:
    """Graph plus evaluable causal functions.

    Each function receives its parents' values (in ``graph.parents`` order) as
    a 1-D array.
    """

    graph: CausalGraph
    functions: Mapping[str, CausalFunction]

    def __post_init__(self):
        missing = set(self.graph.endogenous()) - set(self.functions)
        if missing:
            raise ScmError(f"no causal function for {sorted(missing)}")

    def sample_exogenous(self, rng: np.random.Generator) -> dict[str, float]:
        out = {}
        for vid in sorted(self.graph.exogenous()):
            dist = self.graph.var(vid).distribution
            if dist is None:
                raise ScmError(f"exogenous {vid} has no distribution")
            out[vid] = float(dist.sample(rng))
        return out


def evaluate_scm(
    scm: GroundTruthScm,
    exo_values: Mapping[str, float],
    intervention: Intervention = Intervention(),
    clip: bool = True,
) -> Sample:
    """Evaluate the SCM forward under do-semantics."""
    graph = scm.graph
    validate_intervention(graph, intervention)
    values: dict[str, float] = {}
    for vid in topological_order(graph):
        if vid in intervention:
            values[vid] = intervention[vid]
            continue
        spec = graph.var(vid)
        if spec.exogenous:
            if vid not in exo_values:
                raise ScmError(f"missing exogenous value for {vid}")
            values[vid] = float(exo_values[vid])
            continue
        x = np.array([values[p] for p in graph.parents(vid)], dtype=float)
        out = float(scm.functions[vid](x))
        values[vid] = float(spec.range.clip(out)) if clip else out
    return values
