"""Differential evolution (rand/1/bin) over mixed continuous/discrete boxes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..scm import Range


@dataclass(frozen=True)
class Dimension:
    lo: float
    hi: float
    values: np.ndarray | None = None

    @classmethod
    def of(cls, spec) -> "Dimension":
        if isinstance(spec, Dimension):
            return spec
        if isinstance(spec, Range):
            if spec.is_discrete:
                return cls(spec.lo, spec.hi, np.asarray(spec.values, dtype=float))
            if not spec.is_bounded:
                raise ValueError("DE needs finite bounds")
            return cls(spec.lo, spec.hi)
        lo, hi = spec
        if not lo <= hi:
            raise ValueError(f"bad bounds ({lo}, {hi})")
        return cls(float(lo), float(hi))

    def snap(self, x):
        if self.values is None:
            return np.clip(x, self.lo, self.hi)
        idx = np.abs(np.asarray(x)[..., None] - self.values).argmin(axis=-1)
        return self.values[idx]


def differential_evolution(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence,
    pop: int = 10,
    iters: int = 30,
    rng: np.random.Generator | None = None,
    F: float = 0.8,
    CR: float = 0.9,
) -> tuple[np.ndarray, float]:
    """Minimize ``objective``; returns the best evaluated point and its value.

    Discrete dimensions are snapped to the nearest member before every
    evaluation, and the initial population cycles through their members so a
    population at least as large as a set covers it. Mutant components that
    leave the box are redrawn uniformly inside it.
    """
    if pop < 4:
        raise ValueError("population must be at least 4")
    dims = [Dimension.of(b) for b in bounds]
    if not dims:
        raise ValueError("bounds must be nonempty")
    rng = rng if rng is not None else np.random.default_rng()
    d = len(dims)
    lo = np.array([dm.lo for dm in dims])
    hi = np.array([dm.hi for dm in dims])

    def snap(x):
        return np.array([dm.snap(x[j]) for j, dm in enumerate(dims)], dtype=float)

    X = lo + rng.random((pop, d)) * (hi - lo)
    for j, dm in enumerate(dims):
        if dm.values is not None:
            X[:, j] = dm.values[rng.permutation(np.arange(pop) % len(dm.values))]
    X = np.array([snap(x) for x in X])
    fit = np.array([objective(x) for x in X], dtype=float)
    for _ in range(iters):
        for i in range(pop):
            r1, r2, r3 = rng.choice([k for k in range(pop) if k != i], size=3, replace=False)
            mutant = X[r1] + F * (X[r2] - X[r3])
            # out-of-box components are redrawn uniformly; clipping piles points on the faces
            out = (mutant < lo) | (mutant > hi)
            mutant = np.where(out, lo + rng.random(d) * (hi - lo), mutant)
            cross = rng.random(d) < CR
            cross[rng.integers(d)] = True
            trial = snap(np.where(cross, mutant, X[i]))
            f = float(objective(trial))
            if f <= fit[i]:
                X[i], fit[i] = trial, f
    best = int(np.argmin(fit))
    return X[best].copy(), float(fit[best])
