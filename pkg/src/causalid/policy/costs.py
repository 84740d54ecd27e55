"""Operational cost of interventions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..scm import Intervention


@dataclass(frozen=True)
class CostModel:
    """Per-variable intervention costs; a joint intervention costs the sum."""

    per_variable: Mapping[str, float] = field(default_factory=dict)
    passive: float = 0.0
    default: float = 1.0

    def __post_init__(self):
        if self.passive < 0 or self.default < 0 or any(c < 0 for c in self.per_variable.values()):
            raise ValueError("costs must be nonnegative")

    def __call__(self, u: Intervention) -> float:
        if u.is_passive:
            return float(self.passive)
        return float(sum(self.per_variable.get(v, self.default) for v in u))

    def shifted(self, delta: float) -> "CostModel":
        return CostModel({k: v + delta for k, v in self.per_variable.items()}, self.passive + delta, self.default + delta)
