"""Experiment configuration: YAML documents validated with pydantic, unknown keys rejected."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..envs import Environment, make_illustrative_env, make_mesh_env, make_scm_env
from ..gp import KernelSpec
from ..policy import CostModel, RolloutConfig
from ..scm_io import load_scm


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvironmentSection(_Strict):
    name: Literal["illustrative", "mesh", "custom"] = "illustrative"
    scenario: Optional[int] = None
    switch_t: int = 11
    grid_mass: Optional[float] = None
    scm: Optional[str] = None  # path to an SCM document, for name=custom
    noise_var: Union[float, dict[str, float]] = 0.05

    @model_validator(mode="after")
    def _check(self):
        if self.name == "mesh" and self.scenario not in (1, 2):
            raise ValueError("mesh environment needs scenario 1 or 2")
        if self.name == "custom" and not self.scm:
            raise ValueError("custom environment needs an scm path")
        return self


class RolloutSection(_Strict):
    lookahead: int = Field(1, ge=1)
    horizon: int = Field(5, ge=1)
    trajectories: int = Field(10, ge=1)
    gamma: float = Field(0.9, gt=0, lt=1)
    fantasies: int = Field(10, ge=1)
    samples: int = Field(1, ge=1)
    de_pop: int = Field(10, ge=4)
    de_iters: int = Field(30, ge=0)
    joint: bool = False
    terminal: Literal["surrogate", "zero"] = "surrogate"

    def build(self) -> RolloutConfig:
        return RolloutConfig(**self.model_dump())


class CostSection(_Strict):
    passive: float = Field(0.0, ge=0)
    default: float = Field(1.0, ge=0)
    per_variable: dict[str, float] = {}

    def build(self) -> CostModel:
        return CostModel(dict(self.per_variable), self.passive, self.default)


class GridSection(_Strict):
    resolution: int = Field(41, ge=2)
    sobol_points: int = Field(256, ge=2)
    seed: int = 0


class OutputSection(_Strict):
    dir: str = "results"
    record_wallclock: bool = False


class ExperimentConfig(_Strict):
    environment: EnvironmentSection = EnvironmentSection()
    policy: Literal["passive", "rollout"] = "rollout"
    rollout: RolloutSection = RolloutSection()
    costs: Optional[CostSection] = None
    kernel_noise_var: Optional[Union[float, dict[str, float]]] = None
    capacity: Optional[int] = Field(None, ge=1)
    horizon: int = Field(30, ge=1)
    seeds: list[int] = [0, 1, 2, 3, 4]
    grid: GridSection = GridSection()
    output: OutputSection = OutputSection()
    jobs: int = Field(1, ge=1)

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v

    def build_env(self, base: Path | None = None) -> Environment:
        e = self.environment
        kwargs = {} if e.grid_mass is None else {"grid_mass": e.grid_mass}
        if e.name == "illustrative":
            env = make_illustrative_env(**kwargs)
        elif e.name == "mesh":
            env = make_mesh_env(e.scenario, switch_t=e.switch_t, **kwargs)
        else:
            path = Path(e.scm)
            if base is not None and not path.is_absolute():
                path = base / path
            env = make_scm_env(load_scm(path), e.noise_var, **kwargs)
        if self.costs is not None:
            env.cost = self.costs.build()
        if self.kernel_noise_var is not None:
            nv = self.kernel_noise_var
            env.kernels = {v: KernelSpec(nv[v] if isinstance(nv, dict) else nv) for v in env.graph.endogenous()}
        return env


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML config; ``overrides`` maps dotted keys (``rollout.horizon``) to values."""
    doc = yaml.safe_load(Path(path).read_text()) or {}
    for key, value in (overrides or {}).items():
        node = doc
        *head, last = key.split(".")
        for part in head:
            node = node.setdefault(part, {})
        node[last] = value
    return ExperimentConfig.model_validate(doc)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.model_dump(), sort_keys=False))
