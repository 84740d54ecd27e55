from .costs import CostModel
from .de import Dimension, differential_evolution
from .rollout import (
    Decision,
    FantasyTrajectory,
    LookaheadObjective,
    RolloutConfig,
    fantasy_step,
    fantasy_trajectory,
    lookahead_value,
    passive_policy,
    rollout_policy_step,
    rollout_value,
    stage_cost,
)

__all__ = [
    "CostModel",
    "Decision",
    "Dimension",
    "FantasyTrajectory",
    "LookaheadObjective",
    "RolloutConfig",
    "differential_evolution",
    "fantasy_step",
    "fantasy_trajectory",
    "lookahead_value",
    "passive_policy",
    "rollout_policy_step",
    "rollout_value",
    "stage_cost",
]
