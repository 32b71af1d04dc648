"""Intersection crossing benchmark: joint-planner MPC, a modeled human
driver, closed-loop episodes, and the scalar performance metric."""

from .dynamics import VehicleState, step_dynamics, control_to_state_maps
from .mpc import (MPCConfig, MPCWeights, MPCSolution, braking_sequence,
                  hdv_action, mpc_objective, select_active_hdv, solve_mpc)
from .episode import (MetricConfig, ScenarioConfig, ScenarioOutcome,
                      CavSimEvaluator, draw_initial_conditions, episode_metric,
                      performance, simulate_episode, WEIGHT_LOG_LOWER,
                      WEIGHT_LOG_UPPER, weight_log_domain)

__all__ = [
    "VehicleState", "step_dynamics", "control_to_state_maps",
    "MPCConfig", "MPCWeights", "MPCSolution", "braking_sequence",
    "hdv_action", "mpc_objective", "select_active_hdv", "solve_mpc",
    "MetricConfig", "ScenarioConfig", "ScenarioOutcome", "CavSimEvaluator",
    "draw_initial_conditions", "episode_metric", "performance",
    "simulate_episode", "WEIGHT_LOG_LOWER", "WEIGHT_LOG_UPPER",
    "weight_log_domain",
]
