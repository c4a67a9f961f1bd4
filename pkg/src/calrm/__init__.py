"""Network revenue management with calendar-aware, Markov-modulated stage demands.

Fluid LP bounds, an exact DP oracle, and Monte Carlo evaluation of the
fluid-derived admission policies.
"""

from calrm.demand import (
    CalibrationTarget,
    DemandModel,
    StageProbabilities,
    calibrate_total_demand,
    conditional_joint,
    derive_probabilities,
    min_transition_mass,
    sample_path,
)
from calrm.instance import HubSpokeConfig, NetworkInstance, counterexample, generate_hub_spoke
from calrm.lp import BoundedLP, LPSolution, solve_lp

__all__ = [
    "BoundedLP",
    "CalibrationTarget",
    "DemandModel",
    "HubSpokeConfig",
    "LPSolution",
    "NetworkInstance",
    "StageProbabilities",
    "calibrate_total_demand",
    "conditional_joint",
    "counterexample",
    "derive_probabilities",
    "generate_hub_spoke",
    "min_transition_mass",
    "sample_path",
    "solve_lp",
]
