"""Capacity bounds for cost-constrained finite-state sensing channels."""

from .bsc import BscExample, closed_form_upper_bound
from .channel import (
    ChannelSpec,
    PrunedChain,
    average_cost,
    load_channel,
    noiseless_capacity,
    parse_channel,
    prune,
    stationary_distribution,
)
from .cycles import Cycle, decompose_walk, enumerate_cycles, gamma_min
from .dual import BoundResult, CycleWeights, TestDistribution, upper_bound
from .lower import MarkovSource, RateEstimate, gamma_max, info_rate, optimize_lower_bound

__version__ = "0.1.0"

__all__ = [
    "BoundResult",
    "BscExample",
    "ChannelSpec",
    "Cycle",
    "CycleWeights",
    "MarkovSource",
    "PrunedChain",
    "RateEstimate",
    "TestDistribution",
    "average_cost",
    "closed_form_upper_bound",
    "decompose_walk",
    "enumerate_cycles",
    "gamma_max",
    "gamma_min",
    "info_rate",
    "load_channel",
    "noiseless_capacity",
    "optimize_lower_bound",
    "parse_channel",
    "prune",
    "stationary_distribution",
    "upper_bound",
]
