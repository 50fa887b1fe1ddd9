"""RIS passive beamforming for short-packet multi-sensor uplinks.

The package covers the full experiment pipeline: scenario configuration,
Rician channel synthesis, pilot-based MMSE estimation, finite-blocklength
rate evaluation, the successive convex optimizer built on a lifted
semidefinite relaxation, two baselines, and a Monte-Carlo sweep harness
with a command line front end.
"""

from riswsr.scenario import ScenarioConfig, LargeScale, load_config, parse_config
from riswsr.channel import LosGeometry, ChannelRealization, los_response, draw_channels
from riswsr.estimation import ChannelPrior, ChannelEstimate, EstimateSet
from riswsr.fblr import FblrParams, RisResponse
from riswsr.optimizer import ScoSettings, AoSettings, OptimizeOutcome

__all__ = [
    "ScenarioConfig",
    "LargeScale",
    "load_config",
    "parse_config",
    "LosGeometry",
    "ChannelRealization",
    "los_response",
    "draw_channels",
    "ChannelPrior",
    "ChannelEstimate",
    "EstimateSet",
    "FblrParams",
    "RisResponse",
    "ScoSettings",
    "AoSettings",
    "OptimizeOutcome",
]

__version__ = "0.1.0"
