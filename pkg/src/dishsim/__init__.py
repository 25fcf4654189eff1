"""Cooperative multi-channel MAC simulation, altruist planning and cost metrics."""

from .deployment import (
    PlacementMethod, PlacementPlan, greedy_set_cover_deploy, grid_cover_count, grid_deploy,
    lens_area, min_altruist_density, pair_coverage_probability, poisson_deploy, random_deploy,
)
from .engine import RadioModel, RunResult, ScenarioConfig, Simulator, reception_outcome, run
from .metrics import POWER_W, bmp, lifetime, node_power, s_max
from .protocol import FrameKind, MacParams, ProtocolVariant, RadioState
from .topology import (
    MccMode, NetworkTopology, Node, NodeKind, Point, build_adjacency, cooperation_coverage,
    enumerate_ups, is_unsafe_pair,
)

__version__ = "0.1.0"
