"""Reachability-based collision detection for two-vehicle highway interactions.

An offline backward-reachable-set solver with a cached lookup table, an
online prediction-based confidence-aware stochastic forward-reachable-set
engine, and a cut-in scenario simulator, combined into a three-step
detection pipeline.
"""

from .belief import BETA_PRESETS, BeliefVector, init_uniform
from .dynamics import PointMassState, RelativeState, VehicleGeometry, step_point_mass
from .frs import FrsEngine, ProbabilityField, collision_probability, occupancy_set
from .grid import GridAxis, InputConstraints, InputGrid, StateGrid, OUT_OF_DOMAIN
from .predictor import (
    AccelerationForecast,
    BivariateNormal,
    GenerativePredictor,
    HeuristicPredictor,
    TrackHistory,
    pdf,
    scale_confidence,
)
from .scenario import CutInConfig, IdmParams, SimTrace, idm_accel, simulate
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "AccelerationForecast",
    "BETA_PRESETS",
    "BeliefVector",
    "BivariateNormal",
    "CutInConfig",
    "FrsEngine",
    "GenerativePredictor",
    "GridAxis",
    "HeuristicPredictor",
    "IdmParams",
    "InputConstraints",
    "InputGrid",
    "OUT_OF_DOMAIN",
    "PointMassState",
    "ProbabilityField",
    "RelativeState",
    "RunConfig",
    "SimTrace",
    "StateGrid",
    "TrackHistory",
    "VehicleGeometry",
    "collision_probability",
    "idm_accel",
    "init_uniform",
    "occupancy_set",
    "pdf",
    "scale_confidence",
    "simulate",
    "step_point_mass",
]
