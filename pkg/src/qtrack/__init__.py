"""Model-free Q-learning for linear tracking with a previewed reference window."""
from .errors import (
    DimensionError,
    DivergedState,
    ExcitationDeficient,
    InvalidCostError,
    MaxIterationsExceeded,
    NonIntegralCount,
    NotPositiveDefinite,
    QTrackError,
    StructureViolation,
    UncontrollableError,
    ZeroOracle,
)
from .learner import LearnerConfig, collect_batch, run_online, value_iterate
from .lti_system import CostParams, Plant, PlantModel, Trajectory, system1, system2
from .oracle import finite_horizon_dp, gain_from_H, model_value_iteration
from .qstructure import Layout, SparsityPattern, build_pattern
from .reference import ExoSystem, ReferenceSource, ReferenceWindow, default_suite, window_at

__version__ = "0.1.0"

__all__ = [
    "CostParams",
    "DimensionError",
    "DivergedState",
    "ExcitationDeficient",
    "ExoSystem",
    "InvalidCostError",
    "Layout",
    "LearnerConfig",
    "MaxIterationsExceeded",
    "NonIntegralCount",
    "NotPositiveDefinite",
    "Plant",
    "PlantModel",
    "QTrackError",
    "ReferenceSource",
    "ReferenceWindow",
    "SparsityPattern",
    "StructureViolation",
    "Trajectory",
    "UncontrollableError",
    "ZeroOracle",
    "build_pattern",
    "collect_batch",
    "default_suite",
    "finite_horizon_dp",
    "gain_from_H",
    "model_value_iteration",
    "run_online",
    "system1",
    "system2",
    "value_iterate",
    "window_at",
]
