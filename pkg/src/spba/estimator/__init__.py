"""Sliding-window bundle adjustment over keyframe IMU states and SP features."""
from .graph import (
    NULL_DIRECTIONS,
    AnchorFactor,
    EdgeFactor,
    FactorGraphWindow,
    FejRegistry,
    ImuFactor,
    LinearFactor,
    LmReport,
    MarginalPrior,
    PlaneFactor,
    PriorFactor,
    feat_key,
    kf_key,
    leakage_ratio,
    lift_null_direction,
    lm_solve,
    marginal_sqrt,
    marginalize,
    null_directions,
    oldest_drop_set,
    schur_complement,
    window_cost,
    window_leakage,
)
from .manifold import block_dim, local, retract
from .preintegration import Preintegrated, imu_factor, imu_residual, preintegrate
from .residuals import edge_residual, plane_residual, residual_covariance_check
from .types import FeatureObservation, ImuNoise, Keyframe, NoiseModel, SolverConfig

__all__ = [
    "NULL_DIRECTIONS",
    "AnchorFactor",
    "EdgeFactor",
    "FactorGraphWindow",
    "FejRegistry",
    "ImuFactor",
    "LinearFactor",
    "LmReport",
    "MarginalPrior",
    "PlaneFactor",
    "PriorFactor",
    "feat_key",
    "kf_key",
    "leakage_ratio",
    "lift_null_direction",
    "lm_solve",
    "marginal_sqrt",
    "marginalize",
    "null_directions",
    "oldest_drop_set",
    "schur_complement",
    "window_cost",
    "window_leakage",
    "block_dim",
    "local",
    "retract",
    "Preintegrated",
    "imu_factor",
    "imu_residual",
    "preintegrate",
    "edge_residual",
    "plane_residual",
    "residual_covariance_check",
    "FeatureObservation",
    "ImuNoise",
    "Keyframe",
    "NoiseModel",
    "SolverConfig",
]
