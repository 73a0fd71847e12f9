"""Plain data carried through the sliding-window estimator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument, InvalidConfig
from ..kinematics import ImuState

FEATURE_KINDS = ("plane", "edge")


@dataclass(frozen=True)
class FeatureObservation:
    """One LiDAR point, expressed in the IMU frame of the observing keyframe."""

    keyframe_id: int
    feature_id: str
    kind: str
    point: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise InvalidArgument(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(3))


@dataclass
class Keyframe:
    id: int
    stamp: float
    state: ImuState


@dataclass(frozen=True)
class ImuNoise:
    """Continuous-time IMU densities shared by every preintegrated factor."""

    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_walk: float = 1e-5
    accel_walk: float = 1e-4

    def __post_init__(self):
        vals = (self.gyro_noise, self.accel_noise, self.gyro_walk, self.accel_walk)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise InvalidConfig("IMU noise densities must be positive")

    def scaled(self, factor: float) -> "ImuNoise":
        return ImuNoise(factor * self.gyro_noise, factor * self.accel_noise,
                        factor * self.gyro_walk, factor * self.accel_walk)


@dataclass(frozen=True)
class NoiseModel:
    """LiDAR point variance ``sigma`` [m^2], IMU densities and the anchor prior."""

    sigma: float = 1e-4
    imu: ImuNoise = field(default_factory=ImuNoise)
    anchor_rot: float = 1e-3      # rad
    anchor_pos: float = 1e-3      # m

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidConfig("LiDAR variance must be positive")
        if not (self.anchor_rot > 0 and self.anchor_pos > 0):
            raise InvalidConfig("anchor standard deviations must be positive")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    rel_cost_tol: float = 1e-10
    gradient_tol: float = 1e-10
    step_tol: float = 1e-10       # accepted step norm relative to the state norm
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.5
    max_damping: float = 1e16
    clamp_delta: float = 0.2
    scale_columns: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be positive")
        if not (self.damping_up > 1 and 0 < self.damping_down < 1):
            raise InvalidConfig("damping factors must grow on rejection and shrink on acceptance")
