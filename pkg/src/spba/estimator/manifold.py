"""Retraction and local difference for each kind of state block.

Keyframe blocks use the IMU layout ``[theta, b_g, v, b_a, p]`` where ``theta``
is a right-multiplicative attitude increment ``R <- R exp(theta)`` (with
``R = C^T``).  Every other coordinate is additive.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument
from ..kinematics import BA, BG, IMU_DIM, P, S, V, ImuState, so3_exp, so3_log
from ..sp_geometry import SpEdge, SpPlane


def block_dim(value) -> int:
    if isinstance(value, ImuState):
        return IMU_DIM
    if isinstance(value, SpPlane):
        return 3
    if isinstance(value, SpEdge):
        return 4
    if isinstance(value, np.ndarray):
        return value.size
    raise InvalidArgument(f"unsupported block type {type(value).__name__}")


def retract(value, delta):
    delta = np.asarray(delta, dtype=float)
    if isinstance(value, ImuState):
        R = value.C.T @ so3_exp(delta[S])
        return ImuState(R.T, value.b_g + delta[BG], value.v + delta[V], value.b_a + delta[BA], value.p + delta[P])
    if isinstance(value, SpPlane):
        return SpPlane.from_vector(value.as_vector() + delta)
    if isinstance(value, SpEdge):
        return SpEdge.from_vector(value.as_vector() + delta)
    if isinstance(value, np.ndarray):
        return value + delta
    raise InvalidArgument(f"unsupported block type {type(value).__name__}")


def local(value, ref) -> np.ndarray:
    """``value boxminus ref``: the increment taking ``ref`` to ``value``."""
    if isinstance(value, ImuState):
        out = np.empty(IMU_DIM)
        out[S] = so3_log(ref.C @ value.C.T)
        out[BG] = value.b_g - ref.b_g
        out[V] = value.v - ref.v
        out[BA] = value.b_a - ref.b_a
        out[P] = value.p - ref.p
        return out
    if isinstance(value, (SpPlane, SpEdge)):
        return value.as_vector() - ref.as_vector()
    if isinstance(value, np.ndarray):
        return value - ref
    raise InvalidArgument(f"unsupported block type {type(value).__name__}")


def copy_value(value):
    if isinstance(value, ImuState):
        return value.copy()
    if isinstance(value, np.ndarray):
        return value.copy()
    return value
