"""On-manifold IMU preintegration with first-order bias correction.

Means are accumulated with the exact zero-order-hold step, so noiseless
samples reproduce the sampled motion exactly.  Bias Jacobians and the noise
covariance follow the usual first-order discrete recursions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InvalidArgument
from ..kinematics import (
    BA,
    BG,
    GRAVITY,
    IMU_DIM,
    P,
    S,
    V,
    ImuSample,
    ImuState,
    double_integral_jacobian,
    left_jacobian,
    right_jacobian,
    right_jacobian_inv,
    so3_exp,
    so3_log,
)
from ..sp_geometry import skew
from .types import ImuNoise

# residual rows
RR, RV, RP, RBG, RBA = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15))


@dataclass
class Preintegrated:
    t0: float
    t1: float
    dR: np.ndarray
    dv: np.ndarray
    dp: np.ndarray
    R_bg: np.ndarray
    v_bg: np.ndarray
    v_ba: np.ndarray
    p_bg: np.ndarray
    p_ba: np.ndarray
    cov: np.ndarray
    bg_lin: np.ndarray
    ba_lin: np.ndarray

    @property
    def dt(self) -> float:
        return self.t1 - self.t0

    def sqrt_info(self) -> np.ndarray:
        """Upper factor ``L^-1`` with ``L L^T = cov``; whitened residual is ``sqrt_info @ r``."""
        return np.linalg.inv(np.linalg.cholesky(self.cov))


def _held_intervals(samples: Sequence[ImuSample], t0: float, t1: float):
    times = [smp.t for smp in samples]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidArgument("IMU timestamps must be strictly increasing")
    ends = times[1:] + [np.inf]
    out = []
    for smp, start, end in zip(samples, times, ends):
        lo, hi = max(start, t0), min(end, t1)
        if hi > lo + 1e-12:
            out.append((smp, hi - lo))
    return out


def preintegrate(samples: Sequence[ImuSample], t0: float, t1: float, noise: ImuNoise,
                 bg=None, ba=None) -> Preintegrated:
    """Integrate samples held over ``[t0, t1)``; the sample active at ``t0`` must be present."""
    if not t1 > t0:
        raise InvalidArgument("empty preintegration span")
    if not samples or samples[0].t > t0 + 1e-12:
        raise InvalidArgument("no IMU sample covers the start of the span")
    spans = _held_intervals(samples, t0, t1)
    if not spans:
        raise InvalidArgument("no IMU samples between the keyframes")
    bg = np.zeros(3) if bg is None else np.asarray(bg, dtype=float)
    ba = np.zeros(3) if ba is None else np.asarray(ba, dtype=float)
    dR, dv, dp = np.eye(3), np.zeros(3), np.zeros(3)
    R_bg = np.zeros((3, 3))
    v_bg, v_ba = np.zeros((3, 3)), np.zeros((3, 3))
    p_bg, p_ba = np.zeros((3, 3)), np.zeros((3, 3))
    cov9 = np.zeros((9, 9))
    I3 = np.eye(3)
    for smp, h in spans:
        w = smp.omega - bg
        a = smp.a - ba
        phi = w * h
        step = so3_exp(phi)
        Jr = right_jacobian(phi)
        Ahat = skew(a)
        dRA = dR @ Ahat
        # noise propagation on [theta, v, p]
        A = np.eye(9)
        A[0:3, 0:3] = step.T
        A[3:6, 0:3] = -dRA * h
        A[6:9, 0:3] = -0.5 * dRA * h * h
        A[6:9, 3:6] = I3 * h
        B = np.zeros((9, 6))
        B[0:3, 0:3] = Jr * h
        B[3:6, 3:6] = dR * h
        B[6:9, 3:6] = 0.5 * dR * h * h
        Q = np.diag(np.r_[np.full(3, noise.gyro_noise**2 / h), np.full(3, noise.accel_noise**2 / h)])
        cov9 = A @ cov9 @ A.T + B @ Q @ B.T
        Jl = left_jacobian(phi)
        D = double_integral_jacobian(phi)
        # bias Jacobians (right-hand sides use the pre-step values); the means
        # are linear in b_a, so those columns are exact, b_g is first order in h
        p_ba = p_ba + v_ba * h - dR @ D * h * h
        p_bg = p_bg + v_bg * h - 0.5 * dRA @ R_bg * h * h
        v_ba = v_ba - dR @ Jl * h
        v_bg = v_bg - dRA @ R_bg * h
        R_bg = step.T @ R_bg - Jr * h
        # exact means
        dp = dp + dv * h + h * h * dR @ D @ a
        dv = dv + h * dR @ Jl @ a
        dR = dR @ step
    T = t1 - t0
    cov = np.zeros((IMU_DIM, IMU_DIM))
    cov[:9, :9] = cov9
    cov[RBG, RBG] = noise.gyro_walk**2 * T * I3
    cov[RBA, RBA] = noise.accel_walk**2 * T * I3
    cov = 0.5 * (cov + cov.T)
    return Preintegrated(t0, t1, dR, dv, dp, R_bg, v_bg, v_ba, p_bg, p_ba, cov, bg.copy(), ba.copy())


def imu_residual(pre: Preintegrated, xi: ImuState, xj: ImuState, g=GRAVITY) -> np.ndarray:
    return imu_factor(pre, xi, xj, g, jacobians=False)


def imu_factor(pre: Preintegrated, xi: ImuState, xj: ImuState, g=GRAVITY, jacobians: bool = True):
    """Residual ``[r_R, r_v, r_p, r_bg, r_ba]`` and Jacobians w.r.t. both keyframes.

    Returns ``(r, J_i, J_j, cov)`` (unwhitened) or just ``r``.
    """
    g = np.asarray(g, dtype=float)
    T = pre.dt
    Ri, Rj = xi.C.T, xj.C.T
    dbg = xi.b_g - pre.bg_lin
    dba = xi.b_a - pre.ba_lin
    corr = pre.R_bg @ dbg
    dR = pre.dR @ so3_exp(corr)
    dv = pre.dv + pre.v_bg @ dbg + pre.v_ba @ dba
    dp = pre.dp + pre.p_bg @ dbg + pre.p_ba @ dba
    v_rel = Ri.T @ (xj.v - xi.v - g * T)
    p_rel = Ri.T @ (xj.p - xi.p - xi.v * T - 0.5 * g * T * T)
    r = np.empty(IMU_DIM)
    r[RR] = so3_log(dR.T @ Ri.T @ Rj)
    r[RV] = v_rel - dv
    r[RP] = p_rel - dp
    r[RBG] = xj.b_g - xi.b_g
    r[RBA] = xj.b_a - xi.b_a
    if not jacobians:
        return r
    Jri = right_jacobian_inv(r[RR])
    J_i = np.zeros((IMU_DIM, IMU_DIM))
    J_j = np.zeros((IMU_DIM, IMU_DIM))
    J_i[RR, S] = -Jri @ Rj.T @ Ri
    J_j[RR, S] = Jri
    J_i[RR, BG] = -Jri @ so3_exp(r[RR]).T @ right_jacobian(corr) @ pre.R_bg
    J_i[RV, S] = skew(v_rel)
    J_i[RV, V] = -Ri.T
    J_j[RV, V] = Ri.T
    J_i[RV, BG] = -pre.v_bg
    J_i[RV, BA] = -pre.v_ba
    J_i[RP, S] = skew(p_rel)
    J_i[RP, P] = -Ri.T
    J_j[RP, P] = Ri.T
    J_i[RP, V] = -Ri.T * T
    J_i[RP, BG] = -pre.p_bg
    J_i[RP, BA] = -pre.p_ba
    J_i[RBG, BG] = -np.eye(3)
    J_j[RBG, BG] = np.eye(3)
    J_i[RBA, BA] = -np.eye(3)
    J_j[RBA, BA] = np.eye(3)
    return r, J_i, J_j, pre.cov
