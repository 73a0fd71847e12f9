"""IMU state, CGR attitude algebra, propagation and feature observation models.

Attitude convention: ``C`` rotates global-frame vectors into the IMU frame.
The CGR chart is ``C(s) = (I - [s x])(I + [s x])^-1`` and a local attitude
increment ``theta`` acts as ``C <- exp(-[theta x]) C``, under which
``ds = 1/2 (I + s s^T + [s x]) theta`` and ``dC/dt = -[omega x] C``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ChartSingularity, InvalidArgument
from .sp_geometry import (
    SpEdge,
    SpPlane,
    edge_embed,
    edge_gammas,
    edge_moment_jacobian,
    plane_normal,
    skew,
    tangent_map,
)

GRAVITY = np.array([0.0, 0.0, -9.81])
IMU_DIM = 15
# offsets inside the IMU block of the flattened state
S, BG, V, BA, P = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15))


# ----------------------------------------------------------------- SO(3) / CGR

def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(angle) / angle * K + (1.0 - np.cos(angle)) / angle**2 * K @ K


def so3_log(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-7:
        return 0.5 * w
    if np.pi - angle < 1e-5:
        # axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        axis *= np.sign(axis @ w) if axis @ w != 0 else 1.0
        return angle * axis / np.linalg.norm(axis)
    return angle / (2.0 * np.sin(angle)) * w


def right_jacobian(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) - 0.5 * K + K @ K / 6.0
    return (
        np.eye(3)
        - (1.0 - np.cos(angle)) / angle**2 * K
        + (angle - np.sin(angle)) / angle**3 * K @ K
    )


def right_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) + 0.5 * K + K @ K / 12.0
    return (
        np.eye(3)
        + 0.5 * K
        + (1.0 / angle**2 - (1.0 + np.cos(angle)) / (2.0 * angle * np.sin(angle))) * K @ K
    )


def left_jacobian(phi) -> np.ndarray:
    """``(1/T) int_0^T exp([phi x] s/T) ds``; equals the transposed right Jacobian."""
    return right_jacobian(phi).T


def double_integral_jacobian(phi) -> np.ndarray:
    """``(2/T^2) int_0^T int_0^s exp([phi x] r/T) dr ds``, halved so it tends to I/2."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    a2 = angle * angle
    if angle < 1e-2:
        c1 = 1.0 / 6.0 - a2 / 120.0 + a2 * a2 / 5040.0
        c2 = 1.0 / 24.0 - a2 / 720.0 + a2 * a2 / 40320.0
    else:
        c1 = (angle - np.sin(angle)) / angle**3
        c2 = (0.5 * a2 + np.cos(angle) - 1.0) / a2**2
    return 0.5 * np.eye(3) + c1 * K + c2 * K @ K


def zoh_step(R, v, p, omega, a, g, dt):
    """Exact solution over ``dt`` for body rate ``omega`` and specific force ``a`` held constant.

    ``R`` maps IMU-frame vectors to the global frame (``R = C^T``).
    """
    phi = np.asarray(omega, dtype=float) * dt
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    R_new = R @ so3_exp(phi)
    v_new = v + g * dt + dt * R @ left_jacobian(phi) @ a
    p_new = p + v * dt + 0.5 * g * dt * dt + dt * dt * R @ double_integral_jacobian(phi) @ a
    return R_new, v_new, p_new


def orthonormalize(C) -> np.ndarray:
    U, _, Vt = np.linalg.svd(C)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def cgr_to_rotation(s) -> np.ndarray:
    s = np.asarray(s, dtype=float).reshape(3)
    K = skew(s)
    return np.eye(3) + 2.0 * (K @ K - K) / (1.0 + s @ s)


def rotation_to_cgr(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    denom = 1.0 + np.trace(C)
    # 1 + tr C = 2 (1 + cos angle)
    if denom < 2.0 * (1.0 + np.cos(np.pi - 1e-6)):
        raise ChartSingularity("rotation angle too close to pi for the CGR chart")
    A = C.T - C
    return np.array([A[2, 1], A[0, 2], A[1, 0]]) / denom


def cgr_kinematics_jacobian(s) -> np.ndarray:
    """``ds/dtheta = 1/2 (I + s s^T + [s x])``."""
    s = np.asarray(s, dtype=float).reshape(3)
    return 0.5 * (np.eye(3) + np.outer(s, s) + skew(s))


def cgr_kinematics_jacobian_inv(s) -> np.ndarray:
    """``dtheta/ds``; closed form ``2 (I - [s x]) / (1 + |s|^2)``."""
    s = np.asarray(s, dtype=float).reshape(3)
    return 2.0 * (np.eye(3) - skew(s)) / (1.0 + s @ s)


def perturb_attitude(C, theta) -> np.ndarray:
    """Apply a local attitude increment: ``exp(-[theta x]) C``."""
    return so3_exp(-np.asarray(theta, dtype=float)) @ C


# ---------------------------------------------------------------------- states

@dataclass
class ImuState:
    C: np.ndarray = field(default_factory=lambda: np.eye(3))
    b_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float).reshape(3, 3)
        for name in ("b_g", "v", "b_a", "p"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    @property
    def s(self) -> np.ndarray:
        return rotation_to_cgr(self.C)

    @classmethod
    def from_cgr(cls, s, b_g=None, v=None, b_a=None, p=None) -> "ImuState":
        z = np.zeros(3)
        return cls(
            cgr_to_rotation(s),
            z if b_g is None else b_g,
            z if v is None else v,
            z if b_a is None else b_a,
            z if p is None else p,
        )

    def copy(self) -> "ImuState":
        return ImuState(self.C.copy(), self.b_g.copy(), self.v.copy(), self.b_a.copy(), self.p.copy())


@dataclass
class FullState:
    imu: ImuState
    edges: list[SpEdge] = field(default_factory=list)
    planes: list[SpPlane] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def n(self) -> int:
        return len(self.planes)

    @property
    def dim(self) -> int:
        return IMU_DIM + 4 * self.m + 3 * self.n

    def edge_offset(self, k: int) -> int:
        return IMU_DIM + 4 * k

    def plane_offset(self, k: int) -> int:
        return IMU_DIM + 4 * self.m + 3 * k

    def flatten(self) -> np.ndarray:
        imu = self.imu
        parts = [imu.s, imu.b_g, imu.v, imu.b_a, imu.p]
        parts += [e.as_vector() for e in self.edges]
        parts += [pl.as_vector() for pl in self.planes]
        return np.concatenate(parts)

    def with_vector(self, x) -> "FullState":
        """Rebuild a state of the same layout from a flattened vector."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidArgument(f"expected vector of length {self.dim}")
        imu = ImuState.from_cgr(x[S], x[BG], x[V], x[BA], x[P])
        edges = [SpEdge.from_vector(x[self.edge_offset(k):self.edge_offset(k) + 4]) for k in range(self.m)]
        planes = [SpPlane.from_vector(x[self.plane_offset(k):self.plane_offset(k) + 3]) for k in range(self.n)]
        return FullState(imu, edges, planes)


@dataclass(frozen=True)
class ImuSample:
    t: float
    omega: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))


@dataclass(frozen=True)
class GravityConstant:
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    tol: float = 1e-6

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).reshape(3)
        if abs(np.linalg.norm(g) - 9.81) > self.tol:
            raise InvalidArgument(f"gravity magnitude {np.linalg.norm(g)} differs from 9.81")
        object.__setattr__(self, "g", g)


# ------------------------------------------------------------------- dynamics

def _imu_derivative(C, s, b_g, v, b_a, omega, a, g):
    ds = cgr_kinematics_jacobian(s) @ (omega - b_g)
    dv = g - C.T @ b_a + C.T @ a
    return ds, dv, v


def continuous_dynamics(x: FullState, omega, a, g=GRAVITY) -> np.ndarray:
    """State derivative ``f0 + f1 omega + f2 a`` in flattened layout."""
    omega = np.asarray(omega, dtype=float)
    a = np.asarray(a, dtype=float)
    if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(a))):
        raise InvalidArgument("non-finite IMU input")
    imu = x.imu
    out = np.zeros(x.dim)
    ds, dv, dp = _imu_derivative(imu.C, imu.s, imu.b_g, imu.v, imu.b_a, omega, a, np.asarray(g, float))
    out[S] = ds
    out[V] = dv
    out[P] = dp
    return out


def drift_field(x: FullState, g=GRAVITY) -> np.ndarray:
    """``f0``: the state derivative with zero IMU input."""
    return continuous_dynamics(x, np.zeros(3), np.zeros(3), g)


def gyro_field(x: FullState, k: int) -> np.ndarray:
    """Column ``k`` of ``f1``."""
    out = np.zeros(x.dim)
    out[S] = cgr_kinematics_jacobian(x.imu.s)[:, k]
    return out


def accel_field(x: FullState, k: int) -> np.ndarray:
    """Column ``k`` of ``f2`` (the IMU-to-global rotation applied to ``e_k``)."""
    out = np.zeros(x.dim)
    out[V] = x.imu.C.T[:, k]
    return out


def _rk4_step(C0, b_g, v, b_a, p, omega, a, g, dt):
    """One RK4 step in a CGR chart centred on ``C0``; returns the new (C, v, p)."""

    def f(y):
        ds_loc, vv = y[0:3], y[3:6]
        C = cgr_to_rotation(ds_loc) @ C0
        d_s, dv, dp = _imu_derivative(C, ds_loc, b_g, vv, b_a, omega, a, g)
        return np.concatenate([d_s, dv, dp])

    y = np.concatenate([np.zeros(3), v, p])
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    C = orthonormalize(cgr_to_rotation(y[0:3]) @ C0)
    return C, y[3:6], y[6:9]


def propagate(x: FullState, samples: Sequence[ImuSample], t_end: float | None = None,
              g=GRAVITY, substeps: int = 1) -> FullState:
    """Integrate the continuous model with zero-order-hold inputs.

    Sample ``k`` is held over ``[t_k, t_{k+1})``; the last sample is held until
    ``t_end`` (defaults to the last timestamp, i.e. it is not applied).
    """
    if len(samples) == 0:
        raise InvalidArgument("need at least one IMU sample")
    times = np.array([smp.t for smp in samples])
    if np.any(np.diff(times) <= 0):
        raise InvalidArgument("IMU timestamps must be strictly increasing")
    if t_end is None:
        t_end = times[-1]
    if t_end < times[-1]:
        raise InvalidArgument("t_end precedes the last sample")
    g = np.asarray(g, dtype=float)
    imu = x.imu
    C, v, p = imu.C.copy(), imu.v.copy(), imu.p.copy()
    bounds = np.append(times[1:], t_end)
    for smp, t0, t1 in zip(samples, times, bounds):
        dt = (t1 - t0) / substeps
        for _ in range(substeps):
            if dt > 0:
                C, v, p = _rk4_step(C, imu.b_g, v, imu.b_a, p, smp.omega, smp.a, g, dt)
    new_imu = replace(imu, C=C, v=v, p=p)
    return FullState(new_imu, list(x.edges), list(x.planes))


# ---------------------------------------------------------------- observation

def _check_index(seq, k, kind):
    if not 0 <= k < len(seq):
        raise IndexError(f"{kind} index {k} out of range")


def observe_plane(x: FullState, k: int) -> np.ndarray:
    """``(C n_k, p^T n_k + OA_k)``."""
    _check_index(x.planes, k, "plane")
    pl = x.planes[k]
    n = plane_normal(pl.u_s)
    return np.concatenate([x.imu.C @ n, [x.imu.p @ n + pl.OA]])


def observe_edge(x: FullState, k: int) -> np.ndarray:
    """``(C l_k, C tau_k d_k + C [l_k x] p)``."""
    _check_index(x.edges, k, "edge")
    l, moment, _, _ = edge_embed(x.edges[k])
    C = x.imu.C
    return np.concatenate([C @ l, C @ (moment + np.cross(l, x.imu.p))])


def observe_plane_jacobian(x: FullState, k: int) -> np.ndarray:
    """4 x dim Jacobian of :func:`observe_plane` w.r.t. the flattened state."""
    _check_index(x.planes, k, "plane")
    imu, pl = x.imu, x.planes[k]
    n = plane_normal(pl.u_s)
    H = tangent_map(pl.u_s).H
    Cn = imu.C @ n
    J = np.zeros((4, x.dim))
    o = x.plane_offset(k)
    J[0:3, S] = skew(Cn) @ cgr_kinematics_jacobian_inv(imu.s)
    J[0:3, o:o + 2] = imu.C @ H
    J[3, P] = n
    J[3, o:o + 2] = imu.p @ H
    J[3, o + 2] = 1.0
    return J


def edge_moment_point(e: SpEdge, p) -> np.ndarray:
    """``Lam_x g1 + Lam_y g2 + p``: the vector whose cross with ``l`` gives the moment."""
    g1, g2 = edge_gammas(e.u_l)
    return e.Lam[0] * g1 + e.Lam[1] * g2 + p


def observe_edge_jacobian(x: FullState, k: int) -> np.ndarray:
    """6 x dim Jacobian of :func:`observe_edge` w.r.t. the flattened state."""
    _check_index(x.edges, k, "edge")
    imu, e = x.imu, x.edges[k]
    C = imu.C
    l, moment, _, _ = edge_embed(e)
    H = tangent_map(e.u_l).H
    dtheta_ds = cgr_kinematics_jacobian_inv(imu.s)
    d_E = C @ (moment + np.cross(l, imu.p))
    dmom_du, dmom_dlam = edge_moment_jacobian(e.u_l, e.Lam)
    J = np.zeros((6, x.dim))
    o = x.edge_offset(k)
    J[0:3, S] = skew(C @ l) @ dtheta_ds
    J[0:3, o:o + 2] = C @ H
    J[3:6, S] = skew(d_E) @ dtheta_ds
    J[3:6, P] = C @ skew(l)
    J[3:6, o:o + 2] = C @ (dmom_du - skew(imu.p) @ H)
    J[3:6, o + 2:o + 4] = C @ dmom_dlam
    return J
