"""Closest-point planes and Plücker edges, kept as singular baselines.

Plücker state layout per edge: a 3-dof line-frame increment ``theta_l``
(acting as ``[l, d, l x d] <- exp([theta_l x]) [l, d, l x d]``) followed by
the scalar ``tau``.  IMU and plane blocks follow the stereographic layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidScenario, SingularParameterization
from .kinematics import (
    GRAVITY,
    IMU_DIM,
    P,
    S,
    V,
    FullState,
    ImuState,
    cgr_kinematics_jacobian,
    cgr_kinematics_jacobian_inv,
)
from .observability import _plane_rotation_block, bias_rows, plane_rows
from .sp_geometry import SpPlane, plane_normal, skew, tangent_map


@dataclass(frozen=True)
class CpPlane:
    Pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Pi", np.asarray(self.Pi, dtype=float).reshape(3))

    @property
    def normal(self) -> np.ndarray:
        norm = np.linalg.norm(self.Pi)
        if norm == 0.0:
            raise SingularParameterization("closest-point plane with zero intercept has no normal")
        return self.Pi / norm


@dataclass(frozen=True)
class PlueckerEdge:
    l: np.ndarray
    tau: float
    d: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float).reshape(3)
        d = np.asarray(self.d, dtype=float).reshape(3)
        if abs(np.linalg.norm(l) - 1) > 1e-9 or abs(np.linalg.norm(d) - 1) > 1e-9 or abs(l @ d) > 1e-9:
            raise InvalidArgument("Plücker edge needs unit l, unit d and l . d = 0")
        if self.tau < 0:
            raise InvalidArgument("tau must be non-negative")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def moment(self) -> np.ndarray:
        return self.tau * self.d


@dataclass
class PlueckerState:
    imu: ImuState
    edges: list[PlueckerEdge]
    planes: list[SpPlane] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return IMU_DIM + 4 * len(self.edges) + 3 * len(self.planes)

    def edge_offset(self, k: int) -> int:
        return IMU_DIM + 4 * k

    def plane_offset(self, k: int) -> int:
        return IMU_DIM + 4 * len(self.edges) + 3 * k


def cp_residual(Pi, p_scan) -> float:
    Pi = np.asarray(Pi, dtype=float)
    norm = np.linalg.norm(Pi)
    return float(Pi @ np.asarray(p_scan, float) / norm + norm)


def cp_point_jacobian(plane: CpPlane | np.ndarray, p_scan) -> np.ndarray:
    """Derivative of the point-to-plane distance w.r.t. the closest-point vector."""
    Pi = plane.Pi if isinstance(plane, CpPlane) else np.asarray(plane, dtype=float)
    p_scan = np.asarray(p_scan, dtype=float)
    norm = np.linalg.norm(Pi)
    if norm == 0.0:
        raise SingularParameterization("closest-point Jacobian undefined at zero intercept")
    return (norm**2 * p_scan - Pi * (Pi @ p_scan)) / norm**3 + Pi / norm


def sp_point_jacobian(plane: SpPlane, p_scan) -> np.ndarray:
    """Derivative of ``n(u)^T p + OA`` w.r.t. ``(u_s, OA)``."""
    H = tangent_map(plane.u_s).H
    return np.concatenate([np.asarray(p_scan, float) @ H, [1.0]])


# ----------------------------------------------------------- observability

def pluecker_edge_rows(x: PlueckerState, k: int, g=GRAVITY) -> np.ndarray:
    """Edge rows of the basis matrix with Plücker columns for edge ``k``."""
    g = np.asarray(g, dtype=float)
    e = x.edges[k]
    imu = x.imu
    C, v, p = imu.C, imu.v, imu.p
    l, d, tau = e.l, e.d, e.tau
    dtheta_ds = cgr_kinematics_jacobian_inv(imu.s)
    L = skew(l)
    o = x.edge_offset(k)
    rows = np.zeros((12, x.dim))
    rows[0:3, S] = skew(C @ l) @ dtheta_ds
    rows[0:3, o:o + 3] = -C @ L
    d_E = C @ (tau * d + np.cross(l, p))
    rows[3:6, S] = skew(d_E) @ dtheta_ds
    rows[3:6, P] = C @ L
    rows[3:6, o:o + 3] = C @ (-tau * skew(d) + skew(p) @ L)
    rows[3:6, o + 3] = C @ d
    rows[6:9, S] = skew(C @ np.cross(l, v)) @ dtheta_ds
    rows[6:9, V] = C @ L
    rows[6:9, o:o + 3] = C @ skew(v) @ L
    rows[9:12, S] = skew(C @ np.cross(l, g)) @ dtheta_ds
    rows[9:12, o:o + 3] = C @ skew(g) @ L
    return rows


def build_pluecker_matrix(x: PlueckerState, g=GRAVITY) -> np.ndarray:
    blocks = [pluecker_edge_rows(x, k, g) for k in range(len(x.edges))]
    if x.planes:
        # plane rows do not touch edge columns; build them in an SP layout and re-map
        proxy = FullState(x.imu, [], list(x.planes))
        for k in range(len(x.planes)):
            r = plane_rows(proxy, k, g)
            rows = np.zeros((6, x.dim))
            rows[:, :IMU_DIM] = r[:, :IMU_DIM]
            o = x.plane_offset(k)
            rows[:, o:o + 3] = r[:, proxy.plane_offset(k):proxy.plane_offset(k) + 3]
            blocks.append(rows)
    blocks.append(bias_rows(x.dim))
    return np.vstack(blocks)


def pluecker_null_basis(x: PlueckerState, g=GRAVITY) -> np.ndarray:
    """Rotation about gravity plus the self-rotation of every edge (through-origin case)."""
    g = np.asarray(g, dtype=float)
    if not x.edges:
        raise InvalidScenario("Plücker null basis needs edges")
    if any(e.tau != 0.0 for e in x.edges):
        raise InvalidScenario("Plücker pathology requires every edge to pass through the origin")
    if np.linalg.matrix_rank(np.array([e.d for e in x.edges]), tol=1e-8) != 3:
        raise InvalidScenario("Plücker pathology requires rank([d_1 ... d_m]) = 3")
    imu = x.imu
    yaw = np.zeros(x.dim)
    yaw[S] = cgr_kinematics_jacobian(imu.s) @ imu.C @ g
    yaw[V] = -np.cross(imu.v, g)
    yaw[P] = -np.cross(imu.p, g)
    for k in range(len(x.edges)):
        o = x.edge_offset(k)
        yaw[o:o + 3] = g
    for k, pl in enumerate(x.planes):
        o = x.plane_offset(k)
        yaw[o:o + 3] = _plane_rotation_block(pl, g)
    cols = [yaw]
    for k, e in enumerate(x.edges):
        vec = np.zeros(x.dim)
        o = x.edge_offset(k)
        vec[o:o + 3] = e.l
        cols.append(vec)
    return np.column_stack(cols)


def pluecker_translation_directions(x: PlueckerState) -> np.ndarray:
    """Global translations expressed in the Plücker chart.

    The required moment change ``-[l x] t`` is split along ``d`` (absorbed by
    ``tau``) and ``l x d`` (absorbed by a self-rotation, which needs
    ``tau > 0``); at ``tau = 0`` the second part is lost.
    """
    cols = []
    for i in range(3):
        t = np.eye(3)[i]
        vec = np.zeros(x.dim)
        vec[P] = t
        for k, e in enumerate(x.edges):
            o = x.edge_offset(k)
            dm = -np.cross(e.l, t)
            vec[o + 3] = e.d @ dm
            if e.tau > 0:
                vec[o:o + 3] = e.l * (np.cross(e.l, e.d) @ dm) / e.tau
        for k, pl in enumerate(x.planes):
            vec[x.plane_offset(k) + 2] = -plane_normal(pl.u_s)[i]
        cols.append(vec)
    return np.column_stack(cols)
