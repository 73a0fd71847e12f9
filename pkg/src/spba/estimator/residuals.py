"""Point-to-plane and point-to-line residuals in the stereographic charts.

Both functions are vectorised over a stack of IMU-frame points.  Keyframe
Jacobian columns follow the IMU layout ``[theta, b_g, v, b_a, p]``.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument
from ..kinematics import IMU_DIM, P, S, ImuState
from ..sp_geometry import SpEdge, SpPlane, edge_embed, edge_moment_jacobian, skew, tangent_map

__all__ = ["plane_residual", "edge_residual", "residual_covariance_check"]


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidArgument(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


def _skew_stack(pts: np.ndarray) -> np.ndarray:
    out = np.zeros((len(pts), 3, 3))
    out[:, 0, 1], out[:, 0, 2] = -pts[:, 2], pts[:, 1]
    out[:, 1, 0], out[:, 1, 2] = pts[:, 2], -pts[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -pts[:, 1], pts[:, 0]
    return out


def plane_residual(state: ImuState, points, plane: SpPlane, jacobians: bool = True):
    """Signed distances ``n^T (R p_I + p) + OA`` of each point.

    Returns ``(r, J_kf, J_feat)`` with shapes ``(N,)``, ``(N, 15)`` and ``(N, 3)``.
    """
    if not isinstance(plane, SpPlane):
        raise InvalidArgument("plane residual needs an SpPlane")
    pts = _points(points)
    n = plane.normal
    q = pts @ state.C + state.p
    r = q @ n + plane.OA
    if not jacobians:
        return r
    J_kf = np.zeros((len(pts), IMU_DIM))
    J_kf[:, S] = pts @ skew(state.C @ n)
    J_kf[:, P] = n
    J_feat = np.empty((len(pts), 3))
    J_feat[:, :2] = q @ tangent_map(plane.u_s).H
    J_feat[:, 2] = 1.0
    return r, J_kf, J_feat


def edge_residual(state: ImuState, points, edge: SpEdge, jacobians: bool = True, frame: str = "global"):
    """Moment mismatch ``d_E = m + l x (R p_I + p)`` of each point (orthogonal to ``l``).

    ``frame="imu"`` returns ``C d_E`` instead: same norm, but invariant (not
    merely equivariant) under a global rotation of poses and features.
    Returns ``(r, J_kf, J_feat)`` with shapes ``(N, 3)``, ``(N, 3, 15)`` and ``(N, 3, 4)``.
    """
    if frame not in ("global", "imu"):
        raise InvalidArgument(f"unknown residual frame {frame!r}")
    if not isinstance(edge, SpEdge):
        raise InvalidArgument("edge residual needs an SpEdge")
    pts = _points(points)
    l, moment, _, _ = edge_embed(edge)
    q = pts @ state.C + state.p
    L = skew(l)
    r = moment + q @ L.T
    if not jacobians:
        return r @ state.C.T if frame == "imu" else r
    R = state.C.T
    N = len(pts)
    J_kf = np.zeros((N, 3, IMU_DIM))
    J_kf[:, :, S] = -np.einsum("ij,njk->nik", L @ R, _skew_stack(pts))
    J_kf[:, :, P] = L
    d_u, d_lam = edge_moment_jacobian(edge.u_l, edge.Lam)
    H = tangent_map(edge.u_l).H
    J_feat = np.zeros((N, 3, 4))
    J_feat[:, :, :2] = d_u - np.einsum("nij,jk->nik", _skew_stack(q), H)
    J_feat[:, :, 2:] = d_lam
    if frame == "imu":
        C = state.C
        r = r @ C.T
        J_kf = np.einsum("ij,njk->nik", C, J_kf)
        J_kf[:, :, S] += _skew_stack(r)
        J_feat = np.einsum("ij,njk->nik", C, J_feat)
    return r, J_kf, J_feat


def _feature_points(kind, feature, count, rng, extent=2.0):
    if kind == "plane":
        n = feature.normal
        base = -feature.OA * n
        t1 = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        ab = rng.uniform(-extent, extent, size=(count, 2))
        return base + ab[:, :1] * t1 + ab[:, 1:] * t2
    l, moment, _, _ = edge_embed(feature)
    return np.cross(l, moment) + rng.uniform(-extent, extent, size=(count, 1)) * l


def residual_covariance_check(kind: str, feature, sigma: float, samples: int = 100_000,
                              seed: int = 0, state: ImuState | None = None) -> np.ndarray:
    """Sample covariance of residuals under isotropic point noise ``N(0, sigma I)``.

    Planes give a 1x1 variance; edges project ``d_E`` onto the orthonormal
    basis ``[T1, T2]`` of l-perp and give a 2x2 covariance.
    """
    if samples < 10_000:
        raise InvalidArgument("need at least 1e4 samples")
    if not sigma >= 0:
        raise InvalidArgument("variance must be non-negative")
    rng = np.random.default_rng(seed)
    state = state if state is not None else ImuState()
    world = _feature_points(kind, feature, samples, rng)
    local = (world - state.p) @ state.C.T
    local = local + np.sqrt(sigma) * rng.standard_normal(local.shape)
    if kind == "plane":
        r = plane_residual(state, local, feature, jacobians=False)
        return np.atleast_2d(np.cov(r))
    if kind == "edge":
        _, _, T1, T2 = edge_embed(feature)
        d = edge_residual(state, local, feature, jacobians=False)
        return np.cov(d @ np.column_stack([T1, T2]), rowvar=False)
    raise InvalidArgument(f"unknown feature kind {kind!r}")
