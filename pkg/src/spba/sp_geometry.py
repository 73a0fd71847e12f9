"""Stereographic-projection charts for plane normals and edge directions.

A point ``u`` in R^2 maps to the unit sphere minus the north pole::

    sphere(u) = [2 u_x, 2 u_y, |u|^2 - 1] / (1 + |u|^2)

Planes are stored as ``(u_s, OA)`` and edges as ``(u_l, Lambda)``, where the
edge moment is ``Lambda_x T1 + Lambda_y T2`` with ``T_i = [l x] gamma_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRepresentation, InvalidArgument, InvalidGeometry

DEFAULT_DELTA = 0.2
NORTH_POLE_TOL = 1e-9


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _as_uv(u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(2)
    if not math.isfinite(u[0] + u[1]):
        raise InvalidArgument(f"non-finite chart coordinates {u}")
    return u


@dataclass(frozen=True)
class SpPlane:
    u_s: np.ndarray
    OA: float

    def __post_init__(self):
        object.__setattr__(self, "u_s", _as_uv(self.u_s))
        object.__setattr__(self, "OA", float(self.OA))

    @property
    def normal(self) -> np.ndarray:
        return plane_normal(self.u_s)

    def as_vector(self) -> np.ndarray:
        return np.array([self.u_s[0], self.u_s[1], self.OA])

    @classmethod
    def from_vector(cls, vec) -> "SpPlane":
        return cls(vec[:2], vec[2])


@dataclass(frozen=True)
class SpEdge:
    u_l: np.ndarray
    Lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_l", _as_uv(self.u_l))
        object.__setattr__(self, "Lam", _as_uv(self.Lam))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.u_l, self.Lam])

    @classmethod
    def from_vector(cls, vec) -> "SpEdge":
        return cls(vec[:2], vec[2:4])


@dataclass(frozen=True)
class TangentMap:
    """Derivative ``H`` of the sphere point w.r.t. ``u`` and its pseudo-inverse."""

    H: np.ndarray
    Hplus: np.ndarray


@dataclass(frozen=True)
class BallMargin:
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgument("ball margin must be positive")

    @property
    def bound(self) -> float:
        return derivative_bound(self.delta)


def derivative_bound(delta: float) -> float:
    """Frobenius bound on the chart derivatives inside ``|u| <= 1 + delta``."""
    return float(np.sqrt(9.0 + 8.0 * delta + 4.0 * delta**2))


def sphere_point(u) -> np.ndarray:
    u = _as_uv(u)
    q = 1.0 + u @ u
    return np.array([2.0 * u[0], 2.0 * u[1], q - 2.0]) / q


def plane_normal(u_s) -> np.ndarray:
    return sphere_point(u_s)


def inverse_projection(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if 1.0 - n[2] < NORTH_POLE_TOL:
        raise DegenerateRepresentation("vector at the north pole; flip its sign first")
    return n[:2] / (1.0 - n[2])


def _check_unit(n, name):
    n = np.asarray(n, dtype=float).reshape(3)
    if not np.all(np.isfinite(n)) or abs(np.linalg.norm(n) - 1.0) > 1e-8:
        raise InvalidArgument(f"{name} must be a finite unit vector, got {n}")
    return n


def plane_from_geometric(n, OA) -> SpPlane:
    n = _check_unit(n, "normal")
    return SpPlane(inverse_projection(n), OA)


def tangent_map(u) -> TangentMap:
    u = _as_uv(u)
    ux, uy = u
    q = 1.0 + ux * ux + uy * uy
    H = (2.0 / q**2) * np.array(
        [
            [1.0 + uy * uy - ux * ux, -2.0 * ux * uy],
            [-2.0 * ux * uy, 1.0 + ux * ux - uy * uy],
            [2.0 * ux, 2.0 * uy],
        ]
    )
    # the chart is conformal: H^T H = (4 / q^2) I
    Hplus = (0.25 * q * q) * H.T
    return TangentMap(H, Hplus)


def edge_gammas(u_l) -> tuple[np.ndarray, np.ndarray]:
    u = _as_uv(u_l)
    return np.array([0.0, 1.0, u[1]]), -np.array([1.0, 0.0, u[0]])


def edge_frame(u_l) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(l, T1, T2)``; ``T1, T2`` form an orthonormal basis of l-perp."""
    l = sphere_point(u_l)
    g1, g2 = edge_gammas(u_l)
    L = skew(l)
    return l, L @ g1, L @ g2


def edge_embed(e: SpEdge):
    """Embed an edge as ``(l, moment, T1, T2)`` with ``moment = tau * d``."""
    l, T1, T2 = edge_frame(e.u_l)
    moment = e.Lam[0] * T1 + e.Lam[1] * T2
    return l, moment, T1, T2


def edge_from_geometric(l, moment) -> SpEdge:
    l = _check_unit(l, "edge direction")
    moment = np.asarray(moment, dtype=float).reshape(3)
    if abs(l @ moment) > 1e-8 * max(np.linalg.norm(moment), 1e-300) and np.linalg.norm(moment) > 0:
        raise InvalidGeometry("moment is not orthogonal to the edge direction")
    u = inverse_projection(l)
    _, T1, T2 = edge_frame(u)
    T = np.column_stack([T1, T2])
    Lam = np.linalg.solve(T.T @ T, T.T @ moment)
    return SpEdge(u, Lam)


def clamp_ball(feature, margin: BallMargin | float = DEFAULT_DELTA):
    """Swap to the antipodal representation when ``|u|`` leaves the ball.

    The inversion ``u -> -u/|u|^2`` maps the sphere point to its antipode, so
    the feature is re-expressed as ``-(n, OA)`` or ``-(l, moment)``.
    """
    delta = margin.delta if isinstance(margin, BallMargin) else float(margin)
    if isinstance(feature, SpPlane):
        u = feature.u_s
    elif isinstance(feature, SpEdge):
        u = feature.u_l
    else:
        raise InvalidArgument(f"cannot clamp {type(feature).__name__}")
    if u @ u <= (1.0 + delta) ** 2:
        return feature
    return chart_flip(feature)


def _inversion(u) -> tuple[np.ndarray, np.ndarray]:
    r2 = u @ u
    if r2 == 0.0:
        raise DegenerateRepresentation("the chart origin has no antipodal representative")
    return -u / r2, (2.0 * np.outer(u, u) - r2 * np.eye(2)) / r2**2


def chart_flip(feature):
    """Re-express a feature in the antipodal chart, ``u -> -u/|u|^2``."""
    if isinstance(feature, SpPlane):
        u_new, _ = _inversion(feature.u_s)
        return SpPlane(u_new, -feature.OA)
    if not isinstance(feature, SpEdge):
        raise InvalidArgument(f"cannot flip {type(feature).__name__}")
    u_new, _ = _inversion(feature.u_l)
    _, moment, _, _ = edge_embed(feature)
    _, T1, T2 = edge_frame(u_new)
    T = np.column_stack([T1, T2])
    return SpEdge(u_new, np.linalg.solve(T.T @ T, T.T @ (-moment)))


def chart_flip_jacobian(feature) -> np.ndarray:
    """Derivative of :func:`chart_flip` w.r.t. the feature parameters."""
    if isinstance(feature, SpPlane):
        _, J_uu = _inversion(feature.u_s)
        out = np.zeros((3, 3))
        out[:2, :2] = J_uu
        out[2, 2] = -1.0
        return out
    if not isinstance(feature, SpEdge):
        raise InvalidArgument(f"cannot flip {type(feature).__name__}")
    u_new, J_uu = _inversion(feature.u_l)
    _, moment, T1, T2 = edge_embed(feature)
    _, T1n, T2n = edge_frame(u_new)
    _, dT1n, dT2n = frame_jacobians(u_new)
    d_u, _ = edge_moment_jacobian(feature.u_l, feature.Lam)
    Tn = np.vstack([T1n, T2n])
    out = np.zeros((4, 4))
    out[:2, :2] = J_uu
    out[2:, :2] = -np.vstack([moment @ dT1n, moment @ dT2n]) @ J_uu - Tn @ d_u
    out[2:, 2:] = -Tn @ np.column_stack([T1, T2])
    return out


def edge_moment_jacobian(u_l, Lam) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the moment ``[l x](Lam_x g1 + Lam_y g2)`` w.r.t. ``u_l`` and ``Lam``."""
    u = _as_uv(u_l)
    Lam = _as_uv(Lam)
    l, T1, T2 = edge_frame(u)
    g1, g2 = edge_gammas(u)
    w = Lam[0] * g1 + Lam[1] * g2
    H = tangent_map(u).H
    d_u = -skew(w) @ H + skew(l) @ lambda_gamma_matrix(Lam)
    return d_u, np.column_stack([T1, T2])


def lambda_gamma_matrix(Lam) -> np.ndarray:
    """``d(Lam_x g1 + Lam_y g2)/du``: only the z row is nonzero."""
    return np.array([[0.0, 0.0], [0.0, 0.0], [-Lam[1], Lam[0]]])


def frame_jacobians(u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Jacobians of ``l``, ``T1``, ``T2`` w.r.t. ``u`` (each 3x2)."""
    u = _as_uv(u)
    l, _, _ = edge_frame(u)
    g1, g2 = edge_gammas(u)
    H = tangent_map(u).H
    L = skew(l)
    dT1 = -skew(g1) @ H + L @ np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    dT2 = -skew(g2) @ H + L @ np.array([[0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]])
    return H, dT1, dT2
