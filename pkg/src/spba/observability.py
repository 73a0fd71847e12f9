"""Basis codistribution, claimed unobservable directions and numeric rank checks.

The observability matrix stacks, for every edge, the gradients of
``C l``, ``d_E``, ``C [l x] v``, ``C [l x] g``; for every plane the gradients of
``C n``, ``p^T n + OA``, ``n^T v``, ``n^T g``; and finally the gradients of
the two bias blocks.  Its right null space is compared against closed-form
direction families (global translation, rotation about gravity, and the
extra directions that appear for degenerate feature layouts).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidScenario, Unsupported
from .kinematics import (
    BA,
    BG,
    GRAVITY,
    P,
    S,
    V,
    FullState,
    accel_field,
    cgr_kinematics_jacobian,
    cgr_kinematics_jacobian_inv,
    continuous_dynamics,
    drift_field,
    gyro_field,
    observe_edge,
    observe_edge_jacobian,
    observe_plane,
    observe_plane_jacobian,
)
from .sp_geometry import (
    SpEdge,
    edge_gammas,
    lambda_gamma_matrix,
    plane_normal,
    skew,
    sphere_point,
    tangent_map,
)

RANK_TOL = 1e-8
ANGLE_TOL = 1e-8
NULL_REL_TOL = 1e-9
GAP_MIN = 1e3

# names of the corrections applied to the closed-form directions
FIX_EDGE_TRANSLATION = "edge-translation-scale"
FIX_EDGE_ROTATION = "edge-rotation-scale"
FIX_ROTATION_VELOCITY = "rotation-velocity-sign"
FIX_COMPLEMENT_INDEX = "normal-complement-index"


@dataclass(frozen=True)
class IndicatorFlags:
    rS: int
    rE: int
    D1: bool
    D2: bool
    D3: bool


@dataclass
class ObservabilityMatrix:
    M: np.ndarray
    state: FullState

    @property
    def shape(self):
        return self.M.shape


@dataclass
class NullBasis:
    columns: np.ndarray  # dim x u
    labels: list[str]
    cell: tuple
    corrections: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.columns.shape[1]


@dataclass
class NullspaceResult:
    rank: int
    nullity: int
    basis: np.ndarray  # orthonormal columns
    singular_values: np.ndarray
    gap_ratio: float

    @property
    def confident(self) -> bool:
        return self.gap_ratio >= GAP_MIN


# ------------------------------------------------------------------- flags

def _matrix_rank(vectors) -> int:
    if len(vectors) == 0:
        return 0
    sv = np.linalg.svd(np.array(vectors), compute_uv=False)
    return int(np.sum(sv > RANK_TOL * max(sv[0], 1.0)))


def indicator_flags(x: FullState, g=GRAVITY) -> IndicatorFlags:
    if x.m + x.n == 0:
        raise InvalidScenario("indicator flags need at least one feature")
    g_hat = np.asarray(g, dtype=float) / np.linalg.norm(g)
    normals = [plane_normal(pl.u_s) for pl in x.planes]
    dirs = [sphere_point(e.u_l) for e in x.edges]
    rS = _matrix_rank(normals)
    rE = _matrix_rank(dirs)
    D1 = False
    if normals:
        Q, _ = np.linalg.qr(np.array(normals).T)
        Q = Q[:, :rS]
        D1 = bool(np.linalg.norm(g_hat - Q @ (Q.T @ g_hat)) < ANGLE_TOL)
    D2 = D3 = False
    if dirs:
        l1 = dirs[0]
        D2 = bool(abs(l1 @ g_hat) < ANGLE_TOL)
        D3 = bool(all(abs(l1 @ n) < ANGLE_TOL for n in normals))
    return IndicatorFlags(rS, rE, D1, D2, D3)


def predicted_unobs_dim(flags: IndicatorFlags) -> int:
    """Unobservable dimension for a feature layout (closed-form table)."""
    rS, rE = flags.rS, flags.rE
    if rS == 0 and rE == 0:
        raise InvalidScenario("no features: the table has no entry for r(S) = r(E) = 0")
    if rE >= 2 or rS == 3:
        return 4
    if rE == 0:
        return 9 - 2 * rS + int(flags.D1)
    if rS == 0:
        return 5 + int(flags.D2)
    return 4 + int(flags.D3) * (1 + int(flags.D2))


# ------------------------------------------------------------ basis matrix

def plane_rows(x: FullState, k: int, g=GRAVITY) -> np.ndarray:
    """Six gradient rows for plane ``k``."""
    g = np.asarray(g, dtype=float)
    pl = x.planes[k]
    n = plane_normal(pl.u_s)
    H = tangent_map(pl.u_s).H
    o = x.plane_offset(k)
    rows = np.zeros((6, x.dim))
    rows[0:4] = observe_plane_jacobian(x, k)
    rows[4, V] = n
    rows[4, o:o + 2] = x.imu.v @ H
    rows[5, o:o + 2] = g @ H
    return rows


def edge_rows(x: FullState, k: int, g=GRAVITY) -> np.ndarray:
    """Twelve gradient rows for edge ``k`` in the stereographic layout."""
    g = np.asarray(g, dtype=float)
    e = x.edges[k]
    imu = x.imu
    C = imu.C
    l = sphere_point(e.u_l)
    H = tangent_map(e.u_l).H
    dtheta_ds = cgr_kinematics_jacobian_inv(imu.s)
    o = x.edge_offset(k)
    rows = np.zeros((12, x.dim))
    rows[0:6] = observe_edge_jacobian(x, k)
    Lv = C @ np.cross(l, imu.v)
    rows[6:9, S] = skew(Lv) @ dtheta_ds
    rows[6:9, V] = C @ skew(l)
    rows[6:9, o:o + 2] = -C @ skew(imu.v) @ H
    Lg = C @ np.cross(l, g)
    rows[9:12, S] = skew(Lg) @ dtheta_ds
    rows[9:12, o:o + 2] = -C @ skew(g) @ H
    return rows


def bias_rows(dim: int) -> np.ndarray:
    rows = np.zeros((6, dim))
    rows[0:3, BG] = np.eye(3)
    rows[3:6, BA] = np.eye(3)
    return rows


def build_basis_matrix(x: FullState, g=GRAVITY) -> ObservabilityMatrix:
    """Stack edge rows, plane rows and bias rows: ``(6+12m+6n) x (15+4m+3n)``."""
    blocks = [edge_rows(x, k, g) for k in range(x.m)]
    blocks += [plane_rows(x, k, g) for k in range(x.n)]
    blocks.append(bias_rows(x.dim))
    return ObservabilityMatrix(np.vstack(blocks), x)


def basis_functions(x: FullState, g=GRAVITY) -> np.ndarray:
    """Values of the scalar functions whose gradients form the basis matrix."""
    g = np.asarray(g, dtype=float)
    imu = x.imu
    out = []
    for k, e in enumerate(x.edges):
        l = sphere_point(e.u_l)
        out += [observe_edge(x, k), imu.C @ np.cross(l, imu.v), imu.C @ np.cross(l, g)]
    for k, pl in enumerate(x.planes):
        n = plane_normal(pl.u_s)
        out += [observe_plane(x, k), [n @ imu.v], [n @ g]]
    out += [imu.b_g, imu.b_a]
    return np.concatenate(out)


# --------------------------------------------------------- claimed directions

def _edge_translation_block(e: SpEdge, t, literal=False) -> np.ndarray:
    """Edge parameter change compensating a global translation ``t``."""
    u = e.u_l
    q = 1.0 + u @ u
    l = sphere_point(u)
    Hp = tangent_map(u).Hplus
    scale = q if literal else 2.0 / q
    return np.concatenate([np.zeros(2), -scale * Hp @ np.cross(l, t)])


def _edge_rotation_block(e: SpEdge, w, first_edge: SpEdge | None = None, literal=False) -> np.ndarray:
    """Edge parameter change under an infinitesimal global rotation about ``w``."""
    u = e.u_l
    l = sphere_point(u)
    Hp = tangent_map(u).Hplus
    g1, g2 = edge_gammas(u)
    wl = e.Lam[0] * g1 + e.Lam[1] * g2
    du = -Hp @ np.cross(l, w)
    inner = lambda_gamma_matrix(e.Lam) @ Hp @ skew(l) @ w - np.cross(wl, w)
    if literal:
        ref = first_edge.u_l if first_edge is not None else u
        scale = 1.0 / (1.0 + ref @ ref)
    else:
        scale = 2.0 / (1.0 + u @ u)
    dlam = scale * Hp @ skew(l) @ inner
    return np.concatenate([du, dlam])


def _plane_rotation_block(pl, w, p=None) -> np.ndarray:
    """Plane change for a rotation about ``w``; ``p`` adds the intercept term."""
    n = plane_normal(pl.u_s)
    Hp = tangent_map(pl.u_s).Hplus
    doa = 0.0 if p is None else p @ np.cross(n, w)
    return np.concatenate([-Hp @ np.cross(n, w), [doa]])


class _Builder:
    def __init__(self, x: FullState, g):
        self.x = x
        self.g = np.asarray(g, dtype=float)
        self.cols: list[np.ndarray] = []
        self.labels: list[str] = []
        self.K = cgr_kinematics_jacobian(x.imu.s)

    def new(self) -> np.ndarray:
        return np.zeros(self.x.dim)

    def add(self, vec, label):
        self.cols.append(vec)
        self.labels.append(label)

    def set_edges(self, vec, fn):
        for k, e in enumerate(self.x.edges):
            o = self.x.edge_offset(k)
            vec[o:o + 4] = fn(e)

    def set_planes(self, vec, fn):
        for k, pl in enumerate(self.x.planes):
            o = self.x.plane_offset(k)
            vec[o:o + 3] = fn(pl)


def translation_directions(x: FullState, literal=False) -> np.ndarray:
    """Three global-translation directions (always unobservable)."""
    cols = []
    for i in range(3):
        t = np.eye(3)[i]
        vec = np.zeros(x.dim)
        vec[P] = t
        for k, e in enumerate(x.edges):
            o = x.edge_offset(k)
            vec[o:o + 4] = _edge_translation_block(e, t, literal)
        for k, pl in enumerate(x.planes):
            o = x.plane_offset(k)
            vec[o + 2] = -plane_normal(pl.u_s)[i]
        cols.append(vec)
    return np.column_stack(cols)


def global_rotation_direction(x: FullState, w, literal=False) -> np.ndarray:
    """Infinitesimal rotation of the whole world about axis ``w``.

    Attitude, velocity, position and every feature rotate together; gravity is
    held fixed, so this is unobservable only for suitable ``w`` (e.g. ``g``).
    """
    w = np.asarray(w, dtype=float)
    imu = x.imu
    vec = np.zeros(x.dim)
    vec[S] = cgr_kinematics_jacobian(imu.s) @ imu.C @ w
    vec[V] = -np.cross(imu.v, w)
    vec[P] = -np.cross(imu.p, w)
    first = x.edges[0] if x.edges else None
    for k, e in enumerate(x.edges):
        o = x.edge_offset(k)
        vec[o:o + 4] = _edge_rotation_block(e, w, first, literal)
    for k, pl in enumerate(x.planes):
        o = x.plane_offset(k)
        vec[o:o + 3] = _plane_rotation_block(pl, w)
    return vec


def _independent_normals(x: FullState, count: int) -> list[np.ndarray]:
    chosen: list[np.ndarray] = []
    for pl in x.planes:
        n = plane_normal(pl.u_s)
        if _matrix_rank(chosen + [n]) > len(chosen):
            chosen.append(n)
        if len(chosen) == count:
            break
    return chosen


def _orth_complement(n) -> tuple[np.ndarray, np.ndarray]:
    U, _, _ = np.linalg.svd(np.asarray(n).reshape(3, 1))
    return U[:, 1], U[:, 2]


def claimed_null_basis(x: FullState, flags: IndicatorFlags, g=GRAVITY, literal=False) -> NullBasis:
    """Closed-form unobservable directions for the layout described by ``flags``.

    With ``literal=True`` the scale factors and signs are taken verbatim from
    the published expressions; the default applies the corrections listed in
    :attr:`NullBasis.corrections`.
    """
    rS, rE = flags.rS, flags.rE
    if rS == 0 and rE == 0:
        raise InvalidScenario("no unobservable distribution for a feature-free system")
    g = np.asarray(g, dtype=float)
    b = _Builder(x, g)
    imu = x.imu
    used: set[str] = set()
    K, C, v, p = b.K, imu.C, imu.v, imu.p

    T = translation_directions(x, literal)
    for i, axis in enumerate("xyz"):
        b.add(T[:, i], f"translation-{axis}")
    if x.edges:
        used.add(FIX_EDGE_TRANSLATION)

    if rE == 0 and rS in (1, 2):
        if rS == 1:
            (n1,) = _independent_normals(x, 1)
            c1, c2 = _orth_complement(n1)
            used.add(FIX_COMPLEMENT_INDEX)
            for i, c in enumerate((c1, c2)):
                vec = b.new()
                vec[V] = c
                b.add(vec, f"velocity-perp-{i + 1}")
            if not flags.D1:
                vec = b.new()
                vec[S] = K @ C @ n1
                b.add(vec, "attitude-about-normal")
                vec = b.new()
                vec[S] = K @ C @ g
                vec[V] = (v @ np.cross(n1, g)) * n1
                b.set_planes(vec, lambda pl: _plane_rotation_block(pl, g, p))
                b.add(vec, "rotation-about-gravity")
            else:
                sign = 1.0 if literal else -1.0
                used.add(FIX_ROTATION_VELOCITY)
                for i in range(3):
                    ei = np.eye(3)[i]
                    vec = b.new()
                    vec[S] = K @ C @ ei
                    vec[V] = sign * np.cross(v, ei)
                    b.set_planes(vec, lambda pl, ei=ei: _plane_rotation_block(pl, ei, p))
                    b.add(vec, f"rotation-{'xyz'[i]}")
        else:
            n1, n2 = _independent_normals(x, 2)
            vec = b.new()
            vec[V] = np.cross(n1, n2)
            b.add(vec, "velocity-along-intersection")
            if not flags.D1:
                N = np.column_stack([n1, n2, np.cross(n1, n2)])
                Vrow = np.array([v @ np.cross(n1, g), v @ np.cross(n2, g), 0.0])
                vec = b.new()
                vec[S] = K @ C @ g
                vec[V] = np.linalg.solve(N.T, Vrow)
                b.set_planes(vec, lambda pl: _plane_rotation_block(pl, g, p))
                b.add(vec, "rotation-about-gravity")
            else:
                for a, c in ((n1, n2), (n2, n1)):
                    Ac = np.cross(a, np.cross(a, c))
                    U = (v @ np.cross(c, a)) / (c @ Ac) * Ac
                    vec = b.new()
                    vec[S] = K @ C @ a
                    vec[V] = U
                    b.set_planes(vec, lambda pl, a=a: _plane_rotation_block(pl, a, p))
                    b.add(vec, "rotation-about-normal")
        return NullBasis(np.column_stack(b.cols), b.labels, _cell(flags), _corrections(used, literal))

    # minimum set: translations plus rotation about gravity
    b.add(global_rotation_direction(x, g, literal), "rotation-about-gravity")
    if x.edges:
        used.add(FIX_EDGE_ROTATION)
    if rE == 1 and rS < 3:
        l1 = sphere_point(x.edges[0].u_l)
        if flags.D3 and flags.D2:
            b.add(global_rotation_direction(x, np.cross(l1, g), literal), "rotation-about-edge-gravity-normal")
        if flags.D3:
            vec = b.new()
            vec[V] = l1
            b.add(vec, "velocity-along-edge")
    return NullBasis(np.column_stack(b.cols), b.labels, _cell(flags), _corrections(used, literal))


def _cell(flags: IndicatorFlags) -> tuple:
    return (flags.rS, flags.rE, flags.D1, flags.D2, flags.D3)


def _corrections(used: set[str], literal: bool) -> tuple[str, ...]:
    return () if literal else tuple(sorted(used))


# -------------------------------------------------------------- numerics

def numeric_nullspace(M, rel_tol: float = NULL_REL_TOL) -> NullspaceResult:
    """SVD null space; singular values below ``rel_tol * sigma_max`` are dropped."""
    M = M.M if isinstance(M, ObservabilityMatrix) else np.asarray(M, dtype=float)
    _, sv, Vt = np.linalg.svd(M)
    ncols = M.shape[1]
    full = np.zeros(ncols)
    full[: len(sv)] = sv
    smax = full[0] if ncols else 0.0
    rank = int(np.sum(full > rel_tol * smax))
    nullity = ncols - rank
    if nullity == 0:
        gap = np.inf
    elif rank == 0:
        gap = 0.0
    else:
        dropped = full[rank]
        gap = np.inf if dropped == 0.0 else full[rank - 1] / dropped
    return NullspaceResult(rank, nullity, Vt[rank:].T, full, float(gap))


def annihilation_residual(M, basis) -> float:
    """``max_b |M b| / (|M|_F |b|)`` over the columns of ``basis``."""
    M = M.M if isinstance(M, ObservabilityMatrix) else np.asarray(M, dtype=float)
    B = basis.columns if isinstance(basis, NullBasis) else np.asarray(basis, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"basis rows {B.shape[0]} != matrix columns {M.shape[1]}")
    fro = np.linalg.norm(M)
    norms = np.linalg.norm(B, axis=0)
    return float(np.max(np.linalg.norm(M @ B, axis=0) / (fro * norms)))


def null_containment(null_basis: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Fraction of each vector's norm retained by projection onto the null space."""
    V = vectors if vectors.ndim == 2 else vectors[:, None]
    proj = null_basis @ (null_basis.T @ V)
    return np.linalg.norm(proj, axis=0) / np.linalg.norm(V, axis=0)


def null_exclusion(null_basis: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Fraction of each vector's norm lying outside the null space."""
    V = vectors if vectors.ndim == 2 else vectors[:, None]
    rest = V - null_basis @ (null_basis.T @ V)
    return np.linalg.norm(rest, axis=0) / np.linalg.norm(V, axis=0)


def span_dimension(vectors: np.ndarray, tol: float = 1e-8) -> int:
    V = vectors / np.linalg.norm(vectors, axis=0)
    sv = np.linalg.svd(V, compute_uv=False)
    return int(np.sum(sv > tol * sv[0]))


# ------------------------------------------------------- Lie derivatives

FieldId = str | tuple


def _field(fid, x: FullState, g, omega0, a0) -> np.ndarray:
    if fid == "f0":
        return drift_field(x, g)
    if fid == "f":
        return continuous_dynamics(x, omega0, a0, g)
    kind, k = fid
    if kind == "f1":
        return gyro_field(x, k)
    if kind == "f2":
        return accel_field(x, k)
    raise Unsupported(f"unknown vector field {fid!r}")


def observation_function(obs: str | tuple, g=GRAVITY) -> Callable[[FullState], np.ndarray]:
    """Map an observation id to a function of the state.

    ``("plane", k)``, ``("edge", k)`` give the raw observations; a trailing
    row index selects one component, e.g. ``("plane", 0, 3)``.
    """
    kind, k, *row = obs
    fn = {"plane": observe_plane, "edge": observe_edge}[kind]
    if row:
        return lambda x: np.atleast_1d(fn(x, k)[row[0]])
    return lambda x: np.atleast_1d(fn(x, k))


def lie_derivative_numeric(obs, fields: Sequence[FieldId], x: FullState, omega0=None, a0=None,
                           g=GRAVITY, step: float = 1e-5):
    """Nested Lie derivative of an observation along vector fields, plus its gradient.

    Each nesting level is a central difference along the field evaluated at the
    current point; the gradient is an outer per-component central difference.
    Returns ``(value, gradient)`` with gradient shaped ``(len(value), dim)``.
    """
    if len(fields) > 2:
        raise Unsupported("Lie derivatives above order 2 are not supported")
    omega0 = np.zeros(3) if omega0 is None else np.asarray(omega0, float)
    a0 = np.zeros(3) if a0 is None else np.asarray(a0, float)
    h = observation_function(obs, g) if not callable(obs) else obs
    depth = len(fields)
    # larger steps for outer levels keep nested round-off in check
    steps = [step * 10.0 ** (depth - i) for i in range(depth)]

    def lie(vec: np.ndarray, level: int) -> np.ndarray:
        state = x.with_vector(vec)
        if level == 0:
            return h(state)
        f = _field(fields[level - 1], state, g, omega0, a0)
        eps = steps[level - 1]
        return (lie(vec + eps * f, level - 1) - lie(vec - eps * f, level - 1)) / (2.0 * eps)

    x0 = x.flatten()
    value = lie(x0, depth)
    grad_step = step * 10.0 ** (depth + 1) if depth else step
    grad = np.zeros((value.size, x0.size))
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = grad_step * max(1.0, abs(x0[i]))
        grad[:, i] = (lie(x0 + e, depth) - lie(x0 - e, depth)) / (2.0 * e[i])
    return value, grad
