"""Sliding-window factor graph with first-estimate Jacobians.

Every factor is evaluated twice over: residuals at the current estimate and
Jacobians at each block's linearisation point, which is the frozen first
estimate for blocks registered in a :class:`FejRegistry` and the current
estimate otherwise.  Marginalisation linearises every involved block at its
frozen value, takes the Schur complement, and stores the result as a
square-root prior ``r0 + Jp (x boxminus x_ref)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..errors import InternalInvariantViolation, InvalidArgument
from ..kinematics import GRAVITY, IMU_DIM, P, S, V, ImuState, right_jacobian_inv, so3_log
from ..observability import _edge_rotation_block, _edge_translation_block, _plane_rotation_block
from ..sp_geometry import SpEdge, SpPlane, chart_flip, chart_flip_jacobian, clamp_ball, plane_normal
from .manifold import block_dim, copy_value, local, retract
from .preintegration import Preintegrated, imu_factor
from .residuals import edge_residual, plane_residual
from .types import Keyframe, NoiseModel, SolverConfig

NULL_DIRECTIONS = ("translation-x", "translation-y", "translation-z", "yaw")


def kf_key(kf_id: int) -> tuple:
    return ("kf", int(kf_id))


def feat_key(fid: str) -> tuple:
    return ("feat", str(fid))


# -------------------------------------------------------------------- factors

class Factor:
    """Base class: ``keys`` plus whitened residual / Jacobian evaluation."""

    keys: tuple = ()

    def residual(self, cur: dict) -> np.ndarray:
        raise NotImplementedError

    def linearize(self, cur: dict, lin: dict) -> tuple[np.ndarray, list[np.ndarray]]:
        raise NotImplementedError


class PlaneFactor(Factor):
    def __init__(self, kf, feature, points, sigma: float):
        self.keys = (kf, feature)
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.w = 1.0 / np.sqrt(sigma)

    def residual(self, cur):
        return self.w * plane_residual(cur[self.keys[0]], self.points, cur[self.keys[1]], jacobians=False)

    def linearize(self, cur, lin):
        _, J_kf, J_f = plane_residual(lin[self.keys[0]], self.points, lin[self.keys[1]])
        return self.residual(cur), [self.w * J_kf, self.w * J_f]


class EdgeFactor(Factor):
    def __init__(self, kf, feature, points, sigma: float):
        self.keys = (kf, feature)
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.w = 1.0 / np.sqrt(sigma)

    def residual(self, cur):
        r = edge_residual(cur[self.keys[0]], self.points, cur[self.keys[1]], jacobians=False, frame="imu")
        return self.w * r.ravel()

    def linearize(self, cur, lin):
        _, J_kf, J_f = edge_residual(lin[self.keys[0]], self.points, lin[self.keys[1]], frame="imu")
        n = 3 * len(self.points)
        return self.residual(cur), [self.w * J_kf.reshape(n, -1), self.w * J_f.reshape(n, -1)]


class ImuFactor(Factor):
    def __init__(self, kf_i, kf_j, pre: Preintegrated, g=GRAVITY):
        self.keys = (kf_i, kf_j)
        self.pre = pre
        self.g = np.asarray(g, dtype=float)
        self.sqrt_info = pre.sqrt_info()

    def residual(self, cur):
        r = imu_factor(self.pre, cur[self.keys[0]], cur[self.keys[1]], self.g, jacobians=False)
        return self.sqrt_info @ r

    def linearize(self, cur, lin):
        _, J_i, J_j, _ = imu_factor(self.pre, lin[self.keys[0]], lin[self.keys[1]], self.g)
        return self.residual(cur), [self.sqrt_info @ J_i, self.sqrt_info @ J_j]


class AnchorFactor(Factor):
    """Weak prior on the attitude and position of one keyframe."""

    def __init__(self, kf, ref: ImuState, sigma_rot: float, sigma_pos: float):
        self.keys = (kf,)
        self.ref = ref.copy()
        self.wr = 1.0 / sigma_rot
        self.wp = 1.0 / sigma_pos

    def residual(self, cur):
        x = cur[self.keys[0]]
        return np.concatenate([self.wr * so3_log(self.ref.C @ x.C.T), self.wp * (x.p - self.ref.p)])

    def linearize(self, cur, lin):
        x = lin[self.keys[0]]
        J = np.zeros((6, IMU_DIM))
        J[0:3, S] = self.wr * right_jacobian_inv(so3_log(self.ref.C @ x.C.T))
        J[3:6, P] = self.wp * np.eye(3)
        return self.residual(cur), [J]


class LinearFactor(Factor):
    """``sqrt_info (sum_k A_k x_k - z)`` over vector blocks."""

    def __init__(self, keys, A_blocks, z, sqrt_info=None):
        self.keys = tuple(keys)
        self.A = [np.atleast_2d(np.asarray(A, dtype=float)) for A in A_blocks]
        self.z = np.asarray(z, dtype=float)
        self.W = np.eye(len(self.z)) if sqrt_info is None else np.asarray(sqrt_info, dtype=float)

    def residual(self, cur):
        return self.W @ (sum(A @ cur[k] for A, k in zip(self.A, self.keys)) - self.z)

    def linearize(self, cur, lin):
        return self.residual(cur), [self.W @ A for A in self.A]


@dataclass
class MarginalPrior:
    """Schur-complement prior stored as information and in square-root form."""

    H: np.ndarray
    b: np.ndarray
    keys: tuple
    lin_points: dict
    ref: dict
    Jp: np.ndarray
    r0: np.ndarray

    def __post_init__(self):
        dims = sum(block_dim(self.ref[k]) for k in self.keys)
        if self.H.shape != (dims, dims) or self.b.shape != (dims,) or self.Jp.shape[1] != dims:
            raise InternalInvariantViolation("prior dimensions do not match its retained blocks")

    def offsets(self) -> list[tuple]:
        out, o = [], 0
        for k in self.keys:
            d = block_dim(self.ref[k])
            out.append((k, o, d))
            o += d
        return out

    def residual(self, cur: dict) -> np.ndarray:
        dx = np.concatenate([local(cur[k], self.ref[k]) for k in self.keys])
        return self.r0 + self.Jp @ dx

    def jacobian_blocks(self) -> list[np.ndarray]:
        return [self.Jp[:, o:o + d] for _, o, d in self.offsets()]


class PriorFactor(Factor):
    def __init__(self, prior: MarginalPrior):
        self.prior = prior
        self.keys = prior.keys

    def residual(self, cur):
        return self.prior.residual(cur)

    def linearize(self, cur, lin):
        return self.residual(cur), self.prior.jacobian_blocks()


# ------------------------------------------------------------------ registry

@dataclass
class FejRegistry:
    """Frozen linearisation points; a frozen value never changes afterwards."""

    frozen: dict = field(default_factory=dict)

    def is_frozen(self, key) -> bool:
        return key in self.frozen

    def freeze(self, key, value) -> None:
        if key not in self.frozen:
            self.frozen[key] = copy_value(value)

    def release(self, key) -> None:
        self.frozen.pop(key, None)

    def lin_value(self, key, current):
        return self.frozen.get(key, current)

    def rechart(self, key, value) -> None:
        """Replace a frozen point by the same geometric point in the antipodal chart."""
        self.frozen[key] = value


# -------------------------------------------------------------------- window

@dataclass
class FactorGraphWindow:
    noise: NoiseModel = field(default_factory=NoiseModel)
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    size: int = 10
    values: dict = field(default_factory=dict)
    stamps: dict = field(default_factory=dict)
    factors: list = field(default_factory=list)
    prior: MarginalPrior | None = None
    marginalized: bool = False

    # -- construction

    def add_keyframe(self, kf_id: int, stamp: float, state: ImuState) -> tuple:
        key = kf_key(kf_id)
        if key in self.values:
            raise InvalidArgument(f"keyframe {kf_id} already in the window")
        if self.stamps and stamp <= max(self.stamps.values()):
            raise InvalidArgument("keyframe stamps must increase")
        if len(self.stamps) >= self.size:
            raise InvalidArgument(f"window already holds {self.size} keyframes")
        self.values[key] = state.copy()
        self.stamps[kf_id] = float(stamp)
        return key

    def add_feature(self, fid: str, feature) -> tuple:
        if not isinstance(feature, (SpPlane, SpEdge)):
            raise InvalidArgument("features must be SpPlane or SpEdge")
        key = feat_key(fid)
        self.values[key] = feature
        return key

    def add_block(self, key, value) -> tuple:
        self.values[key] = copy_value(value)
        return key

    def add_factor(self, factor: Factor) -> None:
        missing = [k for k in factor.keys if k not in self.values]
        if missing:
            raise InvalidArgument(f"factor references unknown blocks {missing}")
        self.factors.append(factor)

    def add_points(self, kf_id: int, fid: str, points) -> None:
        kf, fk = kf_key(kf_id), feat_key(fid)
        if kf not in self.values or fk not in self.values:
            raise InvalidArgument(f"unknown keyframe {kf_id} or feature {fid}")
        feature = self.values[fk]
        cls = PlaneFactor if isinstance(feature, SpPlane) else EdgeFactor
        self.add_factor(cls(kf, fk, points, self.noise.sigma))

    def add_imu(self, kf_i: int, kf_j: int, pre: Preintegrated) -> None:
        self.add_factor(ImuFactor(kf_key(kf_i), kf_key(kf_j), pre, self.g))

    def add_anchor(self, kf_id: int, ref: ImuState) -> None:
        self.add_factor(AnchorFactor(kf_key(kf_id), ref, self.noise.anchor_rot, self.noise.anchor_pos))

    # -- views

    @property
    def keyframe_ids(self) -> list[int]:
        return sorted(self.stamps)

    @property
    def keyframes(self) -> list[Keyframe]:
        return [Keyframe(i, self.stamps[i], self.values[kf_key(i)]) for i in self.keyframe_ids]

    def order(self) -> list:
        kfs = [kf_key(i) for i in self.keyframe_ids]
        rest = sorted((k for k in self.values if k[0] != "kf"), key=repr)
        return kfs + rest

    def offsets(self) -> dict:
        out, o = {}, 0
        for k in self.order():
            d = block_dim(self.values[k])
            out[k] = (o, d)
            o += d
        return out

    @property
    def dim(self) -> int:
        return sum(block_dim(v) for v in self.values.values())

    def all_factors(self) -> list[Factor]:
        return self.factors + ([PriorFactor(self.prior)] if self.prior is not None else [])

    def lin_values(self, fej: FejRegistry | None) -> dict:
        if fej is None:
            return dict(self.values)
        return {k: fej.lin_value(k, v) for k, v in self.values.items()}

    def check(self) -> None:
        if self.marginalized and self.prior is None:
            raise InternalInvariantViolation("window was marginalised but carries no prior")
        observed = {k for f in self.factors for k in f.keys}
        if self.prior is not None:
            observed |= set(self.prior.keys)
        orphans = [k for k in self.values if k[0] == "feat" and k not in observed]
        if orphans:
            raise InternalInvariantViolation(f"features without observations: {orphans}")


# ------------------------------------------------------------------ assembly

def _stack(factors, cur, lin, offsets, dim):
    rs, Js = [], []
    for f in factors:
        r, blocks = f.linearize(cur, lin)
        J = np.zeros((len(r), dim))
        for k, B in zip(f.keys, blocks):
            o, d = offsets[k]
            J[:, o:o + d] += B
        rs.append(r)
        Js.append(J)
    if not rs:
        return np.zeros(0), np.zeros((0, dim))
    return np.concatenate(rs), np.vstack(Js)


def window_cost(w: FactorGraphWindow, fej: FejRegistry | None = None):
    """Total cost, stacked whitened residual and Jacobian over ``w.order()``."""
    w.check()
    r, J = _stack(w.all_factors(), w.values, w.lin_values(fej), w.offsets(), w.dim)
    return float(r @ r), r, J


def _cost_only(factors, values) -> float:
    return float(sum(np.sum(f.residual(values) ** 2) for f in factors))


# ----------------------------------------------------------------------- LM

@dataclass
class LmReport:
    costs: list
    iterations: int
    reason: str
    success: bool
    damping: float

    @property
    def initial_cost(self) -> float:
        return self.costs[0]

    @property
    def final_cost(self) -> float:
        return self.costs[-1]


def _retract_all(w: FactorGraphWindow, delta: np.ndarray, delta_max: float) -> tuple[dict, list]:
    out, flipped = {}, []
    for k, (o, d) in w.offsets().items():
        v = retract(w.values[k], delta[o:o + d])
        if isinstance(v, (SpPlane, SpEdge)):
            clamped = clamp_ball(v, delta_max)
            if clamped is not v:
                flipped.append(k)
            v = clamped
        out[k] = v
    return out, flipped


def _sync_charts(w: FactorGraphWindow, fej: FejRegistry | None, flipped: list) -> None:
    """Carry chart flips of clamped features over to frozen points and the prior."""
    for k in flipped:
        if fej is not None and fej.is_frozen(k):
            fej.rechart(k, chart_flip(fej.frozen[k]))
        prior = w.prior
        if prior is not None and k in prior.keys:
            new_ref = chart_flip(prior.ref[k])
            for key, o, d in prior.offsets():
                if key == k:
                    prior.Jp[:, o:o + d] = prior.Jp[:, o:o + d] @ chart_flip_jacobian(new_ref)
            prior.ref[k] = new_ref
            prior.lin_points[k] = chart_flip(prior.lin_points[k])
            prior.H = prior.Jp.T @ prior.Jp
            prior.b = -prior.Jp.T @ prior.r0


def _state_norm(w: FactorGraphWindow) -> float:
    sq = 0.0
    for v in w.values.values():
        if isinstance(v, ImuState):
            sq += 3.0 + sum(float(a @ a) for a in (v.b_g, v.v, v.b_a, v.p))
        else:
            vec = v.as_vector() if isinstance(v, (SpPlane, SpEdge)) else np.asarray(v, dtype=float)
            sq += float(vec @ vec)
    return float(np.sqrt(sq))


def lm_solve(w: FactorGraphWindow, fej: FejRegistry | None = None,
             config: SolverConfig | None = None) -> LmReport:
    """Levenberg-Marquardt on the window, updating ``w.values`` in place."""
    cfg = config or SolverConfig()
    cost, r, J = window_cost(w, fej)
    costs = [cost]
    lam = None
    reason = "max-iterations"
    success = True
    it = 0
    factors = w.all_factors()
    while it < cfg.max_iterations:
        if cost == 0.0:
            reason = "zero-cost"
            break
        grad = J.T @ r
        if np.linalg.norm(grad) < cfg.gradient_tol:
            reason = "gradient"
            break
        H = J.T @ J
        # Jacobi column scaling: damping acts on a unit-diagonal system
        D = np.sqrt(np.diag(H)) if cfg.scale_columns else np.ones(len(H))
        D[D == 0.0] = 1.0
        Hs = H / np.outer(D, D)
        if lam is None:
            lam = cfg.initial_damping * max(float(np.max(np.diag(Hs))), 1e-12)
        accepted = False
        while lam <= cfg.max_damping:
            try:
                chol = scipy.linalg.cho_factor(Hs + lam * np.eye(len(H)))
            except np.linalg.LinAlgError:
                lam *= cfg.damping_up
                continue
            delta = -scipy.linalg.cho_solve(chol, grad / D) / D
            cand, flipped = _retract_all(w, delta, cfg.clamp_delta)
            new_cost = _cost_only(factors, cand)
            if np.isfinite(new_cost) and new_cost < cost:
                accepted = True
                break
            lam *= cfg.damping_up
        it += 1
        if not accepted:
            reason = "damping-exhausted"
            success = bool(np.isfinite(cost))
            break
        _sync_charts(w, fej, flipped)
        w.values.update(cand)
        lam *= cfg.damping_down
        rel = (cost - new_cost) / cost
        cost, r, J = window_cost(w, fej)
        costs.append(cost)
        if rel < cfg.rel_cost_tol:
            reason = "relative-decrease"
            break
        if np.linalg.norm(delta) <= cfg.step_tol * (_state_norm(w) + cfg.step_tol):
            reason = "small-step"
            break
    return LmReport(costs, it, reason, success, float(lam or 0.0))


# ------------------------------------------------------------ marginalize

def schur_complement(H: np.ndarray, b: np.ndarray, n_drop: int, rel_tol: float = 1e-12):
    """Eliminate the leading ``n_drop`` variables from ``(H, b)``."""
    Hdd, Hdr, Hrr = H[:n_drop, :n_drop], H[:n_drop, n_drop:], H[n_drop:, n_drop:]
    bd, br = b[:n_drop], b[n_drop:]
    lam, V = np.linalg.eigh(0.5 * (Hdd + Hdd.T))
    keep = lam > rel_tol * max(lam.max(initial=0.0), 1e-300)
    Hdd_inv = (V[:, keep] / lam[keep]) @ V[:, keep].T
    Hs = Hrr - Hdr.T @ Hdd_inv @ Hdr
    bs = br - Hdr.T @ Hdd_inv @ bd
    return 0.5 * (Hs + Hs.T), bs


def marginal_sqrt(J: np.ndarray, r: np.ndarray, n_drop: int, rel_tol: float = 1e-12):
    """Square-root marginal ``(Jp, r0)`` of ``||J x + r||^2`` over the trailing variables.

    Rows are projected onto the orthogonal complement of the dropped columns and
    compressed by QR, so ``Jp^T Jp`` equals the Schur complement of ``J^T J``
    without ever forming it.
    """
    Jd, Jr = J[:, :n_drop], J[:, n_drop:]
    if n_drop:
        U, sv, _ = np.linalg.svd(Jd, full_matrices=True)
        k = int(np.sum(sv > rel_tol * max(sv.max(initial=0.0), 1e-300)))
        U2 = U[:, k:]
        Jr, r = U2.T @ Jr, U2.T @ r
    nr = Jr.shape[1]
    R = np.linalg.qr(np.column_stack([Jr, r]), mode="r")
    R = R[:min(nr, R.shape[0])]
    return R[:, :nr], R[:, nr]


def marginalize(w: FactorGraphWindow, fej: FejRegistry | None, drop, use_fej: bool = True,
                freeze_all_involved: bool = True) -> MarginalPrior | None:
    """Schur-complement ``drop`` out of the window and replace its factors by a prior.

    With ``use_fej`` every block touched by the eliminated factors is frozen at
    its current value (unless already frozen) before linearisation.
    """
    drop = list(drop)
    for k in drop:
        if k not in w.values:
            raise InvalidArgument(f"block {k} is not in the window")
    dset = set(drop)
    hit = [f for f in w.factors if dset & set(f.keys)]
    use_prior = w.prior is not None and bool(dset & set(w.prior.keys))
    factors = hit + ([PriorFactor(w.prior)] if use_prior else [])
    if not factors:
        for k in drop:
            _remove_block(w, fej, k)
        return w.prior
    involved = []
    for f in factors:
        for k in f.keys:
            if k not in involved:
                involved.append(k)
    order = w.order()
    retained = [k for k in order if k in involved and k not in dset]
    cols = [k for k in order if k in dset] + retained
    if use_fej and fej is not None:
        targets = involved if freeze_all_involved else [k for k in involved if k in dset]
        for k in targets:
            fej.freeze(k, w.values[k])
    lin = w.lin_values(fej if use_fej else None)
    offsets, o = {}, 0
    for k in cols:
        d = block_dim(w.values[k])
        offsets[k] = (o, d)
        o += d
    r, J = _stack(factors, w.values, lin, offsets, o)
    n_drop = sum(block_dim(w.values[k]) for k in drop)
    Jp, r0 = marginal_sqrt(J, r, n_drop)
    prior = MarginalPrior(
        H=Jp.T @ Jp,
        b=-Jp.T @ r0,
        keys=tuple(retained),
        lin_points={k: copy_value(lin[k]) for k in retained},
        ref={k: copy_value(w.values[k]) for k in retained},
        Jp=Jp,
        r0=r0,
    )
    w.factors = [f for f in w.factors if f not in hit]
    w.prior = prior
    w.marginalized = True
    for k in drop:
        _remove_block(w, fej, k)
    return prior


def _remove_block(w: FactorGraphWindow, fej: FejRegistry | None, key) -> None:
    w.values.pop(key)
    if key[0] == "kf":
        w.stamps.pop(key[1], None)
    if fej is not None:
        fej.release(key)


def oldest_drop_set(w: FactorGraphWindow) -> list:
    """Oldest keyframe plus the features observed by no other keyframe."""
    if not w.stamps:
        raise InvalidArgument("window has no keyframes")
    oldest = kf_key(w.keyframe_ids[0])
    seen_elsewhere = set()
    seen_by_oldest = set()
    for f in w.factors:
        if isinstance(f, (PlaneFactor, EdgeFactor)):
            (seen_by_oldest if f.keys[0] == oldest else seen_elsewhere).add(f.keys[1])
    if w.prior is not None:
        seen_elsewhere |= {k for k in w.prior.keys if k[0] == "feat"}
    return [oldest] + sorted(seen_by_oldest - seen_elsewhere, key=repr)


# ------------------------------------------------------- null directions

def _block_direction(value, kind: str, g_unit: np.ndarray) -> np.ndarray:
    if kind == "yaw":
        if isinstance(value, ImuState):
            out = np.zeros(IMU_DIM)
            out[S] = value.C @ g_unit
            out[V] = -np.cross(value.v, g_unit)
            out[P] = -np.cross(value.p, g_unit)
            return out
        if isinstance(value, SpPlane):
            return _plane_rotation_block(value, g_unit)
        if isinstance(value, SpEdge):
            return _edge_rotation_block(value, g_unit)
        return np.zeros(block_dim(value))
    t = np.eye(3)[NULL_DIRECTIONS.index(kind)]
    if isinstance(value, ImuState):
        out = np.zeros(IMU_DIM)
        out[P] = t
        return out
    if isinstance(value, SpPlane):
        return np.array([0.0, 0.0, -plane_normal(value.u_s) @ t])
    if isinstance(value, SpEdge):
        return _edge_translation_block(value, t)
    return np.zeros(block_dim(value))


def lift_null_direction(w: FactorGraphWindow, kind: str, values: dict | None = None) -> np.ndarray:
    """Global translation along an axis, or rotation about gravity, over every block."""
    if kind not in NULL_DIRECTIONS:
        raise InvalidArgument(f"unknown null direction {kind!r}; expected one of {NULL_DIRECTIONS}")
    if not w.stamps:
        raise InvalidArgument("window has no keyframes")
    values = w.values if values is None else values
    g_unit = w.g / np.linalg.norm(w.g)
    out = np.zeros(w.dim)
    for k, (o, d) in w.offsets().items():
        out[o:o + d] = _block_direction(values[k], kind, g_unit)
    return out


def null_directions(w: FactorGraphWindow, values: dict | None = None) -> np.ndarray:
    return np.column_stack([lift_null_direction(w, kind, values) for kind in NULL_DIRECTIONS])


def leakage_ratio(J: np.ndarray, u: np.ndarray) -> float:
    denom = np.linalg.norm(J) * np.linalg.norm(u)
    return float(np.linalg.norm(J @ u) / denom) if denom > 0 else 0.0


def window_leakage(w: FactorGraphWindow, fej: FejRegistry | None) -> float:
    """Largest leakage over the lifted directions at the linearisation points."""
    _, _, J = window_cost(w, fej)
    lin = w.lin_values(fej)
    return max(leakage_ratio(J, lift_null_direction(w, kind, lin)) for kind in NULL_DIRECTIONS)
