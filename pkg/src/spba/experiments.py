"""Estimator runs on synthetic logs: window construction, sliding and statistics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidConfig
from .estimator.graph import (
    FactorGraphWindow,
    FejRegistry,
    kf_key,
    lm_solve,
    marginalize,
    oldest_drop_set,
    window_cost,
    window_leakage,
)
from .estimator.manifold import local, retract
from .estimator.preintegration import preintegrate
from .estimator.types import ImuNoise, NoiseModel, SolverConfig
from .kinematics import IMU_DIM, P, S, ImuState, so3_exp
from .simulation import MeasurementLog, Scenario, synth_measurements

REPORT_SCHEMA_VERSION = 1

# light windows keep 50-run batches quick; one slide already yields a
# marginalised-then-extended window
DEFAULT_MONTE_CARLO = {
    "schema_version": 1,
    "scenarios": [{"preset": "room-two-edges", "points_per_scan": 5}],
    "estimator": {"window_size": 4, "slides": 1, "anchor": False},
}


@dataclass(frozen=True)
class EstimatorConfig:
    window_size: int = 10
    keyframe_stride: int = 3
    slides: int = 0
    perturb_rot_deg: float = 1.0
    perturb_pos: float = 0.05
    perturb_u: float = 0.0
    perturb_offset: float = 0.0
    anchor: bool = True
    fej: bool = True
    freeze_all_involved: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.window_size < 2:
            raise InvalidConfig("window_size must be at least 2")
        if self.keyframe_stride < 3:
            raise InvalidConfig("keyframes are taken at most once every three scans")
        if self.slides < 0:
            raise InvalidConfig("slides must be non-negative")

    @classmethod
    def from_dict(cls, cfg: dict) -> "EstimatorConfig":
        cfg = dict(cfg)
        try:
            if "solver" in cfg:
                cfg["solver"] = SolverConfig(**cfg["solver"])
            return cls(**cfg)
        except TypeError as exc:
            raise InvalidConfig(f"malformed estimator config: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


def noise_model_for(s: Scenario) -> NoiseModel:
    """Weights matching the simulated noise (defaults when the log is noiseless)."""
    n = s.noise
    d = ImuNoise()
    imu = ImuNoise(n.gyro_noise or d.gyro_noise, n.accel_noise or d.accel_noise,
                   n.gyro_walk or d.gyro_walk, n.accel_walk or d.accel_walk)
    return NoiseModel(sigma=n.sigma_lidar or NoiseModel.sigma, imu=imu, anchor_rot=1e-2, anchor_pos=1e-2)


def _perturbed_state(truth: ImuState, cfg: EstimatorConfig, rng) -> ImuState:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    shift = rng.standard_normal(3)
    shift /= np.linalg.norm(shift)
    delta = np.zeros(IMU_DIM)
    delta[S] = np.deg2rad(cfg.perturb_rot_deg) * axis
    delta[P] = cfg.perturb_pos * shift
    out = retract(truth, delta)
    out.b_g = np.zeros(3)
    out.b_a = np.zeros(3)
    return out


def _perturbed_feature(feature, cfg: EstimatorConfig, rng):
    delta = np.zeros(feature.as_vector().size)
    delta[:2] = cfg.perturb_u * rng.standard_normal(2)
    delta[2:] = cfg.perturb_offset * rng.standard_normal(delta.size - 2)
    return retract(feature, delta)


def _group_points(scan) -> dict:
    groups: dict = {}
    for obs in scan.observations:
        groups.setdefault(obs.feature_id, []).append(obs.point)
    return {fid: np.array(pts) for fid, pts in groups.items()}


def _add_scan(w: FactorGraphWindow, log: MeasurementLog, scan_idx: int, state: ImuState,
              prev: int | None) -> None:
    scan = log.scans[scan_idx]
    w.add_keyframe(scan_idx, scan.t, state)
    for fid, pts in _group_points(scan).items():
        w.add_points(scan_idx, fid, pts)
    if prev is not None:
        t0 = log.scans[prev].t
        prev_state = w.values[kf_key(prev)]
        pre = preintegrate(log.samples_between(t0, scan.t), t0, scan.t, w.noise.imu,
                           prev_state.b_g, prev_state.b_a)
        w.add_imu(prev, scan_idx, pre)


def _predict(w: FactorGraphWindow, log: MeasurementLog, prev: int, scan_idx: int) -> ImuState:
    x = w.values[kf_key(prev)]
    t0, t1 = log.scans[prev].t, log.scans[scan_idx].t
    pre = preintegrate(log.samples_between(t0, t1), t0, t1, w.noise.imu, x.b_g, x.b_a)
    R = x.C.T
    T = pre.dt
    g = w.g
    return ImuState((R @ pre.dR).T, x.b_g, x.v + g * T + R @ pre.dv, x.b_a,
                    x.p + x.v * T + 0.5 * g * T * T + R @ pre.dp)


def build_window(log: MeasurementLog, scans: list[int], cfg: EstimatorConfig, rng,
                 noise: NoiseModel | None = None) -> FactorGraphWindow:
    """Window over the given scan indices, initialised at perturbed ground truth."""
    s = log.scenario
    w = FactorGraphWindow(noise=noise or noise_model_for(s), g=s.g, size=cfg.window_size)
    for fid, feature in s.sp_features().items():
        w.add_feature(fid, _perturbed_feature(feature, cfg, rng))
    prev = None
    for idx in scans:
        _add_scan(w, log, idx, _perturbed_state(log.scans[idx].truth, cfg, rng), prev)
        prev = idx
    if cfg.anchor:
        w.add_anchor(scans[0], log.scans[scans[0]].truth)
    return w


def truth_values(log: MeasurementLog, w: FactorGraphWindow) -> dict:
    feats = log.scenario.sp_features()
    out = {}
    for k in w.values:
        out[k] = log.scans[k[1]].truth if k[0] == "kf" else feats[k[1]]
    return out


def position_rmse(w: FactorGraphWindow, truth: dict) -> float:
    errs = [w.values[kf_key(i)].p - truth[kf_key(i)].p for i in w.keyframe_ids]
    return float(np.sqrt(np.mean(np.sum(np.square(errs), axis=1))))


def attitude_rmse_deg(w: FactorGraphWindow, truth: dict) -> float:
    errs = [np.linalg.norm(local(w.values[kf_key(i)], truth[kf_key(i)])[S]) for i in w.keyframe_ids]
    return float(np.rad2deg(np.sqrt(np.mean(np.square(errs)))))


def aligned_position_rmse(w: FactorGraphWindow, truth: dict) -> float:
    """Position RMSE after the best yaw-plus-translation alignment (gravity along z)."""
    est = np.array([w.values[kf_key(i)].p for i in w.keyframe_ids])
    ref = np.array([truth[kf_key(i)].p for i in w.keyframe_ids])
    ce, cr = est.mean(axis=0), ref.mean(axis=0)
    a, b = est - ce, ref - cr
    yaw = np.arctan2(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]), np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]))
    Rz = so3_exp([0.0, 0.0, yaw])
    aligned = a @ Rz.T + cr
    return float(np.sqrt(np.mean(np.sum((aligned - ref) ** 2, axis=1))))


def window_nees(w: FactorGraphWindow, fej: FejRegistry | None, truth: dict) -> float:
    """``e^T H e / rank(H)`` over the whole window, with ``H`` at the linearisation points."""
    _, _, J = window_cost(w, fej)
    H = J.T @ J
    offs = w.offsets()
    e = np.zeros(w.dim)
    for k, (o, d) in offs.items():
        e[o:o + d] = local(w.values[k], truth[k])
    rank = np.linalg.matrix_rank(H, tol=1e-9 * np.linalg.norm(H, 2))
    return float(e @ H @ e / max(rank, 1))


@dataclass
class RunResult:
    seed: int
    parameterization: str
    fej: bool
    success: bool
    costs: list
    initial_position_rmse: float
    position_rmse: float
    aligned_position_rmse: float
    attitude_rmse_deg: float
    nees: list
    leakage: list
    reasons: list

    def to_dict(self) -> dict:
        return asdict(self)


def run_estimator(scenario: Scenario, cfg: EstimatorConfig, seed: int) -> RunResult:
    """One seeded run: initial window, LM, then ``cfg.slides`` marginalise-and-extend steps."""
    rng = np.random.default_rng(seed)
    stride = cfg.keyframe_stride
    needed = cfg.window_size + cfg.slides
    horizon = (needed - 1) * stride / scenario.trajectory.lidar_rate
    log = synth_measurements(replace(scenario, seed=seed), until=horizon)
    scan_ids = list(range(0, len(log.scans), stride))[:needed]
    if len(scan_ids) < needed:
        raise InvalidConfig(f"trajectory yields {len(scan_ids)} keyframes, run needs {needed}")
    first = scan_ids[:cfg.window_size]
    w = build_window(log, first, cfg, rng)
    fej = FejRegistry()
    fej_arg = fej if cfg.fej else None
    truth = truth_values(log, w)
    init_rmse = position_rmse(w, truth)
    report = lm_solve(w, fej_arg, cfg.solver)
    costs = [list(report.costs)]
    reasons = [report.reason]
    success = report.success
    nees = [window_nees(w, fej_arg, truth)]
    leakage = []
    for idx in scan_ids[cfg.window_size:]:
        drop = oldest_drop_set(w)
        marginalize(w, fej, drop, use_fej=cfg.fej, freeze_all_involved=cfg.freeze_all_involved)
        prev = w.keyframe_ids[-1]
        _add_scan(w, log, idx, _predict(w, log, prev, idx), prev)
        report = lm_solve(w, fej_arg, cfg.solver)
        costs.append(list(report.costs))
        reasons.append(report.reason)
        success = success and report.success
        truth = truth_values(log, w)
        nees.append(window_nees(w, fej_arg, truth))
        leakage.append(window_leakage(w, fej_arg))
    return RunResult(
        seed=seed,
        parameterization="sp",
        fej=cfg.fej,
        success=success,
        costs=costs,
        initial_position_rmse=init_rmse,
        position_rmse=position_rmse(w, truth),
        aligned_position_rmse=aligned_position_rmse(w, truth),
        attitude_rmse_deg=attitude_rmse_deg(w, truth),
        nees=nees,
        leakage=leakage,
        reasons=reasons,
    )


def _median(values) -> float | None:
    vals = [v for v in values if v is not None and np.isfinite(v)]
    return float(np.median(vals)) if vals else None


def monte_carlo(scenario: Scenario, cfg: EstimatorConfig, runs: int, seed: int = 0,
                jobs: int = 1) -> dict:
    """Independent seeded runs and their aggregate statistics."""
    if runs < 1:
        raise InvalidConfig("runs must be at least 1")
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(runs)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_run, [scenario] * runs, [cfg] * runs, seeds))
    else:
        results = [_safe_run(scenario, cfg, s) for s in seeds]
    ok = [r for r in results if isinstance(r, RunResult) and r.success]
    final_leak = [r.leakage[-1] if r.leakage else None for r in ok]
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": scenario.name,
        "parameterization": "sp",
        "fej": cfg.fej,
        "seed": seed,
        "runs": runs,
        "failed_runs": runs - len(ok),
        "estimator": cfg.to_dict(),
        "aggregate": {
            "median_leakage": _median(final_leak),
            "max_leakage": max((v for v in final_leak if v is not None), default=None),
            "median_position_rmse": _median([r.position_rmse for r in ok]),
            "median_aligned_position_rmse": _median([r.aligned_position_rmse for r in ok]),
            "median_attitude_rmse_deg": _median([r.attitude_rmse_deg for r in ok]),
            "median_final_nees": _median([r.nees[-1] for r in ok]),
        },
        "runs_detail": [r.to_dict() if isinstance(r, RunResult) else r for r in results],
    }


def _safe_run(scenario: Scenario, cfg: EstimatorConfig, seed: int):
    try:
        return run_estimator(scenario, cfg, seed)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return {"seed": seed, "success": False, "error": str(exc)}
