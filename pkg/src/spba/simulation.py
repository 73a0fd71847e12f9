"""Synthetic worlds, trajectories and sensor logs.

Ground truth is the exact zero-order-hold (ZOH) solution driven by the
noiseless sampled IMU inputs.  For trajectories whose body rate and specific
force are constant (static, circle) it coincides with the analytic motion; for
the sinusoid it differs from the analytic curve by the sampling error but stays
exactly consistent with the IMU stream, so noiseless factors vanish.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, InvalidConfig
from .estimator.types import FeatureObservation
from .kinematics import (
    GRAVITY,
    FullState,
    ImuSample,
    ImuState,
    right_jacobian,
    so3_exp,
    zoh_step,
)
from .observability import IndicatorFlags, indicator_flags
from .sp_geometry import SpEdge, SpPlane, edge_from_geometric, plane_from_geometric

CONFIG_SCHEMA_VERSION = 1
TRAJECTORY_KINDS = ("static", "circle", "sinusoid-6dof")


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0:
        raise InvalidConfig(f"cannot normalise {v}")
    return v / n


@dataclass(frozen=True)
class NoiseConfig:
    """Point variance [m^2] and continuous-time IMU densities."""

    sigma_lidar: float = 1e-4
    gyro_noise: float = 1e-3       # rad/s/sqrt(Hz)
    accel_noise: float = 1e-2      # m/s^2/sqrt(Hz)
    gyro_walk: float = 1e-5        # rad/s^2/sqrt(Hz)
    accel_walk: float = 1e-4       # m/s^3/sqrt(Hz)

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not (np.isfinite(val) and val >= 0):
                raise InvalidConfig(f"noise field {name} must be a non-negative number")

    def scaled(self, factor: float) -> "NoiseConfig":
        return NoiseConfig(*(factor * v for v in asdict(self).values()))


NOISELESS = NoiseConfig(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "sinusoid-6dof"
    amplitude: float = 0.5
    period: float = 3.0
    duration: float = 3.0
    imu_rate: float = 200.0
    lidar_rate: float = 10.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise InvalidConfig(f"unknown trajectory kind {self.kind!r}")
        if not (self.imu_rate > 0 and self.lidar_rate > 0):
            raise InvalidConfig("sensor rates must be positive")
        if not self.duration > 0:
            raise InvalidConfig("duration must be positive")
        ratio = self.imu_rate / self.lidar_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidConfig("imu_rate must be an integer multiple of lidar_rate")
        if self.kind != "static":
            if not self.period > 0:
                raise InvalidConfig("period must be positive")
            if self.duration < self.period - 1e-12:
                raise InvalidConfig("duration must cover at least one period")

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.period


@dataclass(frozen=True)
class TruthSample:
    """Analytic kinematics at one instant; ``R`` maps IMU to global."""

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray
    omega: np.ndarray
    accel: np.ndarray


# sinusoid shape: per-axis amplitude scale, frequency multiple, phase
_POS_SCALE = np.array([1.0, 0.8, 0.3])
_POS_FREQ = np.array([1.0, 2.0, 1.0])
_POS_PHASE = np.array([0.0, 0.4, 1.1])
_ROT_AMP = np.array([0.15, 0.12, 0.4])
_ROT_FREQ = np.array([2.0, 1.0, 1.0])
_ROT_PHASE = np.array([0.3, 1.3, 0.0])


def trajectory_sample(spec: TrajectorySpec, t: float, g=GRAVITY) -> TruthSample:
    g = np.asarray(g, dtype=float)
    if spec.kind == "static":
        R = so3_exp([0.05, -0.08, 0.3])
        z = np.zeros(3)
        return TruthSample(R, z.copy(), z.copy(), z.copy(), -R.T @ g)
    w = spec.omega
    if spec.kind == "circle":
        radius = spec.amplitude
        speed = w * radius
        psi = w * t
        R = so3_exp([0.0, 0.0, psi])
        v = speed * np.array([np.cos(psi), np.sin(psi), 0.0])
        p = radius * np.array([np.sin(psi), -np.cos(psi), 0.0])
        acc_world = speed * w * np.array([-np.sin(psi), np.cos(psi), 0.0])
        return TruthSample(R, v, p, np.array([0.0, 0.0, w]), R.T @ (acc_world - g))
    A = spec.amplitude * _POS_SCALE
    arg = _POS_FREQ * w * t + _POS_PHASE
    p = A * np.sin(arg)
    v = A * _POS_FREQ * w * np.cos(arg)
    acc_world = -A * (_POS_FREQ * w) ** 2 * np.sin(arg)
    rarg = _ROT_FREQ * w * t + _ROT_PHASE
    theta = _ROT_AMP * np.sin(rarg)
    theta_dot = _ROT_AMP * _ROT_FREQ * w * np.cos(rarg)
    R = so3_exp(theta)
    omega = right_jacobian(theta) @ theta_dot
    return TruthSample(R, v, p, omega, R.T @ (acc_world - g))


@dataclass(frozen=True)
class Scenario:
    name: str
    planes: tuple = ()
    edges: tuple = ()
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gravity: tuple = tuple(GRAVITY)
    seed: int = 0
    target_flags: IndicatorFlags | None = None
    points_per_scan: int = 20
    point_range: float = 2.0
    initial_bias_gyro: tuple = (0.0, 0.0, 0.0)
    initial_bias_accel: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        planes = tuple((_unit(n), float(oa)) for n, oa in self.planes)
        edges = []
        for l, m in self.edges:
            l = _unit(l)
            m = np.asarray(m, dtype=float).reshape(3)
            if abs(l @ m) > 1e-9 * max(1.0, np.linalg.norm(m)):
                raise InvalidConfig(f"edge moment {m} not orthogonal to direction {l}")
            edges.append((l, m))
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "edges", tuple(edges))
        if not planes and not edges:
            raise InvalidConfig("scenario has no features: the (0, 0) cell is not defined")
        if self.points_per_scan < 1:
            raise InvalidConfig("points_per_scan must be positive")
        if not self.point_range > 0:
            raise InvalidConfig("point_range must be positive")

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)

    def feature_ids(self) -> list[str]:
        return [f"edge{k}" for k in range(len(self.edges))] + [f"plane{k}" for k in range(len(self.planes))]

    def sp_edges(self) -> list[SpEdge]:
        out = []
        for l, m in self.edges:
            if l[2] > 0:
                l, m = -l, -m
            out.append(edge_from_geometric(l, m))
        return out

    def sp_planes(self) -> list[SpPlane]:
        out = []
        for n, oa in self.planes:
            if n[2] > 0:
                n, oa = -n, -oa
            out.append(plane_from_geometric(n, oa))
        return out

    def sp_features(self) -> dict:
        feats = {f"edge{k}": e for k, e in enumerate(self.sp_edges())}
        feats.update({f"plane{k}": pl for k, pl in enumerate(self.sp_planes())})
        return feats

    def full_state(self, imu: ImuState | None = None) -> FullState:
        return FullState(imu if imu is not None else ImuState(), self.sp_edges(), self.sp_planes())

    def realized_flags(self) -> IndicatorFlags:
        return indicator_flags(self.full_state(), self.g)

    def with_noise(self, noise: NoiseConfig) -> "Scenario":
        return replace(self, noise=noise)

    # ------------------------------------------------------------ config io

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "planes": [{"normal": n.tolist(), "offset": oa} for n, oa in self.planes],
            "edges": [{"direction": l.tolist(), "moment": m.tolist()} for l, m in self.edges],
            "trajectory": asdict(self.trajectory),
            "noise": asdict(self.noise),
            "gravity": list(self.gravity),
            "seed": self.seed,
            "target_flags": None if self.target_flags is None else asdict(self.target_flags),
            "points_per_scan": self.points_per_scan,
            "point_range": self.point_range,
            "initial_bias_gyro": list(self.initial_bias_gyro),
            "initial_bias_accel": list(self.initial_bias_accel),
        }


@dataclass
class Scan:
    index: int
    t: float
    imu_index: int
    truth: ImuState
    observations: list[FeatureObservation]


@dataclass
class MeasurementLog:
    scenario: Scenario
    imu: list[ImuSample]
    scans: list[Scan]
    truth_times: np.ndarray
    truth: list[ImuState]

    def samples_between(self, t0: float, t1: float) -> list[ImuSample]:
        """IMU samples held over ``[t0, t1)``."""
        return [smp for smp in self.imu if t0 - 1e-12 <= smp.t < t1 - 1e-12]


# ------------------------------------------------------------------ presets

_X, _Y, _Z = np.eye(3)
_OBLIQUE = _unit([1.0, 1.0, 1.0])
_LEVEL = _unit([1.0, 1.0, 0.0])
_FLOOR = (_Z, 1.5)
_CEILING = (_Z, -2.5)
_WALL_X = (_X, 2.0)
_WALL_Y = (_Y, 3.0)


def _line(direction, point):
    l = _unit(direction)
    return l, np.cross(np.asarray(point, float), l)


_OBLIQUE_EDGE = _line(_OBLIQUE, [0.0, 1.0, 2.0])
_CORNER_EDGE = _line(_Z, [-2.0, -3.0, 0.0])
_JUNCTION_EDGE = _line(_Y, [-2.0, 0.0, -1.5])

# name -> (planes, edges, (rS, rE, D1, D2, D3))
PRESETS: dict[str, tuple] = {
    "ground-plane-only": ([_FLOOR], [], (1, 0, True, False, False)),
    "floor-and-ceiling": ([_FLOOR, _CEILING], [], (1, 0, True, False, False)),
    "single-wall": ([_WALL_X], [], (1, 0, False, False, False)),
    "two-walls": ([_WALL_X, _WALL_Y], [], (2, 0, False, False, False)),
    "ground-and-wall": ([_FLOOR, _WALL_X], [], (2, 0, True, False, False)),
    "room": ([_FLOOR, _WALL_X, _WALL_Y], [], (3, 0, True, False, False)),
    "vertical-edge": ([], [_line(_Z, [1.0, 2.0, 0.0])], (0, 1, False, False, True)),
    "horizontal-edge": ([], [_line(_X, [0.0, 2.0, 1.0])], (0, 1, False, True, True)),
    "parallel-horizontal-edges": (
        [], [_line(_X, [0.0, 2.0, 1.0]), _line(_X, [0.0, -1.0, 3.0])], (0, 1, False, True, True)),
    "wall-oblique-edge": ([_WALL_X], [_OBLIQUE_EDGE], (1, 1, False, False, False)),
    "wall-level-edge": ([_WALL_X], [_line(_LEVEL, [0.0, 1.0, 2.0])], (1, 1, False, True, False)),
    "wall-in-plane-edge": ([_WALL_X], [_line([0.0, 1.0, 1.0], [-2.0, 1.0, 2.0])], (1, 1, False, False, True)),
    "wall-horizontal-edge": ([_WALL_X], [_line(_Y, [-2.0, 0.0, 2.0])], (1, 1, False, True, True)),
    "ground-vertical-edge": ([_FLOOR], [_line(_Z, [1.0, 2.0, 0.0])], (1, 1, True, False, False)),
    "ground-horizontal-edge": ([_FLOOR], [_line(_X, [0.0, 1.0, -1.5])], (1, 1, True, True, True)),
    "two-walls-oblique-edge": ([_WALL_X, _WALL_Y], [_OBLIQUE_EDGE], (2, 1, False, False, False)),
    "wall-corner": ([_WALL_X, _WALL_Y], [_CORNER_EDGE], (2, 1, False, False, True)),
    "corridor": ([_FLOOR, _WALL_X], [_JUNCTION_EDGE], (2, 1, True, True, True)),
    "room-with-edge": ([_FLOOR, _WALL_X, _WALL_Y], [_OBLIQUE_EDGE], (3, 1, True, False, False)),
    "two-edges": ([], [_line(_Z, [1.0, 2.0, 0.0]), _line(_X, [0.0, 2.0, 1.0])], (0, 2, False, False, True)),
    "ground-two-edges": (
        [_FLOOR], [_line(_Z, [1.0, 2.0, 0.0]), _line(_X, [0.0, 2.0, 1.0])], (1, 2, True, False, False)),
    "two-walls-two-edges": (
        [_WALL_X, _WALL_Y], [_line(_Z, [1.0, 2.0, 0.0]), _line(_X, [0.0, 2.0, 1.0])], (2, 2, False, False, True)),
    "room-two-edges": ([_FLOOR, _WALL_X, _WALL_Y], [_CORNER_EDGE, _JUNCTION_EDGE], (3, 2, True, False, False)),
    # pathology presets for the singular baselines
    "origin-edges-3": ([], [_line(_Z, np.zeros(3)), _line(_X, np.zeros(3)), _line(_Y, np.zeros(3))],
                       (0, 3, False, False, True)),
    "near-zero-ground": ([(_Z, 1e-6)], [], (1, 0, True, False, False)),
}

# Remaining realisable indicator cells, built from axis-aligned and oblique
# directions: (rS, rE, D1, D2, D3) -> (plane normals, edge directions).
_CELL_DIRS = {"X": _X, "Y": _Y, "Z": _Z, "O": _OBLIQUE}
_CELL_OFFSETS = {"X": 2.0, "Y": 3.0, "Z": 1.5}
_CELL_POINTS = ([0.5, 1.0, 2.0], [-1.0, 2.5, 0.5], [2.0, -1.5, 1.0])
_CELLS = {
    (0, 2, False, True, True): ("", "XY"),
    (0, 3, False, False, True): ("", "ZXY"),
    (0, 3, False, True, True): ("", "XYZ"),
    (1, 2, False, False, False): ("X", "OX"),
    (1, 2, False, False, True): ("X", "ZX"),
    (1, 2, False, True, False): ("X", "XY"),
    (1, 2, False, True, True): ("X", "YX"),
    (1, 2, True, True, True): ("Z", "XY"),
    (1, 3, False, False, False): ("X", "OXY"),
    (1, 3, False, False, True): ("X", "ZXY"),
    (1, 3, False, True, False): ("X", "XYZ"),
    (1, 3, False, True, True): ("X", "YXZ"),
    (1, 3, True, False, False): ("Z", "ZXY"),
    (1, 3, True, True, True): ("Z", "XYZ"),
    (2, 1, False, True, False): ("XY", "X"),
    (2, 1, True, False, False): ("XZ", "Z"),
    (2, 1, True, True, False): ("XZ", "X"),
    (2, 2, False, False, False): ("XY", "OX"),
    (2, 2, False, True, False): ("XY", "XY"),
    (2, 2, True, False, False): ("XZ", "ZX"),
    (2, 2, True, True, False): ("XZ", "XY"),
    (2, 2, True, True, True): ("XZ", "YX"),
    (2, 3, False, False, False): ("XY", "OXY"),
    (2, 3, False, False, True): ("XY", "ZXY"),
    (2, 3, False, True, False): ("XY", "XYZ"),
    (2, 3, True, False, False): ("XZ", "ZXY"),
    (2, 3, True, True, False): ("XZ", "XYZ"),
    (2, 3, True, True, True): ("XZ", "YXZ"),
    (3, 1, True, True, False): ("XYZ", "X"),
    (3, 2, True, True, False): ("XYZ", "XY"),
    (3, 3, True, False, False): ("XYZ", "ZXY"),
    (3, 3, True, True, False): ("XYZ", "XYZ"),
}


def _cell_name(cell) -> str:
    rS, rE, *flags = cell
    return f"cell-s{rS}-e{rE}" + "".join(f"-d{i + 1}" for i, on in enumerate(flags) if on)


for _cell, (_normals, _dirs) in _CELLS.items():
    PRESETS[_cell_name(_cell)] = (
        [(_CELL_DIRS[c], _CELL_OFFSETS[c]) for c in _normals],
        [_line(_CELL_DIRS[c], pt) for c, pt in zip(_dirs, _CELL_POINTS)],
        _cell,
    )

PATHOLOGY_PRESETS = ("origin-edges-3", "near-zero-ground")
TABLE_PRESETS = tuple(name for name in PRESETS if name not in PATHOLOGY_PRESETS)


def _flags_tuple(flags: IndicatorFlags) -> tuple:
    return (flags.rS, flags.rE, flags.D1, flags.D2, flags.D3)


def check_flag_combination(flags: IndicatorFlags) -> None:
    """Reject indicator combinations no geometry can realise."""
    rS, rE, D1, D2, D3 = _flags_tuple(flags)
    if rS == 0 and rE == 0:
        raise InvalidConfig("the (rS, rE) = (0, 0) cell has no features")
    if rS == 0 and D1:
        raise InvalidConfig("D1 needs at least one plane")
    if rE == 0 and (D2 or D3):
        raise InvalidConfig("D2 and D3 need at least one edge")
    if rS == 3 and not D1:
        raise InvalidConfig("three independent normals always span gravity")
    if rS == 3 and D3:
        raise InvalidConfig("no direction is orthogonal to three independent normals")
    if rS == 0 and rE >= 1 and not D3:
        raise InvalidConfig("D3 holds vacuously without planes")
    if rS == 1 and rE >= 1 and D1 and D2 != D3:
        raise InvalidConfig("with the only normal along gravity, D2 and D3 coincide")
    if rS == 2 and rE >= 1 and D3 and D1 != D2:
        raise InvalidConfig("an edge along the normals' intersection is level exactly when D1 holds")
    if not (0 <= rS <= 3 and 0 <= rE <= 3):
        raise InvalidConfig("ranks must lie in [0, 3]")


def generate_scenario(preset: str | dict, seed: int | None = None, **overrides) -> Scenario:
    """Build a scenario from a preset name or a config dict.

    Config dicts may name a ``preset`` and override individual fields.
    """
    if isinstance(preset, str):
        cfg = {"preset": preset}
    elif isinstance(preset, dict):
        cfg = dict(preset)
    else:
        raise InvalidConfig(f"expected preset name or dict, got {type(preset).__name__}")
    cfg.update(overrides)
    if seed is not None:
        cfg["seed"] = seed
    return scenario_from_dict(cfg)


def scenario_from_dict(cfg: dict) -> Scenario:
    cfg = dict(cfg)
    known = {
        "preset", "name", "planes", "edges", "trajectory", "noise", "gravity", "seed", "target_flags",
        "points_per_scan", "point_range", "initial_bias_gyro", "initial_bias_accel",
    }
    unknown = set(cfg) - known
    if unknown:
        raise InvalidConfig(f"unknown scenario fields {sorted(unknown)}")
    base: dict = {}
    if "preset" in cfg:
        name = cfg.pop("preset")
        if name not in PRESETS:
            raise InvalidConfig(f"unknown preset {name!r}")
        planes, edges, target = PRESETS[name]
        base = {"name": name, "planes": planes, "edges": edges, "target_flags": IndicatorFlags(*target)}
    try:
        if "planes" in cfg:
            cfg["planes"] = [(d["normal"], d["offset"]) for d in cfg["planes"]]
        if "edges" in cfg:
            edges = []
            for d in cfg["edges"]:
                if "moment" in d:
                    edges.append((d["direction"], d["moment"]))
                else:
                    edges.append(_line(d["direction"], d["point"]))
            cfg["edges"] = edges
        if "trajectory" in cfg:
            cfg["trajectory"] = TrajectorySpec(**cfg["trajectory"])
        if "noise" in cfg:
            cfg["noise"] = NoiseConfig(**cfg["noise"])
        if cfg.get("target_flags") is not None and not isinstance(cfg["target_flags"], IndicatorFlags):
            cfg["target_flags"] = IndicatorFlags(**cfg["target_flags"])
        if "gravity" in cfg:
            cfg["gravity"] = tuple(float(v) for v in cfg["gravity"])
        base.update(cfg)
        if "name" not in base:
            raise InvalidConfig("scenario needs a name or preset")
        scenario = Scenario(**base)
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"malformed scenario config: {exc}") from exc
    target = scenario.target_flags
    if target is not None:
        check_flag_combination(target)
        realized = scenario.realized_flags()
        if _flags_tuple(realized) != _flags_tuple(target):
            raise InvalidConfig(
                f"scenario {scenario.name!r} realises flags {_flags_tuple(realized)}, "
                f"target was {_flags_tuple(target)}"
            )
    return scenario


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidConfig("config root must be an object")
    version = cfg.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise InvalidConfig(f"unsupported config schema_version {version!r}")
    return cfg


def scenarios_from_config(cfg: dict) -> list[Scenario]:
    entries = cfg.get("scenarios")
    if not isinstance(entries, list) or not entries:
        raise InvalidConfig("config needs a non-empty 'scenarios' list")
    return [scenario_from_dict(e if isinstance(e, dict) else {"preset": e}) for e in entries]


# ------------------------------------------------------------- measurements

def _truth_state(smp: TruthSample, b_g, b_a) -> ImuState:
    return ImuState(smp.R.T.copy(), b_g.copy(), smp.v.copy(), b_a.copy(), smp.p.copy())


def _plane_points(n, oa, p, rng, count, extent):
    # foot of the sensor on the plane plus in-plane offsets
    foot = p - (n @ p + oa) * n
    t1 = np.cross(n, _X if abs(n[0]) < 0.9 else _Y)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    ab = rng.uniform(-extent, extent, size=(count, 2))
    return foot + ab[:, :1] * t1 + ab[:, 1:] * t2


def _edge_points(l, m, p, rng, count, extent):
    closest = np.cross(l, m)
    foot = closest + ((p - closest) @ l) * l
    return foot + rng.uniform(-extent, extent, size=(count, 1)) * l


def synth_measurements(s: Scenario, until: float | None = None) -> MeasurementLog:
    """Sample the IMU at ``imu_rate`` and scan every feature at ``lidar_rate``.

    ``until`` truncates the log (never beyond the trajectory duration); the
    samples that are produced do not depend on it.
    """
    traj = s.trajectory
    g = s.g
    # separate streams keep every prefix of the log independent of ``until``
    rng, scan_rng = (np.random.default_rng(c) for c in np.random.SeedSequence(s.seed).spawn(2))
    dt = 1.0 / traj.imu_rate
    horizon = traj.duration if until is None else min(float(until), traj.duration)
    if not horizon >= 0:
        raise InvalidArgument("log horizon must be non-negative")
    steps = int(round(horizon * traj.imu_rate))
    stride = int(round(traj.imu_rate / traj.lidar_rate))
    noise = s.noise
    sg = noise.gyro_noise / np.sqrt(dt)
    sa = noise.accel_noise / np.sqrt(dt)
    wg = noise.gyro_walk * np.sqrt(dt)
    wa = noise.accel_walk * np.sqrt(dt)

    first = trajectory_sample(traj, 0.0, g)
    b_g = np.asarray(s.initial_bias_gyro, dtype=float)
    b_a = np.asarray(s.initial_bias_accel, dtype=float)
    R, v, p = first.R, first.v, first.p
    times = dt * np.arange(steps + 1)
    truth = [_truth_state(first, b_g, b_a)]
    imu = []
    for k in range(steps):
        ref = trajectory_sample(traj, times[k], g)
        omega, accel = ref.omega, ref.accel
        omega_m = omega + b_g + sg * rng.standard_normal(3)
        accel_m = accel + b_a + sa * rng.standard_normal(3)
        imu.append(ImuSample(times[k], omega_m, accel_m))
        R, v, p = zoh_step(R, v, p, omega, accel, g, dt)
        b_g = b_g + wg * rng.standard_normal(3)
        b_a = b_a + wa * rng.standard_normal(3)
        truth.append(ImuState(R.T.copy(), b_g.copy(), v.copy(), b_a.copy(), p.copy()))

    scans = []
    sigma = np.sqrt(noise.sigma_lidar)
    rng = scan_rng
    for j, k in enumerate(range(0, steps + 1, stride)):
        state = truth[k]
        obs = []
        for idx, (n, oa) in enumerate(s.planes):
            pts = _plane_points(n, oa, state.p, rng, s.points_per_scan, s.point_range)
            obs += _observe(state, pts, f"plane{idx}", "plane", j, sigma, rng)
        for idx, (l, m) in enumerate(s.edges):
            pts = _edge_points(l, m, state.p, rng, s.points_per_scan, s.point_range)
            obs += _observe(state, pts, f"edge{idx}", "edge", j, sigma, rng)
        scans.append(Scan(j, times[k], k, state, obs))
    return MeasurementLog(s, imu, scans, times, truth)


def _observe(state: ImuState, world_pts, fid, kind, scan_id, sigma, rng):
    local = (world_pts - state.p) @ state.C.T
    if sigma > 0:
        local = local + sigma * rng.standard_normal(local.shape)
    return [FeatureObservation(scan_id, fid, kind, q) for q in local]
