import itertools
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from spba.errors import InvalidArgument, InvalidConfig
from spba.observability import IndicatorFlags
from spba.estimator import edge_residual, plane_residual
from spba.simulation import (
    NOISELESS,
    PRESETS,
    TABLE_PRESETS,
    TrajectorySpec,
    check_flag_combination,
    generate_scenario,
    load_config,
    scenario_from_dict,
    scenarios_from_config,
    synth_measurements,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _short(name, **kw):
    traj = TrajectorySpec(duration=2.0, period=2.0)
    return replace(generate_scenario(name), trajectory=traj, **kw)


def test_preset_examples():
    f = generate_scenario("ground-plane-only").realized_flags()
    assert (f.rS, f.rE, f.D1) == (1, 0, True)
    s = generate_scenario("origin-edges-3")
    assert len(s.edges) == 3 and not s.planes
    assert all(np.allclose(m, 0) for _, m in s.edges)
    assert np.linalg.matrix_rank(np.array([l for l, _ in s.edges])) == 3
    f = generate_scenario("corridor").realized_flags()
    assert (f.rS, f.rE, f.D3) == (2, 1, True)


def test_table_presets_cover_every_realisable_cell():
    allowed = set()
    for cell in itertools.product(range(4), range(4), *[(False, True)] * 3):
        try:
            check_flag_combination(IndicatorFlags(*cell))
        except InvalidConfig:
            continue
        allowed.add(cell)
    cells = {tuple(vars(generate_scenario(n).realized_flags()).values()) for n in TABLE_PRESETS}
    assert len(TABLE_PRESETS) >= 14
    assert cells == allowed


@pytest.mark.parametrize("cell", [(1, 1, True, False, True), (1, 2, True, True, False),
                                  (2, 1, False, True, True), (2, 3, True, False, True)])
def test_geometrically_impossible_cells_rejected(cell):
    with pytest.raises(InvalidConfig):
        check_flag_combination(IndicatorFlags(*cell))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_realise_target_flags(name):
    s = generate_scenario(name)
    assert s.realized_flags() == s.target_flags


@pytest.mark.parametrize("name", ["room-two-edges", "wall-oblique-edge", "floor-and-ceiling"])
def test_noiseless_residuals_vanish(name):
    s = _short(name, noise=NOISELESS)
    log = synth_measurements(s)
    feats = s.sp_features()
    worst = 0.0
    for scan in log.scans:
        for ob in scan.observations:
            fn = plane_residual if ob.kind == "plane" else edge_residual
            worst = max(worst, np.abs(fn(scan.truth, ob.point, feats[ob.feature_id], jacobians=False)).max())
    assert worst <= 1e-10


def test_static_imu_samples():
    s = replace(generate_scenario("room"), noise=NOISELESS,
                trajectory=TrajectorySpec(kind="static", duration=1.0, period=1.0))
    log = synth_measurements(s)
    C = log.truth[0].C
    for smp in log.imu:
        assert np.array_equal(smp.omega, np.zeros(3))
        assert np.allclose(smp.a, -C @ s.g, atol=1e-12)


def test_point_counts_and_rates():
    s = _short("two-walls-two-edges", points_per_scan=7)
    log = synth_measurements(s)
    traj = s.trajectory
    assert len(log.imu) == traj.duration * traj.imu_rate
    assert len(log.scans) == traj.duration * traj.lidar_rate + 1
    for scan in log.scans:
        ids = [ob.feature_id for ob in scan.observations]
        assert all(ids.count(f) == 7 for f in s.feature_ids())


def test_noise_statistics():
    s = _short("single-wall", points_per_scan=200)
    log = synth_measurements(s)
    pl = s.sp_planes()[0]
    r = np.concatenate([plane_residual(sc.truth, np.array([o.point for o in sc.observations]), pl,
                                       jacobians=False) for sc in log.scans])
    assert np.var(r) == pytest.approx(s.noise.sigma_lidar, rel=0.1)


def test_deterministic_logs():
    s = _short("ground-two-edges")
    a, b = synth_measurements(s), synth_measurements(s)
    assert all(np.array_equal(x.a, y.a) and np.array_equal(x.omega, y.omega) for x, y in zip(a.imu, b.imu))
    pts = lambda log: np.array([o.point for sc in log.scans for o in sc.observations])
    assert np.array_equal(pts(a), pts(b))
    c = synth_measurements(replace(s, seed=1))
    assert not np.array_equal(pts(a), pts(c))


def test_truncated_log_is_prefix():
    s = _short("room-two-edges")
    full, part = synth_measurements(s), synth_measurements(s, until=0.8)
    assert len(part.scans) == 9
    for a, b in zip(part.scans, full.scans):
        assert np.array_equal([o.point for o in a.observations], [o.point for o in b.observations])
    assert all(np.array_equal(x.a, y.a) for x, y in zip(part.imu, full.imu))
    with pytest.raises(InvalidArgument):
        synth_measurements(s, until=-1.0)


@pytest.mark.parametrize("cfg", [
    {"preset": "room", "colour": "red"},
    {"name": "empty"},
    {"preset": "nowhere"},
    {"preset": "room", "target_flags": {"rS": 0, "rE": 1, "D1": True, "D2": False, "D3": True}},
    {"preset": "room", "target_flags": {"rS": 2, "rE": 0, "D1": True, "D2": False, "D3": False}},
    {"name": "bad-edge", "edges": [{"direction": [1, 0, 0], "moment": [1, 0, 0]}]},
    {"name": "bad-trajectory", "planes": [{"normal": [0, 0, 1], "offset": 1}], "trajectory": {"speed": 2}},
])
def test_config_errors(cfg):
    with pytest.raises(InvalidConfig):
        scenario_from_dict(cfg)


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidConfig):
        load_config(bad)
    bad.write_text(json.dumps({"schema_version": 2, "scenarios": ["room"]}))
    with pytest.raises(InvalidConfig):
        load_config(bad)
    with pytest.raises(InvalidConfig):
        load_config(tmp_path / "missing.json")
    with pytest.raises(InvalidConfig):
        scenarios_from_config({"schema_version": 1, "scenarios": []})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_golden_configs_reproduce_presets(name):
    (s,) = scenarios_from_config(load_config(CONFIGS / "presets" / f"{name}.json"))
    ref = generate_scenario(name)
    assert json.dumps(s.to_dict(), sort_keys=True) == json.dumps(ref.to_dict(), sort_keys=True)


def test_dict_round_trip():
    s = generate_scenario("corridor", seed=5, points_per_scan=3)
    again = scenario_from_dict(s.to_dict())
    assert again.to_dict() == s.to_dict()
