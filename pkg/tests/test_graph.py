import numpy as np
import pytest

from spba.errors import InternalInvariantViolation, InvalidArgument
from spba.estimator import (
    NULL_DIRECTIONS,
    FactorGraphWindow,
    FejRegistry,
    LinearFactor,
    kf_key,
    leakage_ratio,
    lift_null_direction,
    lm_solve,
    marginalize,
    oldest_drop_set,
    window_cost,
)
from spba.estimator.graph import _sync_charts
from spba.estimator.manifold import local, retract
from spba.experiments import EstimatorConfig, build_window, truth_values
from spba.observability import numeric_nullspace
from spba.simulation import NOISELESS, generate_scenario, synth_measurements
from spba.sp_geometry import SpEdge, SpPlane, chart_flip

EXACT = EstimatorConfig(window_size=4, perturb_rot_deg=0.0, perturb_pos=0.0, anchor=False)


def _log(noise=None, seed=0):
    s = generate_scenario("room-two-edges", seed=seed, points_per_scan=5)
    if noise is not None:
        s = s.with_noise(noise)
    return synth_measurements(s, until=1.5)


def _window(cfg=EXACT, noise=NOISELESS, seed=0, count=None):
    log = _log(noise, seed)
    count = count or cfg.window_size
    return build_window(log, list(range(0, 3 * count, 3)), cfg, np.random.default_rng(seed)), log


def _shifted(w, direction, h):
    out = dict(w.values)
    for k, (o, d) in w.offsets().items():
        out[k] = retract(w.values[k], h * direction[o:o + d])
    return out


def _stacked(w, values):
    return np.concatenate([f.residual(values) for f in w.all_factors()])


def test_noiseless_truth_has_zero_cost():
    w, _ = _window()
    cost, r, J = window_cost(w)
    assert cost <= 1e-12
    assert J.shape == (len(r), w.dim)


def test_cost_ignores_factor_order():
    w, _ = _window(EstimatorConfig(window_size=4), noise=None)
    cost, *_ = window_cost(w)
    w.factors = w.factors[::-1]
    assert window_cost(w)[0] == pytest.approx(cost, rel=1e-12)


def test_empty_registry_matches_vanilla():
    w, _ = _window(EstimatorConfig(window_size=4), noise=None)
    a, b = window_cost(w, FejRegistry()), window_cost(w, None)
    assert a[0] == b[0] and np.array_equal(a[2], b[2])


def test_frozen_blocks_keep_jacobians():
    w, _ = _window(EstimatorConfig(window_size=4), noise=None)
    fej = FejRegistry()
    key = kf_key(0)
    fej.freeze(key, w.values[key])
    _, _, J0 = window_cost(w, fej)
    w.values[key] = retract(w.values[key], 0.01 * np.ones(15))
    fej.freeze(key, w.values[key])  # no effect once frozen
    _, _, J1 = window_cost(w, fej)
    o, d = w.offsets()[key]
    assert np.array_equal(J0[:, o:o + d], J1[:, o:o + d])


def test_lm_from_truth_stops_quickly():
    w, _ = _window(EstimatorConfig(window_size=4, perturb_rot_deg=0.0, perturb_pos=0.0))
    before = dict(w.values)
    rep = lm_solve(w)
    assert rep.iterations <= 2 and rep.success
    for k, v in before.items():
        assert np.allclose(local(w.values[k], v), 0, atol=1e-9)


def test_lm_costs_non_increasing_and_accurate():
    w, log = _window(EstimatorConfig(window_size=4), noise=None)
    rep = lm_solve(w)
    assert rep.success
    assert all(b <= a for a, b in zip(rep.costs, rep.costs[1:]))
    truth = truth_values(log, w)
    err = max(np.linalg.norm(w.values[k].p - truth[k].p) for k in w.values if k[0] == "kf")
    assert err < 0.01


def test_marginalize_block_without_factors():
    w, _ = _window(EstimatorConfig(window_size=4), noise=None)
    fej = FejRegistry()
    marginalize(w, fej, oldest_drop_set(w))
    prior = w.prior
    H = prior.H.copy()
    w.add_block(("extra", 0), np.zeros(2))
    assert marginalize(w, fej, [("extra", 0)]) is prior
    assert np.array_equal(w.prior.H, H)
    with pytest.raises(InvalidArgument):
        marginalize(w, fej, [("extra", 0)])


def test_marginal_prior_is_psd():
    w, _ = _window(EstimatorConfig(window_size=4), noise=None)
    lm_solve(w)
    marginalize(w, FejRegistry(), oldest_drop_set(w))
    H = w.prior.H
    assert np.allclose(H, H.T)
    assert np.linalg.eigvalsh(H).min() >= -1e-10 * np.linalg.norm(H)


def test_marginalization_matches_dense_conditioning(rng):
    dims = {"a": 2, "b": 3, "c": 2}
    w = FactorGraphWindow()
    for k, d in dims.items():
        w.add_block(k, rng.standard_normal(d))
    for keys in [("a", "b"), ("b", "c"), ("a", "c"), ("a",), ("c",), ("a", "b", "c")]:
        A = [rng.standard_normal((4, dims[k])) for k in keys]
        w.add_factor(LinearFactor(keys, A, rng.standard_normal(4)))
    _, r, J = window_cost(w)
    H, b = J.T @ J, -J.T @ r
    # information of the retained blocks is the inverse of their marginal covariance
    offs = w.offsets()
    keep = np.concatenate([np.arange(offs[k][0], offs[k][0] + offs[k][1]) for k in ("b", "c")])
    cov = np.linalg.inv(H)
    H_oracle = np.linalg.inv(cov[np.ix_(keep, keep)])
    mean = cov @ b
    b_oracle = H_oracle @ mean[keep]
    prior = marginalize(w, None, ["a"])
    assert prior.keys == ("b", "c")
    assert set(w.values) == {"b", "c"} and len(w.factors) == 2
    # prior plus the untouched (b, c) and (c,) factors
    _, r2, J2 = window_cost(w)
    assert np.allclose(J2.T @ J2, H_oracle, rtol=0, atol=1e-8 * np.abs(H_oracle).max())
    assert np.allclose(-J2.T @ r2, b_oracle, rtol=0, atol=1e-8 * np.abs(b_oracle).max())
    assert np.allclose(prior.H, prior.Jp.T @ prior.Jp) and np.allclose(prior.b, -prior.Jp.T @ prior.r0)


@pytest.mark.parametrize("kind", NULL_DIRECTIONS)
def test_lifted_directions_leave_residuals_unchanged(kind):
    w, _ = _window(EstimatorConfig(window_size=4, anchor=False), noise=None)
    lm_solve(w)
    u = lift_null_direction(w, kind)
    h = 1e-6
    d = (_stacked(w, _shifted(w, u, h)) - _stacked(w, _shifted(w, u, -h))) / (2 * h)
    _, _, J = window_cost(w)
    assert np.linalg.norm(d) / (np.linalg.norm(J) * np.linalg.norm(u)) <= 1e-8
    assert leakage_ratio(J, u) <= 1e-8


def test_random_direction_changes_residuals(rng):
    w, _ = _window(EstimatorConfig(window_size=4), noise=None)
    _, _, J = window_cost(w)
    assert leakage_ratio(J, rng.standard_normal(w.dim)) >= 1e-3
    with pytest.raises(InvalidArgument):
        lift_null_direction(w, "roll")


def test_gauge_nullity_of_unanchored_window():
    w, _ = _window()
    _, _, J = window_cost(w)
    res = numeric_nullspace(J)
    assert res.nullity == 4
    lifted = np.column_stack([lift_null_direction(w, k) for k in NULL_DIRECTIONS])
    proj = res.basis @ (res.basis.T @ lifted)
    assert np.allclose(proj, lifted, atol=1e-8 * np.abs(lifted).max())


def test_prior_survives_chart_flip():
    w, _ = _window(EstimatorConfig(window_size=4, anchor=False), noise=None)
    fej = FejRegistry()
    lm_solve(w, fej)
    marginalize(w, fej, oldest_drop_set(w))
    k = next(k for k in w.prior.keys if k[0] == "feat")
    before = w.prior.residual(w.values)
    w.values[k] = chart_flip(w.values[k])
    _sync_charts(w, fej, [k])
    assert np.allclose(w.prior.residual(w.values), before, atol=1e-9)
    assert isinstance(fej.frozen[k], (SpPlane, SpEdge))


def test_window_invariants():
    w, _ = _window()
    w.marginalized = True
    with pytest.raises(InternalInvariantViolation):
        window_cost(w)
    w2, _ = _window()
    w2.add_feature("ghost", SpPlane([0.1, 0.2], 1.0))
    with pytest.raises(InternalInvariantViolation):
        window_cost(w2)
    with pytest.raises(InvalidArgument):
        w2.add_keyframe(0, 0.0, w2.values[kf_key(0)])
