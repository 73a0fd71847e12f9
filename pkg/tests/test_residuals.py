import numpy as np
import pytest

from conftest import central_diff, rel_err
from spba.analysis import random_imu_state
from spba.errors import InvalidArgument
from spba.estimator import edge_residual, plane_residual, residual_covariance_check
from spba.estimator.manifold import retract
from spba.kinematics import ImuState
from spba.sp_geometry import SpEdge, SpPlane, edge_embed, edge_from_geometric, plane_from_geometric


def test_plane_examples():
    pl = plane_from_geometric([0, 0, -1.0], 2.0)
    r = plane_residual(ImuState(), [0, 0, 1.0], pl, jacobians=False)
    assert r == pytest.approx([1.0])
    assert plane_residual(ImuState(), [0.3, -0.7, 2.0], pl, jacobians=False) == pytest.approx([0.0])


def test_edge_examples():
    # the chart stores the line along -z, the antipode of +z
    e = edge_from_geometric([0, 0, -1.0], np.zeros(3))
    d = edge_residual(ImuState(), [1.0, 0, 0], e, jacobians=False)
    assert np.allclose(d, [[0, -1, 0]])
    assert np.linalg.norm(d) == pytest.approx(1.0)
    assert np.allclose(edge_residual(ImuState(), [0, 0, 4.0], e, jacobians=False), 0)


def test_edge_residual_orthogonal_to_direction(rng):
    e = SpEdge(rng.uniform(-1, 1, 2), rng.uniform(-2, 2, 2))
    l = edge_embed(e)[0]
    d = edge_residual(random_imu_state(rng), rng.uniform(-5, 5, (50, 3)), e, jacobians=False)
    assert np.abs(d @ l).max() <= 1e-12


def _fd_check(fn, state, feature, pts):
    def kf(delta):
        return fn(retract(state, delta), pts, feature, jacobians=False)

    def feat(delta):
        return fn(state, pts, retract(feature, delta), jacobians=False)

    _, J_kf, J_feat = fn(state, pts, feature)
    # per-point rows are stacked along the leading axis
    num_kf = central_diff(kf, np.zeros(15))
    num_feat = central_diff(feat, np.zeros(feature.as_vector().size))
    assert rel_err(J_kf, num_kf) <= 1e-6
    assert rel_err(J_feat, num_feat) <= 1e-6


def test_plane_jacobians_finite_difference(rng):
    for _ in range(10):
        pl = SpPlane(rng.uniform(-1, 1, 2), rng.uniform(-3, 3))
        _fd_check(plane_residual, random_imu_state(rng), pl, rng.uniform(-4, 4, (6, 3)))


@pytest.mark.parametrize("frame", ["global", "imu"])
def test_edge_jacobians_finite_difference(frame, rng):
    def fn(*a, **k):
        return edge_residual(*a, frame=frame, **k)

    for _ in range(10):
        e = SpEdge(rng.uniform(-1, 1, 2), rng.uniform(-2, 2, 2))
        _fd_check(fn, random_imu_state(rng), e, rng.uniform(-4, 4, (6, 3)))


def test_imu_frame_residual_same_norm(rng):
    x = random_imu_state(rng)
    e = SpEdge([0.2, 0.4], [1.0, -0.5])
    pts = rng.uniform(-3, 3, (10, 3))
    a = edge_residual(x, pts, e, jacobians=False)
    b = edge_residual(x, pts, e, jacobians=False, frame="imu")
    assert np.allclose(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))
    with pytest.raises(InvalidArgument):
        edge_residual(x, pts, e, frame="body")


def test_bad_inputs():
    with pytest.raises(InvalidArgument):
        plane_residual(ImuState(), np.zeros((2, 2)), SpPlane([0, 0], 1.0))
    with pytest.raises(InvalidArgument):
        plane_residual(ImuState(), np.zeros(3), SpEdge([0, 0], [0, 0]))
    with pytest.raises(InvalidArgument):
        residual_covariance_check("plane", SpPlane([0, 0], 1.0), 0.01, samples=100)


def test_plane_covariance():
    var = residual_covariance_check("plane", SpPlane([0.3, -0.2], 1.5), 0.01, samples=100_000)
    assert 0.0097 <= var[0, 0] <= 0.0103


def test_edge_covariance():
    sigma = 0.01
    cov = residual_covariance_check("edge", SpEdge([0.4, 0.1], [0.5, -1.0]), sigma, samples=100_000)
    assert cov.shape == (2, 2)
    assert np.allclose(np.diag(cov), sigma, rtol=0.05)
    assert abs(cov[0, 1]) <= 0.05 * sigma


def test_zero_noise_gives_noiseless_residuals(rng):
    var = residual_covariance_check("plane", SpPlane([0.1, 0.1], -1.0), 0.0, samples=10_000,
                                    state=random_imu_state(rng))
    assert var[0, 0] <= 1e-24
