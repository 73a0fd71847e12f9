import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import central_diff, rel_err
from spba.errors import DegenerateRepresentation, InvalidArgument, InvalidGeometry
from spba.sp_geometry import (
    BallMargin,
    SpEdge,
    SpPlane,
    chart_flip,
    chart_flip_jacobian,
    clamp_ball,
    derivative_bound,
    edge_embed,
    edge_frame,
    edge_from_geometric,
    edge_moment_jacobian,
    frame_jacobians,
    inverse_projection,
    plane_from_geometric,
    plane_normal,
    sphere_point,
    tangent_map,
)

coord = st.floats(-3.0, 3.0, allow_nan=False)
uv = st.tuples(coord, coord).map(np.array)
small_uv = st.tuples(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8)).map(np.array)


def _grid(delta=0.2, n=100):
    r = 1.0 + delta
    xs = np.linspace(-r, r, n)
    U = np.array([(a, b) for a in xs for b in xs])
    return U[np.linalg.norm(U, axis=1) <= r]


@pytest.mark.parametrize("u, n", [
    ((0.0, 0.0), (0.0, 0.0, -1.0)),
    ((1.0, 0.0), (1.0, 0.0, 0.0)),
    ((0.5, 0.5), (2 / 3, 2 / 3, -1 / 3)),
])
def test_plane_normal_examples(u, n):
    assert np.allclose(plane_normal(u), n, atol=1e-14)


@pytest.mark.parametrize("n, oa, u", [
    ((0.0, 0.0, -1.0), 2.0, (0.0, 0.0)),
    ((1.0, 0.0, 0.0), 0.0, (1.0, 0.0)),
    ((2 / 3, 2 / 3, -1 / 3), -1.5, (0.5, 0.5)),
])
def test_plane_from_geometric_examples(n, oa, u):
    pl = plane_from_geometric(n, oa)
    assert np.allclose(pl.u_s, u, atol=1e-12)
    assert pl.OA == oa


def test_north_pole_rejected():
    with pytest.raises(DegenerateRepresentation):
        inverse_projection([0.0, 0.0, 1.0])
    with pytest.raises(InvalidArgument):
        plane_from_geometric([0.0, 0.0, 2.0], 1.0)


def test_non_finite_coordinates_rejected():
    with pytest.raises(InvalidArgument):
        SpPlane([np.nan, 0.0], 1.0)


def test_edge_embed_examples():
    l, m, T1, T2 = edge_embed(SpEdge([0.0, 0.0], [0.0, 0.0]))
    assert np.allclose(l, [0, 0, -1]) and np.allclose(m, 0)
    l, m, T1, _ = edge_embed(SpEdge([0.0, 0.0], [1.0, 0.0]))
    assert np.allclose(T1, [1, 0, 0]) and np.allclose(m, [1, 0, 0])


@given(uv, st.tuples(coord, coord))
def test_moment_orthogonal_to_direction(u, lam):
    l, m, T1, T2 = edge_embed(SpEdge(u, lam))
    assert abs(l @ m) <= 1e-12 * max(1.0, np.linalg.norm(m))


@given(uv)
def test_edge_frame_orthonormal(u):
    l, T1, T2 = edge_frame(u)
    F = np.column_stack([l, T1, T2])
    assert np.allclose(F.T @ F, np.eye(3), atol=1e-12)


def test_edge_from_geometric_examples():
    e = edge_from_geometric([0.0, 0.0, -1.0], np.zeros(3))
    assert np.allclose(e.u_l, 0) and np.allclose(e.Lam, 0)
    # at u = (1, 0): l = e1, T1 = e3, T2 = e2, so (0, 0, 2) = 2 T1
    e = edge_from_geometric([1.0, 0.0, 0.0], [0.0, 0.0, 2.0])
    assert np.allclose(e.u_l, [1, 0], atol=1e-12)
    assert np.allclose(e.Lam, [2, 0], atol=1e-12)


def test_edge_from_geometric_rejects_skew_moment():
    with pytest.raises(InvalidGeometry):
        edge_from_geometric([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])


def test_edge_round_trip_random(rng):
    for _ in range(1000):
        l = rng.standard_normal(3)
        l /= np.linalg.norm(l)
        if l[2] > 0:
            l = -l
        m = np.cross(l, rng.standard_normal(3))
        l2, m2, _, _ = edge_embed(edge_from_geometric(l, m))
        assert np.allclose(l2, l, atol=1e-10) and np.allclose(m2, m, atol=1e-10)


@given(small_uv, st.tuples(coord, coord).map(np.array))
def test_edge_parameter_round_trip(u, lam):
    l, m, _, _ = edge_embed(SpEdge(u, lam))
    e = edge_from_geometric(l, m)
    assert np.allclose(e.u_l, u, atol=1e-10) and np.allclose(e.Lam, lam, atol=1e-10)


def test_tangent_map_at_origin():
    assert np.allclose(tangent_map([0.0, 0.0]).H, 2 * np.eye(3)[:, :2])


@given(uv)
def test_tangent_map_properties(u):
    tm = tangent_map(u)
    assert np.allclose(sphere_point(u) @ tm.H, 0, atol=1e-12)
    assert np.linalg.matrix_rank(tm.H) == 2
    assert np.allclose(tm.Hplus @ tm.H, np.eye(2), atol=1e-10)


@given(uv)
def test_tangent_map_finite_difference(u):
    assert rel_err(tangent_map(u).H, central_diff(sphere_point, u)) <= 1e-6


@given(uv)
def test_frame_jacobians_finite_difference(u):
    dl, dT1, dT2 = frame_jacobians(u)
    for k, d in enumerate((dl, dT1, dT2)):
        assert rel_err(d, central_diff(lambda x: edge_frame(x)[k], u)) <= 1e-6


@given(uv, st.tuples(coord, coord).map(np.array))
def test_moment_jacobian_finite_difference(u, lam):
    d_u, d_lam = edge_moment_jacobian(u, lam)
    assert rel_err(d_u, central_diff(lambda x: edge_embed(SpEdge(x, lam))[1], u)) <= 1e-6
    assert rel_err(d_lam, central_diff(lambda x: edge_embed(SpEdge(u, x))[1], lam)) <= 1e-6


def test_unit_norm_on_grid():
    for u in _grid():
        assert abs(np.linalg.norm(plane_normal(u)) - 1.0) <= 1e-12
        assert abs(np.linalg.norm(edge_frame(u)[0]) - 1.0) <= 1e-12


def test_derivative_bound_on_grid():
    bound = derivative_bound(0.2)
    worst = 0.0
    for u in _grid(0.2):
        dl, dT1, dT2 = frame_jacobians(u)
        worst = max(worst, np.linalg.norm(tangent_map(u).H), np.linalg.norm(dl),
                    np.linalg.norm(dT1), np.linalg.norm(dT2))
    assert worst <= bound


def test_derivative_bound_values():
    assert derivative_bound(0.0) == pytest.approx(3.0)
    assert derivative_bound(0.2) == pytest.approx(np.sqrt(10.76))
    vals = [derivative_bound(d) for d in np.linspace(0, 2, 21)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(InvalidArgument):
        BallMargin(0.0)


@given(st.floats(1e-3, 1.0), st.floats(0, 2 * np.pi))
def test_antipodal_representations_separated(r, phi):
    u = r * np.array([np.cos(phi), np.sin(phi)])
    assert np.linalg.norm(u - (-u / (u @ u))) >= 0.5


def test_clamp_ball_examples():
    pl = SpPlane([0.5, 0.0], 1.0)
    assert clamp_ball(pl, BallMargin(0.1)) is pl
    flipped = clamp_ball(SpPlane([2.0, 0.0], 1.0))
    assert np.allclose(flipped.u_s, [-0.5, 0.0]) and flipped.OA == -1.0
    assert np.allclose(plane_normal(flipped.u_s), -plane_normal([2.0, 0.0]))
    e = SpEdge([0.0, 3.0], [0.7, -1.2])
    f = clamp_ball(e)
    assert np.linalg.norm(f.u_l) == pytest.approx(1 / 3)
    l, m, _, _ = edge_embed(e)
    l2, m2, _, _ = edge_embed(f)
    assert np.allclose(l2, -l) and np.allclose(m2, -m)


@given(uv.filter(lambda u: u @ u > 1e-2), st.floats(-3, 3))
def test_chart_flip_is_involution(u, oa):
    pl = SpPlane(u, oa)
    back = chart_flip(chart_flip(pl))
    assert np.allclose(back.u_s, u, atol=1e-10) and back.OA == pytest.approx(oa)


@given(uv.filter(lambda u: u @ u > 1e-2), st.tuples(coord, coord).map(np.array))
def test_chart_flip_jacobian_finite_difference(u, lam):
    e = SpEdge(u, lam)
    num = central_diff(lambda x: chart_flip(SpEdge(x[:2], x[2:])).as_vector(), e.as_vector())
    assert rel_err(chart_flip_jacobian(e), num) <= 1e-6
    pl = SpPlane(u, lam[0])
    num = central_diff(lambda x: chart_flip(SpPlane(x[:2], x[2])).as_vector(), pl.as_vector())
    assert rel_err(chart_flip_jacobian(pl), num) <= 1e-6
