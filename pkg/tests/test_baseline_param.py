import numpy as np
import pytest

from conftest import central_diff, rel_err
from spba.analysis import random_imu_state
from spba.baseline_param import (
    CpPlane,
    PlueckerEdge,
    PlueckerState,
    build_pluecker_matrix,
    cp_point_jacobian,
    cp_residual,
    pluecker_null_basis,
    pluecker_translation_directions,
    sp_point_jacobian,
)
from spba.errors import InvalidArgument, InvalidScenario, SingularParameterization
from spba.kinematics import FullState
from spba.observability import (
    annihilation_residual,
    build_basis_matrix,
    null_containment,
    null_exclusion,
    numeric_nullspace,
    translation_directions,
)
from spba.sp_geometry import derivative_bound, edge_from_geometric, plane_from_geometric, plane_normal

# three orthogonal edges through the origin; d_k spans R^3
EDGES = [((0, 0, 1.0), (1.0, 0, 0)), ((1.0, 0, 0), (0, 1.0, 0)), ((0, 1.0, 0), (0, 0, 1.0))]


def _pluecker(rng, tau=0.0):
    return PlueckerState(random_imu_state(rng), [PlueckerEdge(l, tau, d) for l, d in EDGES])


def test_cp_jacobian_examples():
    assert np.allclose(cp_point_jacobian(CpPlane([0, 0, 1.0]), [0, 0, 5.0]), [0, 0, 1])
    J = cp_point_jacobian(CpPlane([0, 0, 1e-6]), [1.0, 0, 0])
    assert np.allclose(J, [1e6, 0, 1], rtol=1e-9)
    assert np.linalg.norm(J) >= 1e5


def test_cp_jacobian_finite_difference(rng):
    for _ in range(10):
        Pi = rng.standard_normal(3)
        Pi /= np.linalg.norm(Pi)
        p = rng.uniform(-3, 3, 3)
        num = central_diff(lambda x: cp_residual(x, p), Pi)
        assert rel_err(cp_point_jacobian(Pi, p), num) <= 1e-5


def test_cp_jacobian_grows_per_decade():
    p = np.array([1.0, 0.5, 0.0])
    norms = [np.linalg.norm(cp_point_jacobian(CpPlane([0, 0, oa]), p)) for oa in (1e-2, 1e-4, 1e-6)]
    assert all(b >= 10 * a for a, b in zip(norms, norms[1:]))
    with pytest.raises(SingularParameterization):
        cp_point_jacobian(CpPlane(np.zeros(3)), p)


def test_sp_jacobian_bounded_on_same_sweep():
    p = np.array([1.0, 0.0, 0.0])
    for oa in (1.0, 1e-2, 1e-4, 1e-6):
        J = sp_point_jacobian(plane_from_geometric([0, 0, -1.0], oa), p)
        assert np.linalg.norm(J) <= derivative_bound(0.2) + 1.0


def test_sp_jacobian_finite_difference(rng):
    for _ in range(10):
        n = rng.standard_normal(3)
        n = -np.sign(n[2]) * n / np.linalg.norm(n)
        pl = plane_from_geometric(n, rng.uniform(-2, 2))
        p = rng.uniform(-3, 3, 3)
        num = central_diff(lambda x: plane_normal(x[:2]) @ p + x[2], pl.as_vector())
        assert rel_err(sp_point_jacobian(pl, p), num) <= 1e-6


def test_pluecker_edge_validation():
    with pytest.raises(InvalidArgument):
        PlueckerEdge([1, 0, 0], 1.0, [1, 0, 0])
    with pytest.raises(InvalidArgument):
        PlueckerEdge([1, 0, 0], -1.0, [0, 1, 0])


def test_pluecker_null_basis_through_origin(rng):
    x = _pluecker(rng)
    N = pluecker_null_basis(x)
    assert N.shape[1] == len(x.edges) + 1
    M = build_pluecker_matrix(x)
    assert annihilation_residual(M, N) <= 1e-9
    res = numeric_nullspace(M)
    assert res.nullity == len(x.edges) + 1
    assert np.linalg.matrix_rank(N) == res.nullity
    # global translations are wrongly observable in this chart
    assert null_exclusion(res.basis, pluecker_translation_directions(x)).min() >= 0.9


def test_sp_keeps_translations_on_identical_geometry(rng):
    x = _pluecker(rng)
    edges = []
    for l, d in EDGES:
        l = np.array(l)
        sign = -1.0 if l[2] > 0 else 1.0
        edges.append(edge_from_geometric(sign * l, np.zeros(3)))
    sp = FullState(x.imu, edges)
    res = numeric_nullspace(build_basis_matrix(sp))
    assert res.nullity == 4
    assert null_containment(res.basis, translation_directions(sp)).min() >= 1 - 1e-8


def test_translations_observable_only_at_zero_tau(rng):
    x = _pluecker(rng, tau=1.0)
    res = numeric_nullspace(build_pluecker_matrix(x))
    assert null_containment(res.basis, pluecker_translation_directions(x)).min() >= 1 - 1e-8


def test_null_basis_requires_pathology(rng):
    with pytest.raises(InvalidScenario):
        pluecker_null_basis(_pluecker(rng, tau=1.0))
