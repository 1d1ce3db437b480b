import time

import numpy as np
import pytest
import scipy.sparse as sp

from deformspde._cholesky import NotPositiveDefiniteError, SparseCholesky
from deformspde.deformation import DeformParams
from deformspde.fem import (
    Assembler,
    ModelError,
    TriangleFields,
    assemble,
    build_model,
    covariance_column,
    dump_coo,
    element_matrices,
    observation_matrix,
    precision,
    sample,
)
from deformspde.mesh import TriMesh, grid_mesh

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _one_triangle():
    return TriMesh(nodes=REF, triangles=np.array([[0, 1, 2]]), is_extension=np.array([False]), domain=REF)


def _fields(n, kappa=1.0, tau=1.0, H=np.eye(2)):
    return TriangleFields(H=np.broadcast_to(H, (n, 2, 2)).copy(), kappa=np.full(n, kappa), tau=np.full(n, tau))


def test_reference_triangle_matrices():
    area, mass, stiff = element_matrices(REF, np.array([[0, 1, 2]]), np.eye(2)[None])
    assert area[0] == 0.5
    np.testing.assert_allclose(stiff[0], [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)
    mats = assemble(_one_triangle(), fields=_fields(1))
    np.testing.assert_allclose(mats.C_diag, [1 / 6] * 3)
    np.testing.assert_allclose(mats.G.toarray(), stiff[0], atol=1e-15)
    np.testing.assert_allclose(mats.B.toarray().sum(), 0.5)


def test_kappa_scaling_alpha_two():
    m = grid_mesh(np.linspace(0, 1, 5), np.linspace(0, 1, 4))
    a = assemble(m, fields=_fields(m.n_triangles, kappa=1.3))
    b = assemble(m, fields=_fields(m.n_triangles, kappa=2.6))
    np.testing.assert_allclose(b.B.toarray(), 2 * a.B.toarray(), rtol=1e-14)
    np.testing.assert_allclose(b.G.toarray(), 0.5 * a.G.toarray(), rtol=1e-14, atol=1e-16)


def test_invalid_fields():
    m = grid_mesh([0, 1, 2], [0, 1])
    f = _fields(m.n_triangles)
    f.tau[1] = 0.0
    with pytest.raises(ModelError, match="triangle 1"):
        assemble(m, fields=f)
    f = _fields(m.n_triangles)
    f.H[0, 0, 0] = np.nan
    with pytest.raises(ModelError):
        assemble(m, fields=f)


def test_assembler_reuse_matches_and_is_symmetric(small_mesh):
    rng = np.random.default_rng(0)
    p = DeformParams(beta=rng.normal(0, 0.4, (3, 3, 3)), bbox=(3.0, 3.0))
    asm = Assembler(small_mesh)
    m1 = asm.assemble(p)
    m2 = assemble(small_mesh, p)
    assert (abs(m1.K - m2.K)).max() == 0
    assert (abs(m1.K - m1.K.T)).max() == 0
    Q, _ = asm.precision(p)
    assert (abs(Q - Q.T)).max() == 0
    np.testing.assert_allclose(np.asarray(m1.G.sum(axis=1)).ravel(), 0, atol=1e-12)


def test_precision_examples():
    I = sp.identity(4, format="csr")
    np.testing.assert_allclose(precision(np.ones(4), I, 2).toarray(), np.eye(4))
    np.testing.assert_allclose(precision(2 * np.ones(4), I, 3).toarray(), 0.25 * np.eye(4))
    np.testing.assert_allclose(precision(np.ones(4), 3 * I, 1).toarray(), 3 * np.eye(4))
    with pytest.raises(ValueError):
        precision(np.ones(4), I, 0)


def test_precision_fill_grows_with_alpha():
    m = grid_mesh(np.linspace(0, 1, 12), np.linspace(0, 1, 12))
    mats = assemble(m, fields=_fields(m.n_triangles))
    nnz = [precision(mats.C_diag, mats.K, a).nnz for a in (1, 2, 3)]
    assert nnz[0] < nnz[1] < nnz[2]


def test_alpha_two_equals_ktck():
    m = grid_mesh(np.linspace(0, 1, 6), np.linspace(0, 1, 6))
    mats = assemble(m, fields=_fields(m.n_triangles, kappa=1.7))
    Q = precision(mats.C_diag, mats.K, 2).toarray()
    K = mats.K.toarray()
    np.testing.assert_allclose(Q, K.T @ np.diag(1 / mats.C_diag) @ K, rtol=1e-12, atol=1e-14)


def test_observation_matrix_rows():
    m = grid_mesh([0, 1, 2], [0, 1, 2])
    A = observation_matrix(m, [m.nodes[4], [1 / 3, 1 / 3], [1.5, 2.0]]).toarray()
    np.testing.assert_allclose(A.sum(axis=1), 1.0)
    assert np.count_nonzero(A[0]) == 1 and A[0, 4] == pytest.approx(1.0)
    assert np.count_nonzero(A[2]) == 2
    np.testing.assert_allclose(np.sort(A[2][A[2] > 0]), [0.5, 0.5])
    assert np.all((A > 0).sum(axis=1) <= 3)
    t = m.triangles[0]
    A = observation_matrix(m, [m.nodes[t].mean(axis=0)]).toarray()
    np.testing.assert_allclose(A[0, t], [1 / 3] * 3)
    with pytest.raises(ModelError, match=r"location 1 at \(9, 9\)"):
        observation_matrix(m, [[0.5, 0.5], [9.0, 9.0]])


def test_sample_covariance_matches_inverse(small_model):
    node = int(small_model.free[len(small_model.free) // 2])
    target = small_model.covariance_column(node)[node]
    draws = np.concatenate([small_model.sample(10_000, seed=s)[:, node] for s in range(10)])
    assert abs(draws.var() / target - 1) < 0.02


def test_sample_determinism_and_shapes(small_model):
    a = sample(small_model, 3, seed=11)
    b = sample(small_model, 3, seed=11)
    assert np.array_equal(a, b)
    assert sample(small_model, 0, seed=1).shape == (0, small_model.mesh.n_nodes)
    assert np.all(a[:, small_model.mesh.boundary_nodes()] == 0)


def test_covariance_column_properties(small_model):
    mesh = small_model.mesh
    c = np.array([1.5, 1.5])
    node = int(np.argmin(np.linalg.norm(mesh.nodes - c, axis=1)))
    corr = small_model.correlation_column(node)
    assert corr[node] == pytest.approx(1.0)
    col = covariance_column(small_model, node)
    np.testing.assert_allclose(col, small_model.covariance_column(node))
    # along a ray of nodes, correlation decays monotonically up to FEM noise
    d = np.linalg.norm(mesh.nodes - mesh.nodes[node], axis=1)
    ang = np.arctan2(*(mesh.nodes - mesh.nodes[node]).T[::-1])
    ray = np.flatnonzero((np.abs(ang) < 0.15) & (d > 0) & (d < 2.5))
    ray = ray[np.argsort(d[ray])]
    assert len(ray) >= 5
    assert np.all(np.diff(corr[ray]) < 1e-3)
    with pytest.raises(IndexError):
        covariance_column(small_model, mesh.n_nodes)


def test_variances_subset_and_takahashi(small_model):
    full = small_model.marginal_variances()
    nodes = small_model.free[::7]
    np.testing.assert_allclose(small_model.marginal_variances(nodes), full[nodes], rtol=1e-10)
    f = small_model.factor
    np.testing.assert_allclose(f.inverse_diagonal(), f.inverse_diagonal_by_solves(), rtol=1e-10)


def test_indefinite_matrix_reported():
    with pytest.raises(NotPositiveDefiniteError):
        SparseCholesky(sp.csr_matrix(np.diag([1.0, -1.0, 2.0])))


def test_dump_coo(tmp_path):
    dump_coo(sp.csr_matrix(np.array([[2.0, 0.0], [0.5, 1.0]])), tmp_path / "m.txt")
    rows = [line.split() for line in (tmp_path / "m.txt").read_text().splitlines()]
    assert ["1", "0", "0.5"] in rows and len(rows) == 3


def test_factorization_complexity_is_subcubic():
    sizes, times = [], []
    for n in (32, 64, 128):
        m = grid_mesh(np.linspace(0, 1, n), np.linspace(0, 1, n))
        model = build_model(m, DeformParams.constant([-2.0, -2.0, 0.0], 0, (1.0, 1.0)))
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            SparseCholesky(model.Q)
            best = min(best, time.perf_counter() - t0)
        sizes.append(m.n_nodes)
        times.append(best)
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    assert slope < 2.2
