import math

import numpy as np
import pytest

from helpers import constant_range, square
from deformspde.deformation import DeformParams
from deformspde.fem import triangle_fields
from deformspde.mesh import (
    MeshError,
    apply_barrier,
    barrier_anisotropy,
    build_mesh,
    grid_mesh,
    read_mesh,
    signed_areas,
    write_mesh,
)


@pytest.fixture(scope="module")
def unit_mesh():
    return build_mesh(square(1.0), constant_range(1.0), extension_factor=2.0)


def test_unit_square_extent_and_edges(unit_mesh):
    m = unit_mesh
    lo, hi = m.nodes.min(axis=0), m.nodes.max(axis=0)
    np.testing.assert_allclose(lo, [-2, -2], atol=0.02)
    np.testing.assert_allclose(hi, [3, 3], atol=0.02)
    inner = m.triangle_edge_lengths()[~m.is_extension]
    assert inner.max() <= 0.2 + 1e-12
    assert m.is_extension.any()
    assert m.r_min == pytest.approx(1.0)


def test_orientation_and_conformity(unit_mesh):
    m = unit_mesh
    assert np.all(signed_areas(m.nodes, m.triangles) > 0)
    counts = m.edge_counts()
    assert set(np.unique(counts)) <= {1, 2}
    # boundary edges form a single closed loop: every boundary node has degree two
    b = m.edges()[counts == 1]
    deg = np.bincount(b.ravel())
    assert set(deg[deg > 0]) == {2}
    assert len(b) == len(np.unique(b))
    # Euler characteristic of a disc
    assert m.n_nodes - len(counts) + m.n_triangles == 1


def test_zero_extension():
    m = build_mesh(square(1.0), constant_range(1.0), extension_factor=0.0)
    assert not m.is_extension.any()
    np.testing.assert_allclose(m.nodes.min(axis=0), [0, 0], atol=1e-12)


def test_buffer_uses_min_range():
    rfield = lambda p: 0.5 + 0.5 * np.atleast_2d(p)[:, 0]
    m = build_mesh(square(1.0), rfield, extension_factor=2.0)
    assert m.r_min == pytest.approx(0.5)
    lo, hi = m.nodes.min(axis=0), m.nodes.max(axis=0)
    np.testing.assert_allclose(lo, [-1, -1], atol=0.02)
    np.testing.assert_allclose(hi, [2, 2], atol=0.02)


def test_varying_range_edge_bound():
    rfield = lambda p: 0.4 + 0.3 * np.atleast_2d(p)[:, 0] * np.atleast_2d(p)[:, 1]
    m = build_mesh(square(2.0), rfield, extension_factor=1.0)
    inner = ~m.is_extension
    longest = m.triangle_edge_lengths()[inner].max(axis=1)
    local = rfield(m.centroids[inner])
    for v in range(3):
        local = np.minimum(local, rfield(m.nodes[m.triangles[inner, v]]))
    assert np.all(longest <= local / 5 + 1e-12)


def test_invalid_inputs():
    with pytest.raises(MeshError, match="3 vertices"):
        build_mesh([(0, 0), (1, 0)], constant_range(1.0))
    with pytest.raises(MeshError, match="non-positive"):
        build_mesh(square(1.0), lambda p: np.zeros(len(p)))
    with pytest.raises(MeshError, match="convex"):
        build_mesh([(0, 0), (2, 0), (1, 0.3), (2, 2), (0, 2)], constant_range(1.0))
    with pytest.raises(MeshError, match="edge_fraction"):
        build_mesh(square(1.0), constant_range(1.0), edge_fraction=3)


@pytest.mark.parametrize("nu,r_min", [(1.0, math.sqrt(8)), (2.0, 4.0)])
def test_barrier_identity_cases(nu, r_min):
    b = barrier_anisotropy(nu, r_min)
    np.testing.assert_allclose(b.H, np.eye(2))
    assert b.kappa == pytest.approx(1.0)
    np.testing.assert_allclose(b.H_tilde, np.eye(2))


def test_barrier_general_relation():
    b = barrier_anisotropy(1.5, 0.7)
    c = math.sqrt(12) / 0.7
    J = c * np.eye(2)
    np.testing.assert_allclose(b.kappa**2 * np.linalg.inv(J) @ np.linalg.inv(J).T, b.H)
    with pytest.raises(MeshError):
        barrier_anisotropy(1.0, 0.0)


def test_barrier_override_scope(unit_mesh):
    rng = np.random.default_rng(2)
    p = DeformParams(beta=rng.normal(0, 0.3, (3, 2, 2)), bbox=(1.0, 1.0))
    plain = triangle_fields(unit_mesh, p)
    bm = apply_barrier(unit_mesh, p.nu, unit_mesh.r_min)
    barred = triangle_fields(bm, p)
    inner = ~unit_mesh.is_extension
    assert np.array_equal(plain.H[inner], barred.H[inner])
    assert np.array_equal(plain.kappa[inner], barred.kappa[inner])
    np.testing.assert_allclose(barred.H[unit_mesh.is_extension], np.broadcast_to(8 * np.eye(2), (int(unit_mesh.is_extension.sum()), 2, 2)))
    again = triangle_fields(apply_barrier(bm, p.nu, unit_mesh.r_min), p)
    assert np.array_equal(again.H, barred.H)


def test_mesh_files_round_trip(tmp_path, unit_mesh):
    m = apply_barrier(unit_mesh, 1.0, 1.0)
    write_mesh(m, tmp_path / "n.csv", tmp_path / "t.csv")
    back = read_mesh(tmp_path / "n.csv", tmp_path / "t.csv")
    assert np.array_equal(back.nodes, m.nodes)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.is_extension, m.is_extension)
    assert back.barrier == m.barrier and back.r_min == m.r_min


def test_locate_and_grid_mesh():
    m = grid_mesh([0, 1, 2], [0, 1])
    tri, w = m.locate([[0.5, 0.25], [5.0, 5.0], [2.0, 1.0]])
    assert tri[1] == -1 and tri[0] >= 0 and tri[2] >= 0
    np.testing.assert_allclose(w[0].sum(), 1.0)
    assert np.all(signed_areas(m.nodes, m.triangles) > 0)
