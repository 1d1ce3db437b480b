"""Reconstruction of deformation-space coordinates from a fitted anisotropy.

The inverse deformation is taken to have a symmetric positive-definite
Jacobian ``J = kappa * H^(-1/2)``, so that ``H = kappa^2 J^-1 J^-T``.  Node
coordinates follow by integrating ``J`` along mesh edges, starting from a
base node at the origin and visiting nodes breadth first.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .deformation import DeformParams, anisotropy_from_h, eval_h
from .mesh import TriMesh, signed_areas


def jacobian_from_H(H, kappa) -> np.ndarray:
    """``kappa * H^(-1/2)`` for one ``(2, 2)`` matrix or a stack ``(..., 2, 2)``."""
    H = np.asarray(H, dtype=float)
    if not np.allclose(H, np.swapaxes(H, -1, -2), rtol=1e-10, atol=1e-12):
        raise ValueError("H must be symmetric")
    w, V = np.linalg.eigh(H)
    if np.any(w <= 0):
        raise ValueError("H must be positive definite")
    inv_sqrt = np.einsum("...ik,...k,...jk->...ij", V, w**-0.5, V)
    return np.asarray(kappa, dtype=float)[..., None, None] * inv_sqrt


def jacobian_field(params: DeformParams):
    """Callable mapping ``(n, 2)`` points to ``(n, 2, 2)`` Jacobians."""

    def J(points):
        _, kappa, H = anisotropy_from_h(eval_h(np.atleast_2d(points), params))
        return jacobian_from_H(H, kappa)

    return J


@dataclass
class DspaceMap:
    node_coords: np.ndarray
    base_node: int
    fold_triangles: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    orientation: np.ndarray | None = None
    unreached: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    order: np.ndarray | None = None
    parent: np.ndarray | None = None


def _adjacency(mesh: TriMesh):
    edges = mesh.edges()
    nbrs = [[] for _ in range(mesh.n_nodes)]
    for a, b in edges.tolist():
        nbrs[a].append(b)
        nbrs[b].append(a)
    return nbrs


def edge_integrals(jfield, starts, ends) -> np.ndarray:
    """Simpson's rule for ``int_0^1 J(p + t (q - p)) (q - p) dt`` on each edge."""
    starts = np.atleast_2d(starts)
    ends = np.atleast_2d(ends)
    d = ends - starts
    J0 = jfield(starts)
    Jm = jfield(0.5 * (starts + ends))
    J1 = jfield(ends)
    Jbar = (J0 + 4 * Jm + J1) / 6.0
    return np.einsum("nij,nj->ni", Jbar, d)


def default_base_node(mesh: TriMesh) -> int:
    """Node nearest the centroid of the observation domain."""
    c = mesh.domain.mean(axis=0) if mesh.domain is not None else mesh.nodes.mean(axis=0)
    return int(np.argmin(np.linalg.norm(mesh.nodes - c, axis=1)))


def reconstruct_dspace(mesh: TriMesh, params: DeformParams | None = None, base_node: int | None = None,
                       *, jfield=None, shuffle_seed: int | None = None) -> DspaceMap:
    """Breadth-first integration of the Jacobian field over mesh edges.

    ``jfield`` overrides the field derived from ``params``.  With
    ``shuffle_seed`` the neighbour order of the traversal is randomized, which
    changes the integration paths (useful to gauge path dependence).
    """
    if jfield is None:
        if params is None:
            raise ValueError("need params or jfield")
        jfield = jacobian_field(params)
    if base_node is None:
        base_node = default_base_node(mesh)
    base_node = int(base_node)
    n = mesh.n_nodes
    nbrs = _adjacency(mesh)
    rng = np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    parent = -np.ones(n, dtype=int)
    seen = np.zeros(n, dtype=bool)
    seen[base_node] = True
    order = [base_node]
    queue = deque([base_node])
    while queue:
        u = queue.popleft()
        nb = sorted(nbrs[u])
        if rng is not None:
            rng.shuffle(nb)
        for v in nb:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                order.append(v)
                queue.append(v)
    order = np.array(order)
    child = order[1:]
    steps = edge_integrals(jfield, mesh.nodes[parent[child]], mesh.nodes[child])
    coords = np.full((n, 2), np.nan)
    coords[base_node] = 0.0
    # BFS order guarantees parents are placed before their children
    for v, step in zip(child, steps):
        coords[v] = coords[parent[v]] + step
    dmap = DspaceMap(node_coords=coords, base_node=base_node, unreached=np.flatnonzero(~seen),
                     order=order, parent=parent)
    dmap.orientation = mapped_orientation(dmap, mesh)
    dmap.fold_triangles = detect_folds(dmap, mesh)
    return dmap


def mapped_orientation(dmap: DspaceMap, mesh: TriMesh) -> np.ndarray:
    """Signed area of every triangle after mapping (NaN where unreached)."""
    return signed_areas(dmap.node_coords, mesh.triangles)


def detect_folds(dmap: DspaceMap, mesh: TriMesh, interior_only: bool = False) -> np.ndarray:
    """Triangles whose mapped orientation is flipped (negative signed area)."""
    area = mapped_orientation(dmap, mesh)
    flipped = np.nan_to_num(area, nan=0.0) < 0
    if interior_only:
        flipped &= ~mesh.is_extension
    return np.flatnonzero(flipped)


def loop_defects(mesh: TriMesh, params: DeformParams | None = None, *, jfield=None,
                 relative: bool = True) -> np.ndarray:
    """Closure error of the edge integrals around each triangle.

    Returns the norm of the summed loop integral divided by the triangle
    perimeter times the mean spectral norm of ``J`` at its vertices; zero for
    an exactly integrable Jacobian field.  With ``relative=False`` the raw
    norm is returned; the discrepancy between two traversal paths to the
    same node is a sum of these loop integrals over the enclosed triangles.
    """
    if jfield is None:
        jfield = jacobian_field(params)
    t = mesh.triangles
    p = mesh.nodes
    total = np.zeros((len(t), 2))
    perim = np.zeros(len(t))
    for i in range(3):
        a, b = t[:, i], t[:, (i + 1) % 3]
        total += edge_integrals(jfield, p[a], p[b])
        perim += np.linalg.norm(p[b] - p[a], axis=1)
    if not relative:
        return np.linalg.norm(total, axis=1)
    Jn = np.linalg.norm(jfield(p), ord=2, axis=(1, 2))
    scale = perim * Jn[t].mean(axis=1)
    return np.linalg.norm(total, axis=1) / scale


def normalize_rigid(coords, base_node: int, ref_node: int) -> np.ndarray:
    """Translate ``base_node`` to the origin and rotate ``ref_node`` onto +x."""
    c = np.asarray(coords, dtype=float) - coords[base_node]
    v = c[ref_node]
    ang = np.arctan2(v[1], v[0])
    R = np.array([[np.cos(-ang), -np.sin(-ang)], [np.sin(-ang), np.cos(-ang)]])
    return c @ R.T


def edge_length_errors(mesh: TriMesh, coords_a, coords_b, interior_only: bool = True) -> np.ndarray:
    """Relative difference of mapped edge lengths, ``|a - b| / b`` per edge."""
    edges = mesh.edges()
    if interior_only:
        keep = np.zeros(mesh.n_nodes, dtype=bool)
        keep[np.unique(mesh.triangles[~mesh.is_extension])] = True
        edges = edges[keep[edges[:, 0]] & keep[edges[:, 1]]]
    la = np.linalg.norm(coords_a[edges[:, 0]] - coords_a[edges[:, 1]], axis=1)
    lb = np.linalg.norm(coords_b[edges[:, 0]] - coords_b[edges[:, 1]], axis=1)
    return np.abs(la - lb) / lb
