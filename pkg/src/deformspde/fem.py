"""Finite element discretization of the deformed Matern SPDE.

With piecewise-linear hat functions and parameters held constant on each
triangle, one application of the operator
``kappa^(2/alpha - 2) (kappa^2 - div H grad)`` is represented by

    K = B + G,   B_ij = <kappa^(2/alpha) phi_j, phi_i>,
                 G_ij = <kappa^(2/alpha-2) H grad phi_j, grad phi_i>,

and the lumped mass ``C_ii = <1, phi_i>`` keeps the precision sparse:
``Q1 = K``, ``Q2 = K C^-1 K``, ``Qa = K C^-1 Q(a-2) C^-1 K``.  The field
itself is ``X = tau^-1 Z`` with ``Z`` having precision ``Qa``, hence
``Q_X = diag(tau) Qa diag(tau)``.  Outer boundary nodes carry the Dirichlet
condition and are removed from the system.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ._cholesky import NotPositiveDefiniteError, SparseCholesky
from .deformation import DeformParams, anisotropy_from_h, eval_h, eval_tau, unit_variance_tau
from .mesh import TriMesh, barrier_anisotropy


class ModelError(ValueError):
    """Non-finite or otherwise invalid model on the mesh."""


class TriangleFields(NamedTuple):
    H: np.ndarray      # (M, 2, 2)
    kappa: np.ndarray  # (M,)
    tau: np.ndarray    # (M,)


class FEMMatrices(NamedTuple):
    C_diag: np.ndarray
    B: sp.csr_matrix
    G: sp.csr_matrix
    K: sp.csr_matrix
    tau_nodes: np.ndarray
    free: np.ndarray


def triangle_fields(mesh: TriMesh, params: DeformParams) -> TriangleFields:
    """Centroid values of ``H``, ``kappa`` and ``tau`` with barrier overrides."""
    cen = mesh.centroids
    _, kappa, H = anisotropy_from_h(eval_h(cen, params))
    tau = np.asarray(eval_tau(cen, params), dtype=float).reshape(-1)
    if mesh.barrier is not None:
        ext = mesh.is_extension
        bar = barrier_anisotropy(*mesh.barrier)
        H = H.copy()
        kappa = kappa.copy()
        H[ext] = bar.H
        kappa[ext] = bar.kappa
        if params.tau_mode == "unit":
            tau = tau.copy()
            tau[ext] = unit_variance_tau(params.alpha, bar.kappa**2)
    return TriangleFields(H=H, kappa=kappa, tau=tau)


def _element_gradients(nodes, tris):
    p = nodes[tris]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    g = np.empty((len(tris), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = y[:, j] - y[:, k]
        g[:, i, 1] = x[:, k] - x[:, j]
    g /= (2.0 * area)[:, None, None]
    return area, g


def element_matrices(nodes, tris, H):
    """Consistent mass and ``H``-weighted stiffness for every triangle.

    Returns ``(area, mass, stiff)`` with ``mass`` and ``stiff`` of shape
    ``(M, 3, 3)``; the lumped mass of a triangle is ``area / 3`` per vertex.
    """
    area, g = _element_gradients(nodes, tris)
    if np.any(area <= 0):
        raise ModelError("mesh has triangles with non-positive area")
    stiff = area[:, None, None] * np.einsum("mia,mab,mjb->mij", g, H, g)
    stiff = 0.5 * (stiff + np.swapaxes(stiff, 1, 2))
    mass = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area, mass, stiff


def _check_fields(fields: TriangleFields) -> None:
    H, kappa, tau = fields
    bad = ~(
        np.isfinite(kappa) & (kappa > 0) & np.isfinite(tau) & (tau > 0)
        & np.all(np.isfinite(H), axis=(1, 2))
    )
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ModelError(
            f"non-finite or non-positive parameters on triangle {i} "
            f"(kappa={float(kappa[i])!r}, tau={float(tau[i])!r})"
        )


class Assembler:
    """Reusable assembly for one mesh.

    Geometry (areas, basis gradients) and the CSR sparsity pattern are
    computed once; each call to :meth:`assemble` only recomputes the
    triangle coefficients, which is what repeated likelihood evaluations need.
    """

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        tris = mesh.triangles
        n = mesh.n_nodes
        self.area, g = _element_gradients(mesh.nodes, tris)
        if np.any(self.area <= 0):
            raise ModelError("mesh has triangles with non-positive area")
        A = self.area[:, None, None]
        # stiffness is linear in (H11, H22, H12)
        self._s11 = A * g[:, :, None, 0] * g[:, None, :, 0]
        self._s22 = A * g[:, :, None, 1] * g[:, None, :, 1]
        self._s12 = A * (g[:, :, None, 0] * g[:, None, :, 1] + g[:, :, None, 1] * g[:, None, :, 0])
        self._mass = A * (np.ones((3, 3)) + np.eye(3)) / 12.0
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        keys = rows.astype(np.int64) * n + cols
        uniq, self._slot = np.unique(keys, return_inverse=True)
        self._indices = (uniq % n).astype(np.int32)
        self._indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        self._nnz = len(uniq)
        flat = tris.ravel()
        self.C_diag = np.bincount(flat, weights=np.repeat(self.area / 3.0, 3), minlength=n)
        self._count = np.bincount(flat, minlength=n)
        self.free = np.setdiff1d(np.arange(n), mesh.boundary_nodes())

    def _csr(self, elem):
        n = self.mesh.n_nodes
        data = np.bincount(self._slot, weights=elem.ravel(), minlength=self._nnz)
        M = sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))
        # summation order differs between (i, j) and (j, i); make symmetry exact
        return ((M + M.T) * 0.5).tocsr()

    def assemble(self, params: DeformParams | None = None, fields: TriangleFields | None = None,
                 alpha: int | None = None) -> FEMMatrices:
        if fields is None:
            if params is None:
                raise ValueError("need params or fields")
            fields = triangle_fields(self.mesh, params)
        if alpha is None:
            alpha = params.alpha if params is not None else 2
        _check_fields(fields)
        H, kappa, tau = fields
        wB = kappa ** (2.0 / alpha)
        wG = kappa ** (2.0 / alpha - 2.0)
        stiff = (H[:, 0, 0, None, None] * self._s11 + H[:, 1, 1, None, None] * self._s22
                 + 0.5 * (H[:, 0, 1] + H[:, 1, 0])[:, None, None] * self._s12)
        B = self._csr(wB[:, None, None] * self._mass)
        G = self._csr(wG[:, None, None] * stiff)
        # nodal tau: geometric mean over incident triangles
        flat = self.mesh.triangles.ravel()
        log_tau = np.bincount(flat, weights=np.repeat(np.log(tau), 3), minlength=self.mesh.n_nodes)
        tau_nodes = np.exp(log_tau / np.maximum(self._count, 1))
        return FEMMatrices(C_diag=self.C_diag.copy(), B=B, G=G, K=B + G,
                           tau_nodes=tau_nodes, free=self.free)

    def precision(self, params: DeformParams, fields: TriangleFields | None = None):
        """Precision of the nodal field on the free nodes, and the matrices."""
        mats = self.assemble(params, fields)
        free = self.free
        Qz = precision(mats.C_diag[free], mats.K[free][:, free], params.alpha)
        Dt = sp.diags(mats.tau_nodes[free])
        Q = (Dt @ Qz @ Dt).tocsr()
        return ((Q + Q.T) * 0.5).tocsr(), mats


def assemble(mesh: TriMesh, params: DeformParams | None = None, fields: TriangleFields | None = None) -> FEMMatrices:
    """Assemble ``C`` (lumped, diagonal), ``B``, ``G`` and ``K = B + G``.

    Matrices are returned on the full node set; ``free`` lists the nodes kept
    after removing the Dirichlet boundary.
    """
    return Assembler(mesh).assemble(params, fields)


def precision(C_diag, K, alpha: int) -> sp.csr_matrix:
    """Precision of the order-``alpha`` recursion, exactly symmetric."""
    if int(alpha) != alpha or alpha < 1:
        raise ValueError("alpha must be a positive integer")
    K = sp.csr_matrix(K)
    Cinv = sp.diags(1.0 / np.asarray(C_diag, dtype=float))
    if alpha % 2:
        Q = K
        level = 1
    else:
        Q = K @ Cinv @ K
        level = 2
    while level < alpha:
        Q = K @ Cinv @ Q @ Cinv @ K
        level += 2
    Q = sp.csr_matrix(Q)
    Q = (Q + Q.T) * 0.5
    Q.sum_duplicates()
    return Q.tocsr()


def observation_matrix(mesh: TriMesh, locations) -> sp.csr_matrix:
    """Sparse ``(J, N)`` matrix of hat-function values at ``locations``."""
    pts = np.atleast_2d(np.asarray(locations, dtype=float))
    tri, w = mesh.locate(pts)
    if np.any(tri < 0):
        i = int(np.flatnonzero(tri < 0)[0])
        raise ModelError(f"location {i} at ({pts[i, 0]:g}, {pts[i, 1]:g}) lies outside the mesh")
    rows = np.repeat(np.arange(len(pts)), 3)
    A = sp.coo_matrix((w.ravel(), (rows, mesh.triangles[tri].ravel())), shape=(len(pts), mesh.n_nodes))
    A = A.tocsr()
    A.eliminate_zeros()
    return A


@dataclass
class PrecisionModel:
    """Assembled GMRF on the free (non-Dirichlet) nodes of a mesh."""

    mesh: TriMesh
    params: DeformParams
    free: np.ndarray
    C_diag: np.ndarray
    K: sp.csr_matrix
    Q: sp.csr_matrix
    tau_nodes: np.ndarray
    factor: SparseCholesky

    @property
    def alpha(self) -> int:
        return self.params.alpha

    @property
    def n_free(self) -> int:
        return len(self.free)

    def to_full(self, x):
        """Embed free-node vectors (last axis) into full-node vectors."""
        x = np.asarray(x)
        out = np.zeros(x.shape[:-1] + (self.mesh.n_nodes,))
        out[..., self.free] = x
        return out

    def sample(self, n_replicates: int, seed=None) -> np.ndarray:
        return sample(self, n_replicates, seed)

    def covariance_column(self, node: int) -> np.ndarray:
        return covariance_column(self, node)

    def marginal_variances(self, nodes=None) -> np.ndarray:
        """Nodal variances; all nodes, or only ``nodes`` (full indexing).

        The full diagonal uses selected inversion.  A subset is obtained
        with one solve per requested node, cheaper when few are needed.
        """
        if nodes is None:
            return self.to_full(self.factor.inverse_diagonal())
        nodes = np.asarray(nodes, dtype=int).reshape(-1)
        pos = np.searchsorted(self.free, nodes)
        pos = np.minimum(pos, self.n_free - 1)
        ok = self.free[pos] == nodes
        out = np.zeros(len(nodes))
        idx = pos[ok]
        for start in range(0, len(idx), 256):
            blk = idx[start:start + 256]
            E = np.zeros((self.n_free, len(blk)))
            E[blk, np.arange(len(blk))] = 1.0
            X = self.factor.solve(E)
            out[np.flatnonzero(ok)[start:start + 256]] = X[blk, np.arange(len(blk))]
        return out

    def correlation_column(self, node: int) -> np.ndarray:
        """Correlation of every node with ``node`` (boundary nodes give 0)."""
        col = self.covariance_column(node)
        var = self.marginal_variances()
        out = np.zeros_like(col)
        ok = var > 0
        if var[node] > 0:
            out[ok] = col[ok] / np.sqrt(var[ok] * var[node])
        return out


def build_model(mesh: TriMesh, params: DeformParams, assembler: Assembler | None = None) -> PrecisionModel:
    """Assemble, build the precision of the field and factorize it."""
    asm = assembler if assembler is not None else Assembler(mesh)
    Q, mats = asm.precision(params)
    free = mats.free
    try:
        factor = SparseCholesky(Q)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(f"precision matrix is not positive definite: {exc}") from exc
    return PrecisionModel(
        mesh=mesh, params=params, free=free, C_diag=mats.C_diag[free],
        K=mats.K[free][:, free], Q=Q,
        tau_nodes=mats.tau_nodes, factor=factor,
    )


def sample(model: PrecisionModel, n_replicates: int, seed=None) -> np.ndarray:
    """``(n, N)`` independent draws of the nodal field (zeros on the boundary)."""
    rng = np.random.default_rng(seed)
    if n_replicates == 0:
        return np.zeros((0, model.mesh.n_nodes))
    out = np.empty((n_replicates, model.mesh.n_nodes))
    chunk = max(1, min(n_replicates, 2_000_000 // max(model.n_free, 1)))
    for start in range(0, n_replicates, chunk):
        stop = min(start + chunk, n_replicates)
        z = rng.standard_normal((model.n_free, stop - start))
        out[start:stop] = model.to_full(model.factor.solve_sqrt_t(z).T)
    return out


def covariance_column(model: PrecisionModel, node: int) -> np.ndarray:
    """Column ``node`` of the nodal covariance ``Q^-1`` (full node indexing)."""
    node = int(node)
    if not 0 <= node < model.mesh.n_nodes:
        raise IndexError(f"node {node} out of range")
    pos = np.searchsorted(model.free, node)
    if pos >= len(model.free) or model.free[pos] != node:
        return np.zeros(model.mesh.n_nodes)
    e = np.zeros(model.n_free)
    e[pos] = 1.0
    return model.to_full(model.factor.solve(e))


def dump_coo(matrix, path) -> None:
    """Write a sparse matrix as ``i j value`` lines (debugging aid)."""
    m = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for i, j, v in zip(m.row, m.col, m.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
