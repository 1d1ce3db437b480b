"""Simulated data sets from a known model."""
from __future__ import annotations

import numpy as np

from .data import GridDataset
from .deformation import DeformParams, practical_range
from .fem import PrecisionModel, build_model, observation_matrix
from .mesh import TriMesh, build_mesh


def rectangle(x, y) -> np.ndarray:
    """Corner polygon of the box spanned by coordinate vectors ``x``, ``y``."""
    x0, x1 = float(np.min(x)), float(np.max(x))
    y0, y1 = float(np.min(y)), float(np.max(y))
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def mesh_for_params(params: DeformParams, domain, extension_factor: float = 2.0,
                    edge_fraction: float = 5.0, barrier: bool = False) -> TriMesh:
    """Mesh a domain using the practical range implied by ``params``."""
    from .mesh import apply_barrier

    mesh = build_mesh(domain, lambda p: practical_range(p, params), extension_factor,
                      edge_fraction=edge_fraction)
    if barrier:
        mesh = apply_barrier(mesh, params.nu, mesh.r_min)
    return mesh


def sample_observations(model: PrecisionModel, locations, n: int, seed=None, nugget: bool = True) -> np.ndarray:
    """``(n, J)`` draws of the field at ``locations`` plus optional nugget noise."""
    rng = np.random.default_rng(seed)
    A = observation_matrix(model.mesh, locations)
    # one child generator per stream keeps the field draws independent of the nugget
    field_seed, noise_seed = rng.integers(0, 2**63 - 1, size=2)
    X = model.sample(n, int(field_seed))
    Y = (A @ X.T).T if n else np.zeros((0, len(np.atleast_2d(locations))))
    if nugget and n:
        Y = Y + model.params.sigma_eps * np.random.default_rng(int(noise_seed)).standard_normal(Y.shape)
    return Y


def simulate_dataset(params: DeformParams, x, y, n: int, seed=None, *, mesh: TriMesh | None = None,
                     land_mask=None, nugget: bool = True, model: PrecisionModel | None = None) -> GridDataset:
    """Standardized-scale replicates of the model on the grid ``x`` by ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model is None:
        if mesh is None:
            mesh = mesh_for_params(params, rectangle(x, y))
        model = build_model(mesh, params)
    J = len(x) * len(y)
    mask = np.zeros(J, bool) if land_mask is None else np.asarray(land_mask, bool).reshape(J)
    X, Yg = np.meshgrid(x, y)
    locs = np.column_stack([X.ravel(), Yg.ravel()])
    vals = np.full((n, J), np.nan)
    if n:
        vals[:, ~mask] = sample_observations(model, locs[~mask], n, seed, nugget)
    return GridDataset(x=x, y=y, replicates=vals, land_mask=mask, kind="standardized")


def smooth_nonstationary(bbox, origin=(0.0, 0.0), alpha: int = 2, sigma_eps: float = 0.1) -> DeformParams:
    """A first-order model whose range and anisotropy drift smoothly across the box."""
    beta = np.zeros((3, 2, 2))
    beta[0, 0, 0], beta[0, 1, 0] = 0.6, 0.35
    beta[1, 0, 0], beta[1, 0, 1] = 0.4, -0.3
    beta[2, 1, 1] = 0.6
    return DeformParams(beta=beta, bbox=bbox, origin=origin, alpha=alpha, log_sigma_eps=float(np.log(sigma_eps)))
