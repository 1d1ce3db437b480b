"""scikit-learn style wrappers.

Rows of ``X`` are replicates and columns are grid cells in row-major order
(``NaN`` columns are land), matching :class:`deformspde.data.GridDataset`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from .data import GridDataset
from .deformation import DeformParams
from .estimation import FitConfig, LikelihoodProblem, fit, local_estimates, merge_local
from .fem import build_model
from .mesh import build_mesh
from .synthetic import rectangle, sample_observations


def _land_columns(X):
    nan = np.isnan(X)
    land = nan.all(axis=0)
    if np.any(nan[:, ~land]):
        raise ValueError("missing values are only allowed in columns that are missing throughout")
    return land


class LogStandardizer(TransformerMixin, BaseEstimator):
    """Per-column ``(log(x) - mean) / sd`` with the ``n - 1`` sd convention.

    Parameters
    ----------
    log : bool, default=True
        Take logarithms first (data must then be positive).
    """

    def __init__(self, log: bool = True):
        self.log = log

    def _prep(self, X):
        X = check_array(X, ensure_all_finite="allow-nan", dtype=float)
        if self.log:
            ok = ~np.isnan(X)
            if np.any(X[ok] <= 0):
                raise ValueError("log standardization needs positive values")
            X = np.where(ok, np.log(np.where(ok, X, 1.0)), np.nan)
        return X

    def fit(self, X, y=None):
        Z = self._prep(X)
        if Z.shape[0] < 2:
            raise ValueError("need at least two rows")
        land = _land_columns(Z)
        mean = np.full(Z.shape[1], np.nan)
        sd = np.full(Z.shape[1], np.nan)
        mean[~land] = Z[:, ~land].mean(axis=0)
        sd[~land] = Z[:, ~land].std(axis=0, ddof=1)
        if np.any(sd[~land] <= 0):
            raise ValueError(f"column {int(np.flatnonzero(~land)[np.argmin(sd[~land])])} has zero variance")
        self.mean_, self.sd_, self.land_mask_ = mean, sd, land
        self.n_features_in_ = Z.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        Z = self._prep(X)
        if Z.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {Z.shape[1]}")
        return (Z - self.mean_) / self.sd_

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        Z = check_array(Z, ensure_all_finite="allow-nan", dtype=float)
        X = Z * self.sd_ + self.mean_
        return np.exp(X) if self.log else X


class DeformedMaternGMRF(BaseEstimator):
    """Non-stationary anisotropic Matern field fitted by maximum likelihood.

    Parameters
    ----------
    grid_x, grid_y : array-like
        Grid coordinates; ``X`` has ``len(grid_x) * len(grid_y)`` columns.
    k : int
        Order of the cosine expansions.
    alpha : int or "select"
        Smoothness; ``"select"`` derives it from local estimates.
    stationary : bool
        Restrict the anisotropy to constants.
    extension_factor, edge_fraction : float
        Mesh buffer width (in minimum ranges) and edge-to-range divisor.
    max_iter : int
    threads : int
    """

    def __init__(self, grid_x=None, grid_y=None, k: int = 4, alpha="select", stationary: bool = False,
                 extension_factor: float = 2.0, edge_fraction: float = 5.0, max_iter: int = 200,
                 threads: int = 1):
        self.grid_x = grid_x
        self.grid_y = grid_y
        self.k = k
        self.alpha = alpha
        self.stationary = stationary
        self.extension_factor = extension_factor
        self.edge_fraction = edge_fraction
        self.max_iter = max_iter
        self.threads = threads

    def _dataset(self, X) -> GridDataset:
        if self.grid_x is None or self.grid_y is None:
            raise ValueError("grid_x and grid_y must be set")
        X = check_array(X, ensure_all_finite="allow-nan", dtype=float)
        J = len(self.grid_x) * len(self.grid_y)
        if X.shape[1] != J:
            raise ValueError(f"expected {J} columns for the {len(self.grid_y)}x{len(self.grid_x)} grid, got {X.shape[1]}")
        land = _land_columns(X)
        return GridDataset(x=self.grid_x, y=self.grid_y, replicates=X, land_mask=land, kind="standardized")

    def fit(self, X, y=None):
        """Fit to standardized replicates ``X`` of shape ``(K, J)``."""
        data = self._dataset(X)
        self.local_estimates_ = local_estimates(data)
        alpha = None if self.alpha == "select" else int(self.alpha)
        init, self.merge_residual_ = merge_local(self.local_estimates_, self.k, data.bbox, data.origin, alpha=alpha)
        domain = rectangle(data.x, data.y)
        self.mesh_ = build_mesh(domain, self.local_estimates_.range_field(), self.extension_factor,
                                edge_fraction=self.edge_fraction)
        cfg = FitConfig(k=self.k, alpha=init.alpha, max_iterations=self.max_iter,
                        stationary_only=self.stationary, threads=self.threads)
        self._problem = LikelihoodProblem.from_dataset(data, self.mesh_)
        self.result_ = fit(data, self.mesh_, cfg, init, problem=self._problem)
        self.params_ = self.result_.params
        self.land_mask_ = data.land_mask
        self.n_features_in_ = X.shape[1] if hasattr(X, "shape") else data.replicates.shape[1]
        return self

    def score(self, X, y=None) -> float:
        """Log-likelihood of ``X`` under the fitted model."""
        check_is_fitted(self, "params_")
        data = self._dataset(X)
        return LikelihoodProblem.from_dataset(data, self.mesh_)(self.params_)

    def sample(self, n_samples: int = 1, random_state=None, nugget: bool = True) -> np.ndarray:
        """Draw ``(n_samples, J)`` replicates (land columns NaN)."""
        check_is_fitted(self, "params_")
        rs = check_random_state(random_state)
        seed = int(rs.randint(0, 2**31 - 1))
        model = build_model(self.mesh_, self.params_)
        X, Y = np.meshgrid(np.asarray(self.grid_x, float), np.asarray(self.grid_y, float))
        locs = np.column_stack([X.ravel(), Y.ravel()])
        out = np.full((n_samples, len(locs)), np.nan)
        out[:, ~self.land_mask_] = sample_observations(model, locs[~self.land_mask_], n_samples, seed, nugget)
        return out

    def correlation(self, point) -> np.ndarray:
        """Model correlation between the mesh node nearest ``point`` and every node."""
        check_is_fitted(self, "params_")
        model = build_model(self.mesh_, self.params_)
        node = int(np.argmin(np.linalg.norm(self.mesh_.nodes - np.asarray(point, float), axis=1)))
        return model.correlation_column(node)

    @property
    def deform_params_(self) -> DeformParams:
        check_is_fitted(self, "params_")
        return self.params_
