"""Non-stationary anisotropic Matern fields for significant wave height.

The field is a deformed Matern SPDE discretized with linear finite elements
into a sparse-precision Gaussian Markov random field.
"""

__version__ = "0.1.0"

from .data import (
    DataFormatError,
    GridDataset,
    MarginalStats,
    load_grid_dataset,
    log_standardize,
    split_alternating,
    write_grid_dataset,
)
from .deformation import DeformParams, eval_anisotropy, eval_h, load_params, practical_range, save_params
from .dspace import DspaceMap, detect_folds, reconstruct_dspace
from .estimation import (
    FitConfig,
    FitResult,
    LikelihoodProblem,
    fit,
    likelihood_ratio_test,
    local_estimates,
    log_likelihood,
    merge_local,
)
from .estimators import DeformedMaternGMRF, LogStandardizer
from .fem import PrecisionModel, assemble, build_model, observation_matrix, precision
from .mesh import MeshError, TriMesh, build_mesh, read_mesh, write_mesh
from .risk import (
    Route,
    ShipConstants,
    accumulated_damage,
    derivative_variance,
    exceedance_bound,
    fatigue_rate,
    sigma_wdot,
)

__all__ = [
    "DataFormatError", "GridDataset", "MarginalStats", "load_grid_dataset", "log_standardize",
    "split_alternating", "write_grid_dataset", "DeformParams", "eval_anisotropy", "eval_h",
    "load_params", "practical_range", "save_params", "DspaceMap", "detect_folds", "reconstruct_dspace",
    "FitConfig", "FitResult", "LikelihoodProblem", "fit", "likelihood_ratio_test", "local_estimates",
    "log_likelihood", "merge_local", "DeformedMaternGMRF", "LogStandardizer", "PrecisionModel",
    "assemble", "build_model", "observation_matrix", "precision", "MeshError", "TriMesh", "build_mesh",
    "read_mesh", "write_mesh", "Route", "ShipConstants", "accumulated_damage", "exceedance_bound",
    "fatigue_rate", "sigma_wdot", "derivative_variance",
]
