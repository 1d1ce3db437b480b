"""Maximum-likelihood estimation of the deformed Matern GMRF.

The observations are ``y_k = A u_k + e_k`` with ``u ~ N(0, Q^-1)`` on the
mesh nodes and ``e_k ~ N(0, sigma^2 I)``.  With ``Q_post = Q + A^T A / sigma^2``
the log-likelihood of ``K`` replicates of length ``J`` is

    K/2 [log|Q| - J log sigma^2 - log|Q_post| - J log 2 pi]
        - ||Y||^2 / (2 sigma^2) + tr(Z^T Q_post^-1 Z) / (2 sigma^4),

where ``Z Z^T = A^T Y^T Y A``.  ``Z`` has at most ``min(J, K)`` columns and
is formed once per data set, so an evaluation costs two sparse
factorizations and ``min(J, K)`` solves.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import chi2

from ._cholesky import NotPositiveDefiniteError, SparseCholesky
from .data import GridDataset
from .deformation import (
    DeformParams,
    anisotropic_distance,
    anisotropy_from_h,
    eval_basis,
    h_from_anisotropy,
    matern_correlation,
)
from .fem import Assembler, ModelError, observation_matrix
from .mesh import TriMesh

log = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)


# -- likelihood ------------------------------------------------------------------

class LikelihoodProblem:
    """Data, mesh and precomputed quantities for repeated likelihood calls.

    Parameters
    ----------
    values : (K, J) array
        Standardized replicates at ``locations``.
    locations : (J, 2) array
    mesh : TriMesh
    mean : (J,) array, optional
        Known mean subtracted from every replicate (zero by default).
    """

    def __init__(self, values, locations, mesh: TriMesh, mean=None):
        Y = np.atleast_2d(np.asarray(values, dtype=float))
        if not np.all(np.isfinite(Y)):
            raise ValueError("observations must be finite")
        if mean is not None:
            Y = Y - np.asarray(mean, dtype=float)[None, :]
        self.mesh = mesh
        self.assembler = Assembler(mesh)
        free = self.assembler.free
        A = observation_matrix(mesh, locations)[:, free]
        self.A = A.tocsr()
        self.AtA = (A.T @ A).tocsr()
        self.K, self.J = Y.shape
        if self.J != A.shape[0]:
            raise ValueError("number of columns does not match the number of locations")
        self.frob = float(np.sum(Y**2))
        U, S, _ = np.linalg.svd(Y.T, full_matrices=False)
        keep = S > S.max() * 1e-14 if len(S) and S.max() > 0 else np.zeros(len(S), bool)
        self.Z = np.asarray(A.T @ (U[:, keep] * S[keep]))

    @classmethod
    def from_dataset(cls, data: GridDataset, mesh: TriMesh, mean=None) -> "LikelihoodProblem":
        if data.kind != "standardized":
            raise ValueError("the likelihood expects log-standardized data; run log_standardize first")
        return cls(data.ocean_values, data.ocean_locations, mesh, mean=mean)

    def __call__(self, params: DeformParams) -> float:
        s2 = math.exp(2.0 * params.log_sigma_eps)
        if not (np.isfinite(s2) and s2 > 0):
            raise ValueError("the nugget variance must be positive and finite")
        Q, _ = self.assembler.precision(params)
        fQ = SparseCholesky(Q)
        fP = SparseCholesky((Q + self.AtA / s2).tocsc())
        quad = float(np.sum(self.Z * fP.solve(self.Z))) if self.Z.size else 0.0
        J, K = self.J, self.K
        det_part = fQ.logdet() - J * math.log(s2) - fP.logdet() - J * LOG_2PI
        return 0.5 * K * det_part - self.frob / (2 * s2) + quad / (2 * s2 * s2)


def log_likelihood(params: DeformParams, data: GridDataset, mesh: TriMesh) -> float:
    """Replicate log-likelihood of standardized ``data`` under ``params``."""
    return LikelihoodProblem.from_dataset(data, mesh)(params)


# -- local estimation --------------------------------------------------------------

@dataclass(frozen=True)
class LocalEstimate:
    center: np.ndarray
    H_tilde: np.ndarray
    nu: float
    variance: float
    mean: float
    collapsed: bool = False
    log_likelihood: float = float("nan")

    @property
    def kappa(self) -> float:
        return float(np.linalg.det(self.H_tilde) ** -0.5)

    @property
    def H(self) -> np.ndarray:
        return self.kappa**2 * self.H_tilde

    @property
    def practical_range(self) -> float:
        """Shortest directional practical range ``sqrt(8 nu lambda_min)``."""
        return float(np.sqrt(8 * self.nu * np.linalg.eigvalsh(self.H_tilde)[0]))


@dataclass
class LocalEstimates:
    estimates: list
    skipped: list = field(default_factory=list)
    spacing: float = float("nan")

    def __len__(self):
        return len(self.estimates)

    def __iter__(self):
        return iter(self.estimates)

    def __getitem__(self, i):
        return self.estimates[i]

    @property
    def n_collapsed(self) -> int:
        return sum(e.collapsed for e in self.estimates)

    def nu_histogram(self, bins=10):
        return np.histogram([e.nu for e in self.estimates], bins=bins)

    def range_field(self, floor: float | None = None):
        """Nearest-neighbourhood practical range, usable as a meshing range field."""
        from scipy.spatial import cKDTree

        good = [e for e in self.estimates if not e.collapsed] or list(self.estimates)
        if not good:
            raise ValueError("no local estimates available")
        centers = np.array([e.center for e in good])
        ranges = np.array([e.practical_range for e in good])
        if floor is not None:
            ranges = np.maximum(ranges, floor)
        tree = cKDTree(centers)

        def rf(points):
            _, idx = tree.query(np.atleast_2d(points))
            return ranges[idx]

        return rf


def _local_negloglik(theta, diffs, S, K):
    h = theta[:3]
    nu = math.exp(theta[3])
    Ht, _, _ = anisotropy_from_h(h)
    d = anisotropic_distance(diffs, Ht)
    R = matern_correlation(d, nu) + 1e-8 * np.eye(len(S))
    try:
        cf = cho_factor(R, lower=True)
    except np.linalg.LinAlgError:
        return 1e10
    logdet = 2 * np.sum(np.log(np.diag(cf[0])))
    return 0.5 * K * (logdet + np.trace(cho_solve(cf, S)))


def fit_local_matern(values, locations, nu_bounds=(0.1, 6.0), spacing: float | None = None):
    """Fit ``(H_tilde, nu)`` of a stationary Matern correlation to a small patch.

    Each location is first standardized by its own sample mean and variance.
    Returns ``(H_tilde, nu, loglik, mean, variance)``.
    """
    Y = np.asarray(values, dtype=float)
    K, n = Y.shape
    mean = Y.mean(axis=0)
    var = Y.var(axis=0, ddof=1)
    Ys = (Y - mean) / np.sqrt(var)
    S = Ys.T @ Ys / K
    loc = np.asarray(locations, dtype=float)
    diffs = loc[:, None, :] - loc[None, :, :]
    if spacing is None:
        dd = np.linalg.norm(diffs, axis=-1)
        spacing = float(dd[dd > 0].min())
    lam0 = math.log(spacing**2 / 2.0)
    lo, hi = math.log((0.05 * spacing) ** 2), math.log((50 * spacing) ** 2)
    bounds = [(lo, hi), (lo, hi), (-6.0, 6.0), (math.log(nu_bounds[0]), math.log(nu_bounds[1]))]
    best = None
    for nu0 in (1.0, 2.0):
        # same practical range for each starting smoothness: lambda ~ 1/nu
        x0 = np.array([lam0 - math.log(nu0), lam0 - math.log(nu0), 0.0, math.log(nu0)])
        res = minimize(_local_negloglik, x0, args=(diffs, S, K), method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    Ht, _, _ = anisotropy_from_h(best.x[:3])
    return Ht, math.exp(best.x[3]), -best.fun, float(mean.mean()), float(var.mean())


def local_estimates(data: GridDataset, *, window: int = 3, stride: int = 1,
                    nu_bounds=(0.1, 6.0)) -> LocalEstimates:
    """Stationary Matern fits on every ``window x window`` block of grid cells.

    Blocks containing land are skipped and recorded.  An estimate whose
    practical range falls below the grid spacing is flagged ``collapsed``
    (typical of white noise).
    """
    ny, nx = data.shape
    if ny < window or nx < window:
        raise ValueError(f"grid {ny}x{nx} is smaller than the {window}x{window} window")
    vals = data.replicates
    if data.kind == "raw":
        with np.errstate(invalid="ignore"):
            vals = np.log(vals)
    if data.n_replicates < 3:
        raise ValueError("local estimation needs at least three replicates")
    land = data.land_mask.reshape(ny, nx)
    locs = data.locations
    spacing = float(min(np.min(np.diff(data.x)) if nx > 1 else np.inf,
                        np.min(np.diff(data.y)) if ny > 1 else np.inf))
    out, skipped = [], []
    half = window // 2
    for iy in range(half, ny - (window - half - 1), stride):
        for ix in range(half, nx - (window - half - 1), stride):
            rows = np.arange(iy - half, iy - half + window)
            cols = np.arange(ix - half, ix - half + window)
            idx = (rows[:, None] * nx + cols[None, :]).ravel()
            center = locs[iy * nx + ix]
            if land[np.ix_(rows, cols)].any():
                skipped.append(center)
                continue
            Ht, nu, ll, mean, var = fit_local_matern(vals[:, idx], locs[idx], nu_bounds, spacing)
            est = LocalEstimate(center=center, H_tilde=Ht, nu=nu, variance=var, mean=mean,
                                log_likelihood=ll)
            est = LocalEstimate(**{**est.__dict__, "collapsed": est.practical_range < spacing})
            out.append(est)
    result = LocalEstimates(out, skipped, spacing)
    if result.n_collapsed:
        log.warning("%d of %d local estimates collapsed below the grid spacing",
                    result.n_collapsed, len(out))
    return result


def select_alpha(estimates: Sequence[LocalEstimate], dim: int = 2) -> int:
    """``round(median nu + d/2)``, ignoring collapsed neighbourhoods when possible."""
    good = [e.nu for e in estimates if not e.collapsed] or [e.nu for e in estimates]
    if not good:
        raise ValueError("no local estimates to select alpha from")
    return max(1, int(math.floor(float(np.median(good)) + dim / 2 + 0.5)))


def merge_local(estimates: Sequence[LocalEstimate], k: int, bbox, origin=(0.0, 0.0), *,
                alpha: int | None = None, log_sigma_eps: float = math.log(0.1),
                include_collapsed: bool = False) -> tuple[DeformParams, float]:
    """Least-squares cosine expansion of the local ``h`` values.

    Returns the starting parameters and the residual norm of the fit.
    """
    ests = [e for e in estimates if include_collapsed or not e.collapsed] or list(estimates)
    n_basis = (k + 1) ** 2
    if len(ests) < n_basis:
        raise ValueError(
            f"{len(ests)} local estimates cannot determine {n_basis} coefficients; use a smaller k"
        )
    centers = np.array([e.center for e in ests])
    Phi = eval_basis(centers, k, bbox, origin)
    if np.linalg.matrix_rank(Phi) < n_basis:
        raise ValueError("local estimate locations give a rank-deficient design; use a smaller k")
    targets = h_from_anisotropy(np.array([e.H_tilde for e in ests]))
    coef, *_ = np.linalg.lstsq(Phi, targets, rcond=None)
    resid = float(np.linalg.norm(Phi @ coef - targets))
    beta = coef.T.reshape(3, k + 1, k + 1)
    if alpha is None:
        alpha = select_alpha(ests)
    return DeformParams(beta=beta, bbox=bbox, origin=origin, alpha=alpha, log_sigma_eps=log_sigma_eps), resid


# -- global fit ----------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    k: int = 4
    alpha: int | str = "select"
    max_iterations: int = 200
    gtol: float = 1e-5
    nugget_init: float = 0.1
    stationary_only: bool = False
    fd_step: float = 1e-4
    threads: int = 1

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if not (self.gtol > 0 and self.fd_step > 0):
            raise ValueError("tolerances must be positive")
        if self.alpha != "select" and (int(self.alpha) != self.alpha or int(self.alpha) < 1):
            raise ValueError("alpha must be a positive integer or 'select'")


@dataclass
class FitResult:
    params: DeformParams
    log_likelihood: float
    iterations: int
    converged: bool
    local_estimates: LocalEstimates | None = None
    trace: list = field(default_factory=list)
    n_parameters: int = 0
    n_evaluations: int = 0
    message: str = ""
    stationary: bool = False

    def report(self) -> dict:
        return {
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_parameters": self.n_parameters,
            "n_evaluations": self.n_evaluations,
            "stationary": self.stationary,
            "message": self.message,
            "trace": list(self.trace),
            "alpha": self.params.alpha,
            "k": self.params.k,
        }


def count_parameters(k: int, stationary: bool = False, count_smoothness: bool = False) -> int:
    """Free parameters: anisotropy coefficients plus the nugget.

    ``count_smoothness`` adds one for the smoothness selected from the data.
    """
    n = 3 if stationary else 3 * (k + 1) ** 2
    return n + 1 + int(count_smoothness)


def _pack(params: DeformParams, stationary: bool) -> np.ndarray:
    b = params.beta[:, 0, 0] if stationary else params.beta.ravel()
    return np.concatenate([b, [params.log_sigma_eps]])


def _unpack(theta, template: DeformParams, stationary: bool) -> DeformParams:
    k = template.k
    if stationary:
        beta = np.zeros((3, k + 1, k + 1))
        beta[:, 0, 0] = theta[:3]
    else:
        beta = np.asarray(theta[:-1]).reshape(3, k + 1, k + 1)
    return template.with_(beta=beta, log_sigma_eps=float(theta[-1]))


def fit(data, mesh: TriMesh, config: FitConfig, init: DeformParams,
        problem: LikelihoodProblem | None = None) -> FitResult:
    """Quasi-Newton maximization of the log-likelihood.

    ``data`` is a standardized :class:`GridDataset` (or pass a ready
    ``problem``).  Gradients use central differences with step
    ``fd_step * (1 + |theta_i|)``.
    """
    if problem is None:
        problem = LikelihoodProblem.from_dataset(data, mesh)
    stationary = config.stationary_only
    if config.alpha != "select":
        init = init.with_(alpha=int(config.alpha))
    if init.k != config.k:
        init = _resize(init, config.k)
    theta0 = _pack(init, stationary)
    template = init
    scale = 1.0 / (problem.K * problem.J)
    n_eval = [0]
    cache = {}

    def loglik(theta) -> float:
        key = np.asarray(theta, dtype=float).tobytes()
        if key in cache:
            return cache[key]
        n_eval[0] += 1
        try:
            val = problem(_unpack(theta, template, stationary))
        except (NotPositiveDefiniteError, ModelError, FloatingPointError) as exc:
            log.debug("likelihood evaluation failed: %s", exc)
            val = -np.inf
        if not np.isfinite(val):
            val = -np.inf
        cache[key] = val
        return val

    l0 = loglik(theta0)
    if not np.isfinite(l0):
        raise ValueError("log-likelihood is not finite at the initial parameters")
    penalty = abs(l0) * 10 + 1e6

    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    def fg(theta):
        f0 = loglik(theta)
        steps = config.fd_step * (1 + np.abs(theta))
        pts = []
        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = steps[i]
            pts += [theta + e, theta - e]
        vals = list(executor.map(loglik, pts)) if executor else [loglik(p) for p in pts]
        vals = np.array(vals).reshape(-1, 2)
        g = (vals[:, 0] - vals[:, 1]) / (2 * steps)
        g = np.where(np.isfinite(g), g, 0.0)
        f = -f0 if np.isfinite(f0) else penalty
        return f * scale, -g * scale

    trace = [l0]

    def callback(xk):
        trace.append(loglik(xk))

    hb = 50.0
    bounds = [(-hb, hb)] * (len(theta0) - 1) + [(math.log(1e-4), math.log(10.0))]
    try:
        res = minimize(fg, theta0, jac=True, method="L-BFGS-B", bounds=bounds, callback=callback,
                       options={"maxiter": config.max_iterations, "gtol": config.gtol, "ftol": 1e-12})
    finally:
        if executor:
            executor.shutdown()
    best = loglik(res.x)
    params = _unpack(res.x, template, stationary)
    gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else float("inf")
    converged = bool(res.status == 0 or gnorm < config.gtol)
    if res.nit >= config.max_iterations:
        converged = False
    return FitResult(
        params=params, log_likelihood=float(best), iterations=int(res.nit), converged=converged,
        trace=[float(t) for t in trace], n_parameters=count_parameters(config.k, stationary),
        n_evaluations=n_eval[0], message=str(res.message), stationary=stationary,
    )


def _resize(params: DeformParams, k: int) -> DeformParams:
    """Zero-pad or truncate the coefficient grids to order ``k``."""
    beta = np.zeros((3, k + 1, k + 1))
    m = min(k, params.k) + 1
    beta[:, :m, :m] = params.beta[:, :m, :m]
    lt = None
    if params.log_tau_beta is not None:
        lt = np.zeros((k + 1, k + 1))
        lt[:m, :m] = params.log_tau_beta[:m, :m]
    return params.with_(beta=beta, log_tau_beta=lt)


# -- likelihood-ratio test -------------------------------------------------------

@dataclass(frozen=True)
class LRTResult:
    lam: float
    critical_value: float
    reject: bool
    df: int
    significance: float

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "critical_value": self.critical_value, "reject": self.reject,
                "df": self.df, "significance": self.significance}


def lrt_critical_value(df: int, significance: float) -> float:
    return -0.5 * float(chi2.ppf(1.0 - significance, df))


def likelihood_ratio_test(l_stationary: float, l_nonstationary: float, df: int,
                          significance: float = 1e-4) -> LRTResult:
    """Reject stationarity when ``l_stat - l_nonstat`` falls below ``-chi2_df(1-p)/2``."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if not 0 < significance < 1:
        raise ValueError("significance must lie in (0, 1)")
    lam = float(l_stationary - l_nonstationary)
    c = lrt_critical_value(df, significance)
    return LRTResult(lam=lam, critical_value=c, reject=bool(lam < c), df=int(df), significance=significance)
