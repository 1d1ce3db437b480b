"""Spatially varying anisotropy fields built from cosine expansions.

Three smooth functions ``h1, h2, h3`` are expanded in the tensor cosine basis
``cos(n*pi*x/T) * cos(p*pi*y/S)`` over the observation bounding box and mapped
to an always positive-definite 2x2 matrix ``H_tilde``::

    H_tilde = [[exp(h1),                 rho * exp((h1+h2)/2)],
               [rho * exp((h1+h2)/2),    exp(h2)             ]],
    rho = 2*sigmoid(h3) - 1,
    kappa = det(H_tilde)^(-1/2),   H = kappa^2 * H_tilde.

Basis coefficients are stored as ``(k+1, k+1)`` grids indexed ``[n, p]``;
flattened vectors use row-major order (``n`` outer, ``p`` inner).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import gammaln, kv

# |h_i| clamp; keeps exp(h) finite for any coefficient vector.
H_BOUND = 50.0


@dataclass(frozen=True)
class DeformParams:
    """All parameters of the deformed Matern model.

    ``tau`` and ``log_tau_beta`` select the precision scaling: with
    ``log_tau_beta`` set, ``log tau(s)`` follows the cosine expansion; with
    only ``tau`` set it is constant; with neither, tau is chosen pointwise so
    the field has unit marginal variance.
    """

    beta: np.ndarray
    bbox: tuple[float, float]
    alpha: int = 2
    log_sigma_eps: float = float(np.log(0.1))
    tau: float | None = None
    log_tau_beta: np.ndarray | None = None
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 3 or beta.shape[0] != 3 or beta.shape[1] != beta.shape[2]:
            raise ValueError(f"beta must have shape (3, k+1, k+1), got {beta.shape}")
        object.__setattr__(self, "beta", beta)
        if self.log_tau_beta is not None:
            lt = np.array(self.log_tau_beta, dtype=float)
            if lt.shape != beta.shape[1:]:
                raise ValueError("log_tau_beta must share the beta grid shape")
            object.__setattr__(self, "log_tau_beta", lt)
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ValueError(f"alpha must be a positive integer, got {self.alpha}")
        object.__setattr__(self, "alpha", int(self.alpha))
        T, S = (float(v) for v in self.bbox)
        if not (T > 0 and S > 0):
            raise ValueError(f"bounding box sides must be positive, got {self.bbox}")
        object.__setattr__(self, "bbox", (T, S))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if self.tau is not None and not self.tau > 0:
            raise ValueError("constant tau must be positive")

    @property
    def k(self) -> int:
        return self.beta.shape[1] - 1

    @property
    def nu(self) -> float:
        """Matern smoothness for a planar field, ``alpha - 1``."""
        return self.alpha - 1.0

    @property
    def sigma_eps(self) -> float:
        return float(np.exp(self.log_sigma_eps))

    @property
    def tau_mode(self) -> str:
        if self.log_tau_beta is not None:
            return "basis"
        return "constant" if self.tau is not None else "unit"

    @classmethod
    def identity(cls, k: int, bbox, **kwargs) -> "DeformParams":
        return cls(beta=np.zeros((3, k + 1, k + 1)), bbox=bbox, **kwargs)

    @classmethod
    def constant(cls, h, k: int, bbox, **kwargs) -> "DeformParams":
        """Stationary parameters with constant ``(h1, h2, h3)``."""
        beta = np.zeros((3, k + 1, k + 1))
        beta[:, 0, 0] = h
        return cls(beta=beta, bbox=bbox, **kwargs)

    def with_(self, **changes) -> "DeformParams":
        return replace(self, **changes)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "deformspde-params",
            "version": 1,
            "basis_order": self.k,
            "basis_ordering": "row-major [n][p]: cos(n*pi*(x-x0)/T)*cos(p*pi*(y-y0)/S)",
            "beta": self.beta.tolist(),
            "bbox": list(self.bbox),
            "origin": list(self.origin),
            "alpha": self.alpha,
            "log_sigma_eps": self.log_sigma_eps,
            "tau": self.tau,
            "log_tau_beta": None if self.log_tau_beta is None else self.log_tau_beta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeformParams":
        if d.get("format") != "deformspde-params":
            raise ValueError("not a deformspde parameter file")
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            bbox=tuple(d["bbox"]),
            origin=tuple(d.get("origin", (0.0, 0.0))),
            alpha=int(d["alpha"]),
            log_sigma_eps=float(d["log_sigma_eps"]),
            tau=d.get("tau"),
            log_tau_beta=None if d.get("log_tau_beta") is None else np.asarray(d["log_tau_beta"]),
        )


def save_params(params: DeformParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n")


def load_params(path) -> DeformParams:
    return DeformParams.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LocalAnisotropy:
    H_tilde: np.ndarray
    kappa: float
    H: np.ndarray
    tau: float = field(default=float("nan"))


def eval_basis(s, k: int, bbox, origin=(0.0, 0.0)) -> np.ndarray:
    """Cosine basis at one point or an ``(n, 2)`` array of points.

    Returns a vector of length ``(k+1)**2`` (or an ``(n, (k+1)**2)`` matrix),
    entry ``n*(k+1) + p`` being ``cos(n*pi*x/T) * cos(p*pi*y/S)``.
    """
    pts = np.asarray(s, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    T, S = bbox
    orders = np.arange(k + 1)
    cx = np.cos(np.pi * np.outer(pts[:, 0] - origin[0], orders) / T)
    cy = np.cos(np.pi * np.outer(pts[:, 1] - origin[1], orders) / S)
    out = (cx[:, :, None] * cy[:, None, :]).reshape(len(pts), -1)
    return out[0] if single else out


def eval_h(s, params: DeformParams) -> np.ndarray:
    """``(h1, h2, h3)`` at a point (shape ``(3,)``) or points (``(n, 3)``)."""
    phi = eval_basis(s, params.k, params.bbox, params.origin)
    return phi @ params.beta.reshape(3, -1).T


def anisotropy_from_h(h):
    """Vectorized map ``(..., 3)`` h-values to ``(H_tilde, kappa, H)``."""
    h = np.clip(np.asarray(h, dtype=float), -H_BOUND, H_BOUND)
    h1, h2, h3 = h[..., 0], h[..., 1], h[..., 2]
    # 2*sigmoid(x) - 1 == tanh(x/2); 1 - tanh^2 == sech^2 avoids cancellation
    rho = np.tanh(0.5 * h3)
    half = 0.5 * (h1 + h2)
    Ht = np.empty(h.shape[:-1] + (2, 2))
    Ht[..., 0, 0] = np.exp(h1)
    Ht[..., 1, 1] = np.exp(h2)
    Ht[..., 0, 1] = Ht[..., 1, 0] = rho * np.exp(half)
    # kappa = det(H_tilde)^(-1/2) = exp(-(h1+h2)/2) * cosh(h3/2)
    kappa = np.exp(-half) * np.cosh(0.5 * h3)
    H = (kappa**2)[..., None, None] * Ht
    return Ht, kappa, H


def h_from_anisotropy(H_tilde) -> np.ndarray:
    """Invert :func:`anisotropy_from_h` for SPD ``H_tilde`` (shape ``(..., 2, 2)``)."""
    Ht = np.asarray(H_tilde, dtype=float)
    h1 = np.log(Ht[..., 0, 0])
    h2 = np.log(Ht[..., 1, 1])
    rho = Ht[..., 0, 1] / np.sqrt(Ht[..., 0, 0] * Ht[..., 1, 1])
    h3 = 2.0 * np.arctanh(np.clip(rho, -1 + 1e-15, 1 - 1e-15))
    return np.stack([h1, h2, h3], axis=-1)


def eval_anisotropy(s, params: DeformParams) -> LocalAnisotropy:
    Ht, kappa, H = anisotropy_from_h(eval_h(s, params))
    return LocalAnisotropy(H_tilde=Ht, kappa=float(kappa), H=H, tau=float(eval_tau(s, params)))


def unit_variance_tau(alpha: int, det_H=1.0):
    """Tau giving unit marginal variance for the deformed operator.

    In the stationary case the field variance is
    ``Gamma(alpha-1) / (Gamma(alpha) * 4*pi * tau^2 * sqrt(det H))``.
    """
    if alpha <= 1:
        raise ValueError("unit marginal variance needs alpha > 1 (finite variance)")
    log_t0 = 0.5 * (gammaln(alpha - 1) - gammaln(alpha) - np.log(4 * np.pi))
    return np.exp(log_t0) * np.asarray(det_H, dtype=float) ** -0.25


def eval_tau(s, params: DeformParams):
    """Precision scaling tau at a point or array of points."""
    pts = np.asarray(s, dtype=float)
    mode = params.tau_mode
    if mode == "basis":
        return np.exp(eval_basis(pts, params.k, params.bbox, params.origin) @ params.log_tau_beta.ravel())
    if mode == "constant":
        return np.full(pts.shape[:-1], params.tau) if pts.ndim > 1 else params.tau
    _, kappa, _ = anisotropy_from_h(eval_h(pts, params))
    # det H = kappa^2
    return unit_variance_tau(params.alpha, kappa**2)


def practical_range(s, params: DeformParams) -> np.ndarray:
    """Shortest directional practical correlation range at the given points.

    Correlation decays as ``C_nu(sqrt(d^T H_tilde^{-1} d))`` so the range along
    the eigen-direction with eigenvalue ``lam`` is ``sqrt(8 nu * lam)``.
    """
    if params.nu <= 0:
        raise ValueError("practical range needs nu > 0 (alpha >= 2)")
    Ht, _, _ = anisotropy_from_h(eval_h(s, params))
    lam_min = np.linalg.eigvalsh(Ht)[..., 0]
    return np.sqrt(8.0 * params.nu * lam_min)


def matern_correlation(d, nu: float) -> np.ndarray:
    """Matern correlation ``2^(1-nu)/Gamma(nu) d^nu K_nu(d)`` (unit range parameter)."""
    d = np.abs(np.asarray(d, dtype=float))
    out = np.ones_like(d)
    pos = d > 0
    dp = d[pos]
    out[pos] = np.exp((1 - nu) * np.log(2) - gammaln(nu) + nu * np.log(dp)) * kv(nu, dp)
    # K_nu underflows far out; correlation there is 0 for all practical purposes
    out[pos & ~np.isfinite(out)] = 0.0
    return out


def anisotropic_distance(diff, H_tilde) -> np.ndarray:
    """``sqrt(d^T H_tilde^-1 d)`` for ``(..., 2)`` offsets and a fixed ``H_tilde``."""
    diff = np.asarray(diff, dtype=float)
    Hi = np.linalg.inv(np.asarray(H_tilde, dtype=float))
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", diff, Hi, diff), 0.0))
