"""MM-estimation of the multivariate linear model ``y_i = B' x_i + u_i``.

The scale ``sigma`` is fixed once from the initial estimate's Mahalanobis
norms; afterwards ``(B, Gamma)`` are updated by iteratively reweighted least
squares with the efficiency kernel ``rho_1``, which never increases

    S(B, Gamma) = sum_i rho_1(d_i(B, Gamma) / sigma),   det(Gamma) = 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .calibration import lookup_c0, lookup_c1
from .exceptions import ContractError, RankDeficiencyError
from .initial import SCandidate, SConfig, s_estimate
from .linalg import (Dataset, det_normalize, exact_rows, mahalanobis_norms,
                     ols, residuals, weighted_ls, weighted_scatter)
from .rho import Bisquare, RhoKernel
from .scale import m_scale

log = logging.getLogger(__name__)

#: slack allowed when checking that the objective never increases
DESCENT_SLACK = 1e-10


@dataclass(frozen=True)
class MMConfig:
    c0: float
    c1: float
    b: float = 0.5
    delta: float = 1e-4
    max_iters: int = 500

    def __post_init__(self):
        if not 0 < self.c0 < self.c1:
            raise ContractError(f"need 0 < c0 < c1, got c0={self.c0}, c1={self.c1}")
        if not self.delta > 0:
            raise ContractError("delta must be positive")
        if not 0 < self.b < 1:
            raise ContractError("b must lie in (0, 1)")
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")

    @classmethod
    def for_dimension(cls, q: int, are: float = 0.90, b: float = 0.5, **kw) -> "MMConfig":
        """Gaussian-calibrated constants for ``q`` responses."""
        return cls(c0=lookup_c0(q, b), c1=lookup_c1(q, are), b=b, **kw)

    @property
    def scale_kernel(self) -> RhoKernel:
        return Bisquare(self.c0)

    @property
    def efficiency_kernel(self) -> RhoKernel:
        return Bisquare(self.c1)


@dataclass
class FitResult:
    """Outcome of a fit.

    ``Sigma`` equals ``sigma**2 * Gamma`` except for exact fits, where it is
    the zero matrix.  ``distances`` are Mahalanobis norms of the residuals
    with respect to ``Sigma`` (with respect to ``Gamma`` for exact fits).
    """

    B: np.ndarray
    Gamma: np.ndarray
    Sigma: np.ndarray
    sigma: float
    distances: np.ndarray
    weights: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    exact_fit: bool = False
    fallback: bool = False
    method: str = "MM"

    def predict(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.B


def _check_unit_det(Gamma):
    det = np.linalg.det(Gamma)
    if not abs(det - 1.0) <= 1e-8:
        raise ContractError(f"shape matrix must have unit determinant, got {det!r}")


def objective(data: Dataset, B, Gamma, sigma: float, k1: RhoKernel) -> float:
    """``sum_i rho_1(d_i(B, Gamma) / sigma)``."""
    _check_unit_det(Gamma)
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    d = mahalanobis_norms(residuals(data, B), Gamma)
    return float(k1.rho(d / sigma).sum())


def irwls_step(data: Dataset, B, Sigma, sigma: float, k1: RhoKernel):
    """One reweighting pass.

    Weights ``W(d_i(B, Sigma))`` give a per-column weighted LS update of
    ``B``; the weighted residual scatter of the new fit, rescaled to
    determinant ``sigma**(2q)``, is the new ``Sigma``.
    """
    w = k1.weight(mahalanobis_norms(residuals(data, B), Sigma))
    support = int(np.count_nonzero(w))
    if support < data.p + data.q:
        raise RankDeficiencyError(
            f"{support} observations with positive weight, need p + q = {data.p + data.q}",
            rank=support, dim=data.p + data.q)
    B_new = weighted_ls(data.X, data.Y, w)
    C = weighted_scatter(residuals(data, B_new), w)
    return B_new, sigma ** 2 * det_normalize(C)


def _rel_change(new, old) -> float:
    return float((np.abs(new - old) / np.maximum(np.abs(old), 1e-12)).max())


def mm_fit(data: Dataset, cfg: MMConfig, initial: SCandidate) -> FitResult:
    """MM-estimate started from a high-breakdown ``initial`` fit.

    Iterates until every coefficient and every Mahalanobis norm changes by a
    relative amount below ``cfg.delta``, or ``cfg.max_iters`` passes.  If the
    final objective exceeds the objective at the starting point (which descent
    rules out barring numerical trouble) the initial estimate is returned
    with ``fallback=True``.
    """
    _check_unit_det(initial.Gamma)
    k0, k1 = cfg.scale_kernel, cfg.efficiency_kernel
    B0 = np.array(initial.B, dtype=float)
    G0 = np.array(initial.Gamma, dtype=float)
    U0 = residuals(data, B0)
    d0 = mahalanobis_norms(U0, G0)
    d0[exact_rows(data, U0)] = 0.0
    sigma = m_scale(d0, k0, cfg.b).sigma

    if sigma == 0.0:
        return FitResult(B=B0, Gamma=G0, Sigma=np.zeros_like(G0), sigma=0.0,
                         distances=d0, weights=(d0 == 0).astype(float),
                         iterations=0, converged=True, exact_fit=True)

    B, Sigma = B0, sigma ** 2 * G0
    d = d0 / sigma
    s_init = float(k1.rho(d).sum())
    trace = [s_init]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        B_new, Sigma_new = irwls_step(data, B, Sigma, sigma, k1)
        d_new = mahalanobis_norms(residuals(data, B_new), Sigma_new)
        trace.append(float(k1.rho(d_new).sum()))
        change = max(_rel_change(B_new, B), _rel_change(d_new, d))
        B, Sigma, d = B_new, Sigma_new, d_new
        if change < cfg.delta:
            converged = True
            break
    if not converged:
        log.warning("MM iterations hit max_iters=%d", cfg.max_iters)

    if trace[-1] > s_init + DESCENT_SLACK * max(1.0, abs(s_init)):
        log.warning("MM objective rose above its starting value; keeping initial fit")
        return FitResult(B=B0, Gamma=G0, Sigma=sigma ** 2 * G0, sigma=sigma,
                         distances=d0 / sigma, weights=k1.weight(d0 / sigma),
                         objective_trace=trace, iterations=it,
                         converged=converged, fallback=True)

    return FitResult(B=B, Gamma=Sigma / sigma ** 2, Sigma=Sigma, sigma=sigma,
                     distances=d, weights=k1.weight(d), objective_trace=trace,
                     iterations=it, converged=converged)


def mle_fit(data: Dataset) -> FitResult:
    """Gaussian maximum likelihood: least squares plus residual covariance."""
    B = ols(data)
    U = residuals(data, B)
    q = data.q
    if exact_rows(data, U).all():
        return FitResult(B=B, Gamma=np.eye(q), Sigma=np.zeros((q, q)), sigma=0.0,
                         distances=np.zeros(data.n), weights=np.ones(data.n),
                         exact_fit=True, method="MLE")
    Sigma = weighted_scatter(U, np.ones(data.n)) / data.n
    Gamma = det_normalize(Sigma)
    sigma = float(np.sqrt(Sigma[0, 0] / Gamma[0, 0]))
    return FitResult(B=B, Gamma=Gamma, Sigma=Sigma, sigma=sigma,
                     distances=mahalanobis_norms(U, Sigma), weights=np.ones(data.n),
                     method="MLE")


def fit(data: Dataset, cfg: MMConfig | None = None, s_cfg: SConfig | None = None,
        are: float = 0.90):
    """S-estimate followed by the MM refinement.  Returns ``(mm, s)``."""
    cfg = MMConfig.for_dimension(data.q, are) if cfg is None else cfg
    s_cfg = SConfig() if s_cfg is None else s_cfg
    init = s_estimate(data, s_cfg, cfg.scale_kernel, cfg.b)
    return mm_fit(data, cfg, init), init


def s_fit_result(data: Dataset, cand: SCandidate, cfg: MMConfig) -> FitResult:
    """Express an S-estimate as a FitResult (``Sigma = scale**2 * Gamma``)."""
    s = cand.scale
    U = residuals(data, cand.B)
    if s == 0.0:
        d = mahalanobis_norms(U, cand.Gamma)
        d[exact_rows(data, U)] = 0.0
        return FitResult(B=cand.B, Gamma=cand.Gamma, Sigma=np.zeros_like(cand.Gamma),
                         sigma=0.0, distances=d, weights=(d == 0).astype(float),
                         exact_fit=True, method="S")
    d = mahalanobis_norms(U, cand.Gamma) / s
    return FitResult(B=cand.B, Gamma=cand.Gamma, Sigma=s * s * cand.Gamma, sigma=s,
                     distances=d, weights=cfg.scale_kernel.weight(d), method="S")


def estimating_equation_residual(data: Dataset, fit_result: FitResult) -> float:
    """Dimensionless size of ``sum_i W(d_i) x_i u_i'`` at a fitted point.

    The Frobenius norm of the weighted score is divided by
    ``sum_i W(d_i) |x_i| |u_i|``, the value it would take if every term
    pointed the same way.  Zero for exact fits.
    """
    if fit_result.exact_fit:
        return 0.0
    U = residuals(data, fit_result.B)
    w = np.asarray(fit_result.weights, dtype=float)
    score = data.X.T @ (w[:, None] * U)
    scale = float((w * np.linalg.norm(data.X, axis=1) * np.linalg.norm(U, axis=1)).sum())
    return float(np.linalg.norm(score) / scale) if scale > 0 else 0.0
