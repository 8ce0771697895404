"""Data container and the small dense linear-algebra kernels shared by the
estimators.

Matrices are dense, C-ordered numpy arrays with observations along the first
axis: ``X`` is ``(n, p)``, ``Y`` is ``(n, q)`` and a coefficient matrix ``B``
is ``(p, q)`` so that fitted values are ``X @ B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .exceptions import ContractError, RankDeficiencyError, SingularScatterError

#: relative eigenvalue floor below which a scatter matrix is treated as singular
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class Dataset:
    """``n`` observations of a ``q``-variate response and ``p`` predictors."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise ContractError("X and Y must be 2-d arrays")
        if X.shape[0] != Y.shape[0]:
            raise ContractError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        n, p = X.shape
        q = Y.shape[1]
        if p < 1 or q < 1:
            raise ContractError("need at least one predictor and one response")
        if n < p + q:
            raise ContractError(f"n={n} is smaller than p + q = {p + q}")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ContractError("data contain non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    def take(self, idx) -> "Dataset":
        """Row subset, revalidated."""
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.Y[idx])


def _check_B(data: Dataset, B) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim == 1 and data.q == 1:
        B = B[:, None]
    if B.shape != (data.p, data.q):
        raise ContractError(
            f"coefficient matrix has shape {B.shape}, expected {(data.p, data.q)}")
    if not np.isfinite(B).all():
        raise ContractError("coefficient matrix has non-finite entries")
    return B


def residuals(data: Dataset, B) -> np.ndarray:
    """Residual matrix ``Y - X B`` (row ``i`` is ``y_i - B' x_i``)."""
    B = _check_B(data, B)
    return data.Y - data.X @ B


def scatter_cholesky(S) -> np.ndarray:
    """Lower Cholesky factor of a positive definite scatter matrix.

    Raises
    ------
    SingularScatterError
        If ``S`` is not symmetric, or its smallest eigenvalue is at most
        ``1e-12`` times its largest.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ContractError(f"scatter must be square, got {S.shape}")
    if not np.isfinite(S).all():
        raise SingularScatterError("scatter has non-finite entries")
    scale = max(np.abs(S).max(), np.finfo(float).tiny)
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise ContractError("scatter matrix is not symmetric")
    S = 0.5 * (S + S.T)
    ev = np.linalg.eigvalsh(S)
    if ev[-1] <= 0 or ev[0] <= SINGULAR_RTOL * ev[-1]:
        raise SingularScatterError(
            f"scatter is numerically singular (eigenvalues {ev[0]:.3g} .. {ev[-1]:.3g})")
    return np.linalg.cholesky(S)


def mahalanobis_norms(U, S) -> np.ndarray:
    """Row-wise Mahalanobis norms ``sqrt(u_i' S^{-1} u_i)``.

    Uses a triangular solve against the Cholesky factor of ``S``; ``S^{-1}``
    is never formed.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    L = scatter_cholesky(S)
    if U.shape[1] != L.shape[0]:
        raise ContractError(
            f"residuals have {U.shape[1]} columns but scatter is {L.shape[0]}x{L.shape[0]}")
    Z = sla.solve_triangular(L, U.T, lower=True)
    return np.sqrt(np.einsum("ij,ij->j", Z, Z))


def det_normalize(S) -> np.ndarray:
    """Rescale ``S`` to unit determinant: ``S / det(S)**(1/q)``."""
    L = scatter_cholesky(S)
    q = L.shape[0]
    logdet = 2.0 * np.log(np.diag(L)).sum()
    out = np.asarray(S, dtype=float) * np.exp(-logdet / q)
    return 0.5 * (out + out.T)


def weighted_ls_column(X, y, w) -> np.ndarray:
    """Weighted least squares ``argmin_b sum_i w_i (y_i - x_i' b)**2``.

    Solved by a QR factorization of ``sqrt(w) X``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.shape[0] != y.shape[0] or w.shape != y.shape[:1]:
        raise ContractError("X, y and w disagree on the number of rows")
    if (w < 0).any() or not np.isfinite(w).all():
        raise ContractError("weights must be finite and nonnegative")
    return weighted_ls(X, y, w)


def weighted_ls(X, Y, w) -> np.ndarray:
    """Column-by-column weighted LS for a response matrix sharing the weights.

    All columns use the same design and weights, so a single QR serves them
    all.  Returns an array shaped like ``Y`` with ``n`` replaced by ``p``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    sw = np.sqrt(w)
    p = X.shape[1]
    Xw = X * sw[:, None]
    Yw = Y * (sw[:, None] if Y.ndim == 2 else sw)
    if np.count_nonzero(w) < p:
        raise RankDeficiencyError(
            f"only {np.count_nonzero(w)} positive weights for {p} coefficients",
            rank=int(np.count_nonzero(w)), dim=p)
    Q, R = np.linalg.qr(Xw)
    rdiag = np.abs(np.diag(R))
    tol = max(Xw.shape) * np.finfo(float).eps * max(rdiag.max(), np.finfo(float).tiny)
    if rdiag.min() <= tol:
        rank = int(np.linalg.matrix_rank(Xw))
        raise RankDeficiencyError(
            f"weighted design has rank {rank} < {p} predictors",
            rank=rank, dim=p)
    return sla.solve_triangular(R, Q.T @ Yw, lower=False)


def ols(data: Dataset) -> np.ndarray:
    """Ordinary least squares coefficient matrix ``(p, q)``."""
    return weighted_ls(data.X, data.Y, np.ones(data.n))


def weighted_scatter(U, w) -> np.ndarray:
    """``sum_i w_i u_i u_i'``."""
    U = np.asarray(U, dtype=float)
    C = (U * w[:, None]).T @ U
    return 0.5 * (C + C.T)


#: residual rows below this fraction of the response magnitude count as exact fits
EXACT_RTOL = 1e-10


def exact_tolerance(data: Dataset) -> float:
    return EXACT_RTOL * max(float(np.abs(data.Y).max()), 1.0)


def exact_rows(data: Dataset, U) -> np.ndarray:
    """Boolean mask of rows whose residual vector is zero up to rounding."""
    return np.abs(np.asarray(U)).max(axis=1) <= exact_tolerance(data)
