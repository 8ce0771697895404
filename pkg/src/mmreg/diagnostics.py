"""Post-fit diagnostics: QQ data for residual norms, influence function,
asymptotic covariance of the coefficients, and breakdown-point bounds."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special

from .calibration import radial_expectation, w_star
from .exceptions import ContractError, DegenerateKernelError
from .linalg import Dataset, mahalanobis_norms, scatter_cholesky
from .mm import FitResult
from .rho import RhoKernel

#: default chi-squared level above which a residual norm is flagged
FLAG_LEVEL = 0.999


def chi2_quantile(prob, q: int):
    """Inverse CDF of chi-squared with ``q`` degrees of freedom."""
    return 2.0 * special.gammaincinv(0.5 * q, np.asarray(prob, dtype=float))


@dataclass(frozen=True)
class QQData:
    sorted_norms: np.ndarray
    theoretical: np.ndarray
    order: np.ndarray
    flagged: np.ndarray
    threshold: float

    def to_csv(self, path_or_file):
        rows = zip(self.theoretical, self.sorted_norms, self.order)
        flagged = set(self.flagged.tolist())

        def write(fh):
            w = csv.writer(fh)
            w.writerow(["theoretical", "sorted_norm", "flagged", "index"])
            for t, s, i in rows:
                w.writerow([repr(float(t)), repr(float(s)), int(i in flagged), int(i)])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                write(fh)


def qq_data(fit: FitResult, q: int, level: float = FLAG_LEVEL) -> QQData:
    """Sorted residual norms against root chi-squared quantiles.

    Plotting positions are ``(i - 0.5) / n``.  ``flagged`` lists original
    observation indices whose norm exceeds the root of the ``level``
    chi-squared quantile.
    """
    d = np.asarray(fit.distances, dtype=float)
    n = d.size
    order = np.argsort(d, kind="stable")
    theo = np.sqrt(chi2_quantile((np.arange(1, n + 1) - 0.5) / n, q))
    thr = float(np.sqrt(chi2_quantile(level, q)))
    flagged = np.sort(np.flatnonzero(d > thr))
    return QQData(d[order], theo, order, flagged, thr)


def expected_w_star(k1: RhoKernel, q: int, sigma0: float = 1.0) -> float:
    """``E W*(v / sigma0)`` for ``v ~ chi_q``; the derivative factor of the
    coefficient estimating equation."""
    return radial_expectation(lambda u: w_star(k1, q, u), q, k1.c, sigma0)


def influence_value(y0, x0, B0, Sigma0, sigma0: float, xx_inv, k1: RhoKernel) -> np.ndarray:
    """Influence of a point mass at ``(x0, y0)`` on the coefficient matrix.

    ``IF = W(d0 / sigma0) E(xx')^{-1} x0 (y0 - B0' x0)' / E W*(v / sigma0)``
    with ``d0`` the Mahalanobis norm of the residual under ``Sigma0`` and
    ``v ~ chi_q``.  Returned with the shape of ``B0``.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    B0 = np.atleast_2d(np.asarray(B0, dtype=float))
    q = y0.size
    u = y0 - B0.T @ x0
    d0 = float(mahalanobis_norms(u, Sigma0)[0]) / sigma0
    w = float(k1.weight(d0))
    if w == 0.0:
        return np.zeros_like(B0)
    ew = expected_w_star(k1, q, sigma0)
    if ew == 0.0:
        raise DegenerateKernelError("E W* vanishes; the influence function is undefined")
    return w * np.outer(np.asarray(xx_inv) @ x0, u) / ew


@dataclass(frozen=True)
class AsymptoticCov:
    V: np.ndarray
    scalar_factor: float
    xx_inv: np.ndarray
    Sigma: np.ndarray
    n: int

    def standard_errors(self) -> np.ndarray:
        """Standard errors of ``B`` entries, shaped ``(p, q)``."""
        p, q = self.xx_inv.shape[0], self.Sigma.shape[0]
        return np.sqrt(np.diag(self.V) / self.n).reshape(p, q)


def asymptotic_covariance(data: Dataset, fit: FitResult, k1: RhoKernel,
                          radial: str = "gaussian") -> AsymptoticCov:
    """Asymptotic covariance of ``sqrt(n) vec(B_hat')`` under elliptical errors.

    ``V = f * (X'X / n)^{-1} kron Sigma_hat`` with radial factor
    ``f = E psi(v)**2 / (q (E W*(v))**2)`` where ``v`` is the Mahalanobis norm
    of an error with respect to ``Sigma_hat``.  ``radial="gaussian"`` takes
    ``v ~ chi_q``; ``radial="empirical"`` averages over the fitted norms.
    """
    if fit.exact_fit or not fit.sigma > 0:
        raise ContractError("asymptotic covariance needs a fit with positive scale")
    q = data.q
    if radial == "gaussian":
        ew = expected_w_star(k1, q)
        ep = radial_expectation(lambda u: k1.psi(u) ** 2, q, k1.c)
    elif radial == "empirical":
        d = np.asarray(fit.distances)
        ew = float(w_star(k1, q, d).mean())
        ep = float((k1.psi(d) ** 2).mean())
    else:
        raise ContractError(f"unknown radial law {radial!r}")
    if ew == 0.0:
        raise DegenerateKernelError("E W* vanishes; the Lambda matrix is singular")
    factor = ep / (q * ew * ew)
    L = scatter_cholesky(data.X.T @ data.X / data.n)
    Linv = np.linalg.inv(L)
    xx_inv = Linv.T @ Linv
    V = np.kron(xx_inv, factor * np.asarray(fit.Sigma))
    return AsymptoticCov(0.5 * (V + V.T), float(factor), xx_inv,
                         np.asarray(fit.Sigma), data.n)


def hyperplane_max_count(data: Dataset, limit: int = 60, tol: float = 1e-9,
                         chunk: int = 20000) -> int:
    """Largest number of points ``z_i = (y_i, x_i)`` on one hyperplane through
    the origin.

    Enumerates every ``(p+q-1)``-subset; each independent subset spans a
    unique hyperplane whose normal is read off an SVD.  If all points lie
    in a proper subspace of dimension below ``p+q-1`` every point shares a
    hyperplane and the answer is ``n``.

    Cost grows like ``n**(p+q-1)``, hence the ``limit`` on ``n``; above it
    use :func:`breakdown_lower_bound` with ``k_n = p+q-1`` as a best case.
    """
    n = data.n
    if n > limit:
        raise ContractError(
            f"exact k_n enumeration is limited to n <= {limit} (got {n}); "
            "use breakdown_lower_bound with an assumed k_n instead")
    Z = np.hstack([data.Y, data.X])
    dim = Z.shape[1]
    m = dim - 1
    scale = max(1.0, float(np.linalg.norm(Z, axis=1).max()))
    if np.linalg.matrix_rank(Z, tol=tol * scale) < dim:
        return n
    best = 0
    combos = itertools.combinations(range(n), m)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        _, s, vt = np.linalg.svd(Z[block], full_matrices=True)
        ok = s[:, -1] > tol * np.maximum(s[:, 0], 1e-300)
        if not ok.any():
            continue
        normals = vt[ok, -1, :]
        counts = (np.abs(Z @ normals.T) <= tol * scale).sum(axis=0)
        best = max(best, int(counts.max()))
    return best


def breakdown_lower_bound(n: int, k_n: int, eps_initial: float) -> float:
    """Lower bound ``min(eps_initial, (floor(n/2) - k_n) / n)`` on the MM
    breakdown point."""
    if not k_n < n / 2:
        raise ContractError(f"bound requires k_n < n/2, got k_n={k_n}, n={n}")
    return min(float(eps_initial), (n // 2 - k_n) / n)
