"""Robust univariate scales: the M-scale and the tau-scale built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError
from .rho import RhoKernel

#: equation residual every positive M-scale is guaranteed to meet
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class ScaleEstimate:
    sigma: float
    iterations: int
    residual: float


def _check_values(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.size == 0 or V.shape[-1] == 0:
        raise ContractError("M-scale of an empty sample")
    if not np.isfinite(V).all():
        raise ContractError("M-scale input has non-finite values")
    if (V < 0).any():
        raise ContractError("M-scale input must be nonnegative")
    return V


def m_scale_batch(V, kernel: RhoKernel, b: float = 0.5, maxiter: int = 200):
    """M-scales of every row of ``V``.

    Solves ``mean_i rho(v_i / s) = b`` for each row.  Rows where at least
    ``n (1 - b)`` entries are exactly zero get ``s = 0``.

    The equation is monotone in ``log s``; it is solved by Illinois-modified
    regula falsi inside a bracket that is widened geometrically until it
    contains the root.

    Returns
    -------
    sigma, iterations, residual : ndarray, int, ndarray
    """
    if not 0.0 < b < 1.0:
        raise ContractError(f"b must lie in (0, 1), got {b}")
    V = _check_values(np.atleast_2d(V))
    K, n = V.shape
    c = kernel.c
    sigma = np.zeros(K)
    resid = np.zeros(K)
    zero_count = (V == 0).sum(axis=1)
    live = np.flatnonzero(zero_count < n * (1.0 - b))
    if live.size == 0:
        return sigma, 0, resid
    # solve for s / max(v) so the iteration stays well scaled
    top = V[live].max(axis=1)
    W = V[live] / top[:, None]

    def g(x, rows=slice(None)):
        return kernel.rho(W[rows] * np.exp(-x)[:, None]).mean(axis=1) - b

    pos = np.where(W > 0, W, np.inf).min(axis=1)
    a = np.log(pos / (10.0 * c))
    z = np.log(W.max(axis=1) * 10.0 / c)
    ga = g(a)
    gz = g(z)
    # widen until g(a) > 0 > g(z); g(a) > 0 already holds by the zero rule
    for _ in range(200):
        bad = gz >= 0
        if not bad.any():
            break
        z[bad] += np.log(10.0)
        gz[bad] = g(z[bad], bad)
    for _ in range(200):
        bad = ga <= 0
        if not bad.any():
            break
        a[bad] -= np.log(10.0)
        ga[bad] = g(a[bad], bad)

    best_x = np.where(np.abs(ga) < np.abs(gz), a, z)
    best_g = np.minimum(np.abs(ga), np.abs(gz))
    side = np.zeros(live.size, dtype=int)
    active = np.ones(live.size, dtype=bool)
    it = 0
    for it in range(1, maxiter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        aa, zz, fa, fz = a[idx], z[idx], ga[idx], gz[idx]
        x = (aa * fz - zz * fa) / (fz - fa)
        # fall back to the midpoint if the secant point is not interior
        mid = 0.5 * (aa + zz)
        x = np.where((x > aa) & (x < zz), x, mid)
        fx = g(x, idx)
        improved = np.abs(fx) < best_g[idx]
        best_x[idx[improved]] = x[improved]
        best_g[idx[improved]] = np.abs(fx[improved])
        left = fx > 0
        # root lies right of x: move a
        ia = idx[left]
        a[ia] = x[left]
        ga[ia] = fx[left]
        gz[ia[side[ia] == -1]] *= 0.5
        side[ia] = -1
        iz = idx[~left]
        z[iz] = x[~left]
        gz[iz] = fx[~left]
        ga[iz[side[iz] == 1]] *= 0.5
        side[iz] = 1
        done = (np.abs(fx) <= 1e-13) | ((zz - aa) <= 1e-14 * np.maximum(1.0, np.abs(aa)))
        active[idx[done]] = False
    sigma[live] = np.exp(best_x) * top
    resid[live] = best_g
    return sigma, it, resid


def m_scale(v, kernel: RhoKernel, b: float = 0.5) -> ScaleEstimate:
    """M-estimate of scale of a nonnegative sample.

    Parameters
    ----------
    v : array_like
        Nonnegative values (typically Mahalanobis norms).
    kernel : RhoKernel
        The scale kernel, ``rho_0``.
    b : float
        Right-hand side of the defining equation; ``0.5`` gives the maximal
        breakdown point.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ContractError("m_scale expects a 1-d sample")
    sigma, it, resid = m_scale_batch(v[None, :], kernel, b)
    out = ScaleEstimate(float(sigma[0]), int(it), float(resid[0]))
    if out.sigma > 0 and out.residual > RESIDUAL_TOL:
        raise ArithmeticError(  # pragma: no cover - solver invariant
            f"M-scale equation residual {out.residual:.3g} exceeds {RESIDUAL_TOL}")
    return out


def tau_scale(v, k0: RhoKernel, k2: RhoKernel, b: float = 0.5) -> float:
    """tau-scale ``sqrt(s**2 * mean(rho_2(|v_i| / s)))`` with ``s`` the M-scale."""
    v = np.abs(np.asarray(v, dtype=float))
    s = m_scale(v, k0, b).sigma
    if s == 0.0:
        return 0.0
    return float(s * np.sqrt(k2.rho(v / s).mean()))
