"""High-breakdown starting point: a subsampling S-estimator.

Elemental subsets of ``p + q + 1`` rows give a least-squares ``B`` and a
residual shape matrix; each candidate is improved by a few concentration
steps (IRWLS with the scale kernel), the best few are iterated to
convergence, and the one with the smallest M-scale wins.

The candidate stage is vectorized over subsamples; the finalists go through
the public one-candidate functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, DegenerateDataError, NoSupportError
from .linalg import (SINGULAR_RTOL, Dataset, det_normalize, exact_rows,
                     exact_tolerance, mahalanobis_norms, residuals, weighted_ls,
                     weighted_scatter)
from .rho import RhoKernel
from .scale import m_scale, m_scale_batch

@dataclass(frozen=True)
class SCandidate:
    B: np.ndarray
    Gamma: np.ndarray
    scale: float


@dataclass(frozen=True)
class SConfig:
    n_subsamples: int = 2000
    n_concentration: int = 2
    n_finalists: int = 10
    seed: int = 0
    max_refine_iters: int = 50
    refine_tol: float = 1e-7

    def __post_init__(self):
        for name in ("n_subsamples", "n_concentration", "n_finalists", "max_refine_iters"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if not self.refine_tol > 0:
            raise ContractError("refine_tol must be positive")


def subsample_size(data: Dataset) -> int:
    return data.p + data.q + 1


def draw_subsamples(n: int, h: int, count: int, rng) -> np.ndarray:
    """``count`` sorted index sets of size ``h`` drawn without replacement."""
    keys = rng.random((count, n))
    idx = np.argpartition(keys, h - 1, axis=1)[:, :h]
    return np.sort(idx, axis=1)


def _exact_candidate(data: Dataset, B, b: float):
    if exact_rows(data, residuals(data, B)).sum() >= data.n * (1.0 - b):
        return SCandidate(B, np.eye(data.q), 0.0)
    return None


def elemental_fit(data: Dataset, idx, k0: RhoKernel, b: float = 0.5):
    """Candidate from one elemental subset, or ``None`` when it is singular.

    A subset whose residual scatter vanishes still yields a candidate if its
    coefficients fit at least ``n (1 - b)`` rows exactly; such a candidate has
    ``scale = 0`` and identity shape.
    """
    idx = np.asarray(idx)
    if len(set(idx.tolist())) != idx.size or idx.min() < 0 or idx.max() >= data.n:
        raise ContractError("subsample indices must be distinct and in range")
    Xs, Ys = data.X[idx], data.Y[idx]
    try:
        B = weighted_ls(Xs, Ys, np.ones(idx.size))
    except ArithmeticError:
        return None
    C = weighted_scatter(Ys - Xs @ B, np.ones(idx.size))
    ev = np.linalg.eigvalsh(C)
    floor = idx.size * exact_tolerance(data) ** 2
    if ev[-1] <= floor or ev[0] <= SINGULAR_RTOL * ev[-1]:
        return _exact_candidate(data, B, b)
    Gamma = det_normalize(C)
    d = mahalanobis_norms(residuals(data, B), Gamma)
    return SCandidate(B, Gamma, m_scale(d, k0, b).sigma)


def concentration_step(data: Dataset, cand: SCandidate, k0: RhoKernel,
                       b: float = 0.5) -> SCandidate:
    """One IRWLS update of ``(B, Gamma)`` with weights ``W0(d_i / sigma)``."""
    if cand.scale == 0.0:
        return cand
    d = mahalanobis_norms(residuals(data, cand.B), cand.Gamma)
    sigma = m_scale(d, k0, b).sigma
    if sigma == 0.0:
        return SCandidate(cand.B, cand.Gamma, 0.0)
    w = k0.weight(d / sigma)
    if not (w > 0).any():
        raise NoSupportError("every observation has zero weight")
    B = weighted_ls(data.X, data.Y, w)
    U = residuals(data, B)
    Gamma = det_normalize(weighted_scatter(U, w))
    d = mahalanobis_norms(U, Gamma)
    return SCandidate(B, Gamma, m_scale(d, k0, b).sigma)


# --- batched candidate stage -------------------------------------------------

def _batch_shapes(C, floor=0.0):
    """Unit-determinant versions of a stack of scatters; NaN where singular."""
    ev = np.linalg.eigvalsh(C)
    ok = (ev[:, -1] > floor) & (ev[:, 0] > SINGULAR_RTOL * ev[:, -1])
    logdet = np.log(np.where(ok[:, None], ev, 1.0)).sum(axis=1)
    q = C.shape[-1]
    G = C * np.exp(-logdet / q)[:, None, None]
    G = 0.5 * (G + np.swapaxes(G, 1, 2))
    G[~ok] = np.nan
    return G, ok


def _batch_distances(data: Dataset, B, G):
    U = data.Y[None] - data.X[None] @ B
    # inverse of the q x q triangular factor only; the scatter is never inverted
    Linv = np.linalg.inv(np.linalg.cholesky(G))
    Z = U @ np.swapaxes(Linv, 1, 2)
    return np.sqrt(np.einsum("knq,knq->kn", Z, Z))


def _batch_wls(data: Dataset, w):
    """Weighted LS for a stack of weight vectors; returns B and a rank mask."""
    sw = np.sqrt(w)
    Xw = sw[:, :, None] * data.X[None]
    Yw = sw[:, :, None] * data.Y[None]
    Q, R = np.linalg.qr(Xw)
    rd = np.abs(np.diagonal(R, axis1=1, axis2=2))
    tol = Xw.shape[1] * np.finfo(float).eps * np.maximum(rd.max(axis=1), 1e-300)
    ok = rd.min(axis=1) > tol
    R[~ok] = np.eye(data.p)
    B = np.linalg.solve(R, np.swapaxes(Q, 1, 2) @ Yw)
    return B, ok


def _elemental_batch(data: Dataset, idx, k0, b):
    K, h = idx.shape
    Xs, Ys = data.X[idx], data.Y[idx]
    Q, R = np.linalg.qr(Xs)
    rd = np.abs(np.diagonal(R, axis1=1, axis2=2))
    tol = h * np.finfo(float).eps * np.maximum(rd.max(axis=1), 1e-300)
    ok = rd.min(axis=1) > tol
    R[~ok] = np.eye(data.p)
    B = np.linalg.solve(R, np.swapaxes(Q, 1, 2) @ Ys)
    Rs = Ys - Xs @ B
    C = np.einsum("khq,khr->kqr", Rs, Rs)
    G, ok_s = _batch_shapes(C, h * exact_tolerance(data) ** 2)
    scale = np.full(K, np.inf)
    exact = None
    for k in np.flatnonzero(ok & ~ok_s):
        exact = _exact_candidate(data, B[k], b)
        if exact is not None:
            return B, G, scale, exact
    good = ok & ok_s
    if good.any():
        d = _batch_distances(data, B[good], G[good])
        scale[good] = m_scale_batch(d, k0, b)[0]
    return B, G, scale, exact


def _concentrate_batch(data: Dataset, B, G, scale, k0, b):
    good = np.isfinite(scale) & (scale > 0)
    if not good.any():
        return B, G, scale
    Bg, Gg, sg = B[good], G[good], scale[good]
    d = _batch_distances(data, Bg, Gg)
    w = k0.weight(d / sg[:, None])
    Bn, ok = _batch_wls(data, w)
    U = data.Y[None] - data.X[None] @ Bn
    C = np.einsum("kn,knq,knr->kqr", w, U, U)
    Gn, ok_s = _batch_shapes(C)
    ok &= ok_s & (w > 0).any(axis=1)
    sn = np.full(sg.shape, np.inf)
    if ok.any():
        dn = _batch_distances(data, Bn[ok], Gn[ok])
        sn[ok] = m_scale_batch(dn, k0, b)[0]
    # keep the old candidate wherever the step failed or did not descend
    keep = ~(sn <= sg)
    Bn[keep], Gn[keep], sn[keep] = Bg[keep], Gg[keep], sg[keep]
    B, G, scale = B.copy(), G.copy(), scale.copy()
    B[good], G[good], scale[good] = Bn, Gn, sn
    return B, G, scale


def refine(data: Dataset, cand: SCandidate, k0: RhoKernel, b: float = 0.5,
           max_iters: int = 50, tol: float = 1e-7):
    """Iterate concentration steps until the relative scale change is below
    ``tol``.  Returns the final candidate and the scale trace."""
    trace = [cand.scale]
    for _ in range(max_iters):
        if cand.scale == 0.0:
            break
        try:
            nxt = concentration_step(data, cand, k0, b)
        except ArithmeticError:
            break
        if not nxt.scale <= cand.scale:
            break
        change = (cand.scale - nxt.scale) / cand.scale
        cand = nxt
        trace.append(cand.scale)
        if change < tol:
            break
    return cand, trace


def s_estimate(data: Dataset, cfg: SConfig, k0: RhoKernel, b: float = 0.5,
               return_traces: bool = False):
    """Subsampling S-estimate ``(B, Gamma)`` with ``det(Gamma) = 1``.

    Raises
    ------
    DegenerateDataError
        If no nonsingular elemental subset turns up within ten times the
        subsample budget.
    """
    n, h = data.n, subsample_size(data)
    if n <= 2 * h:
        raise ContractError(f"S-estimation needs n > 2(p+q+1) = {2 * h}, got n={n}")
    rng = np.random.default_rng(cfg.seed)
    K = cfg.n_subsamples
    for _attempt in range(10):
        idx = draw_subsamples(n, h, K, rng)
        B, G, scale, exact = _elemental_batch(data, idx, k0, b)
        if exact is not None:
            return (exact, []) if return_traces else exact
        if np.isfinite(scale).any():
            break
    else:
        raise DegenerateDataError(
            f"no nonsingular elemental subset in {10 * K} draws")
    if (scale == 0).any():
        k = int(np.flatnonzero(scale == 0)[0])
        best = SCandidate(B[k], G[k], 0.0)
        return (best, []) if return_traces else best

    for _ in range(cfg.n_concentration):
        B, G, scale = _concentrate_batch(data, B, G, scale, k0, b)

    order = np.argsort(scale, kind="stable")
    finalists = np.array(sorted(int(k) for k in order[:cfg.n_finalists]
                                if np.isfinite(scale[k])))
    Bf, Gf, sf, traces = _refine_batch(data, B[finalists], G[finalists],
                                       scale[finalists], k0, b, cfg)
    # argmin returns the first minimum, i.e. the lowest candidate index on ties
    k = int(np.argmin(sf))
    best = SCandidate(Bf[k], Gf[k], float(sf[k]))
    return (best, traces) if return_traces else best


def _refine_batch(data, B, G, scale, k0, b, cfg: SConfig):
    """Batched counterpart of :func:`refine` for the finalists."""
    traces = [[float(s)] for s in scale]
    active = np.isfinite(scale) & (scale > 0)
    for _ in range(cfg.max_refine_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Bn, Gn, sn = _concentrate_batch(data, B[idx], G[idx], scale[idx], k0, b)
        change = (scale[idx] - sn) / scale[idx]
        B[idx], G[idx], scale[idx] = Bn, Gn, sn
        for j, k in enumerate(idx):
            traces[k].append(float(sn[j]))
        active[idx[(change < cfg.refine_tol) | (sn == 0)]] = False
    return B, G, scale, traces
