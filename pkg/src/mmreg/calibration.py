"""Tuning constants for Gaussian errors.

Under ``u ~ N_q(0, Sigma)`` the Mahalanobis norm ``v = d(u, Sigma)`` follows
the chi distribution with ``q`` degrees of freedom, so every expectation the
estimators need reduces to a one-dimensional integral against the chi
density.  Integrals are split at the kernel's saturation point ``c`` where
the bisquare has a kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, special

from .exceptions import ContractError, DegenerateKernelError
from .rho import Bisquare, RhoKernel

#: ARE targets and response dimensions of the shipped constants table
TABLE_Q = (1, 2, 3, 4, 5, 10)
TABLE_ARE = (0.80, 0.90, 0.95)
TAU_EFFICIENCY = 0.85

_QUAD_KW = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def chi_pdf(t, q: int):
    """Density of the chi distribution, evaluated through log-gamma."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        logf = ((q - 1) * np.log(t) - 0.5 * t * t
                - (0.5 * q - 1.0) * math.log(2.0) - special.gammaln(0.5 * q))
    out = np.exp(logf)
    return np.where(t > 0, out, (1.0 / math.sqrt(math.pi / 2)) if q == 1 else 0.0)


def chi_sf(t: float, q: int) -> float:
    """``P(v >= t)`` for ``v ~ chi_q`` (chi-squared survival at ``t**2``)."""
    return float(special.gammaincc(0.5 * q, 0.5 * t * t))


def radial_expectation(f, q: int, split, sigma0: float = 1.0) -> float:
    """``E f(v / sigma0)`` for ``v ~ chi_q``.

    ``split`` holds the kinks of ``f`` (one value or several); the range is
    cut at ``sigma0 * split`` so each panel is smooth.
    """
    cuts = sorted(float(x) * sigma0 for x in np.atleast_1d(split))
    edges = [0.0, *cuts, np.inf]

    def integrand(t):
        return float(f(t / sigma0)) * float(chi_pdf(t, q))

    return sum(integrate.quad(integrand, lo, hi, **_QUAD_KW)[0]
               for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo)


def _check_q(q):
    if int(q) != q or q < 1:
        raise ContractError(f"q must be a positive integer, got {q}")
    return int(q)


def expected_rho(c: float, q: int) -> float:
    """``E rho_B(v / c)`` with ``v ~ chi_q``."""
    q = _check_q(q)
    if not c > 0:
        raise ContractError("c must be positive")
    k = Bisquare(c)
    body, _ = integrate.quad(lambda t: float(k.rho(t) * chi_pdf(t, q)), 0.0, c,
                             **_QUAD_KW)
    return body + chi_sf(c, q)


@lru_cache(maxsize=None)
def solve_c0(q: int, b: float = 0.5) -> float:
    """Scale constant making the M-scale consistent at the normal law."""
    q = _check_q(q)
    if not 0.0 < b < 1.0:
        raise ContractError(f"b must lie in (0, 1), got {b}")
    lo, hi = 1.0, 2.0
    while expected_rho(lo, q) < b:
        lo /= 2.0
    while expected_rho(hi, q) > b:
        hi *= 2.0
    return optimize.brentq(lambda c: expected_rho(c, q) - b, lo, hi,
                           xtol=1e-12, rtol=1e-14)


def w_star(kernel: RhoKernel, q: int, u):
    """``W(u) + (2/q) u**2 W1'(u**2)``, the radial average of the derivative
    of ``u -> W(|u|) u``."""
    u = np.asarray(u, dtype=float)
    return kernel.weight(u) + (2.0 / q) * u * u * kernel.w1_prime(u * u)


def radial_moments(kernel: RhoKernel, q: int, sigma0: float = 1.0):
    """``(E W*(v/s0), E psi(v/s0)**2)`` for ``v ~ chi_q``."""
    ew = radial_expectation(lambda u: w_star(kernel, q, u), q, kernel.c, sigma0)
    ep = radial_expectation(lambda u: kernel.psi(u) ** 2, q, kernel.c, sigma0)
    return ew, ep


def are(c1: float, q: int, sigma0: float = 1.0) -> float:
    """Gaussian asymptotic efficiency of the MM coefficient estimate relative
    to least squares, for a bisquare ``rho_1`` with constant ``c1``.

    ``ARE = E(v**2) (E W*)**2 / (sigma0**2 E psi**2)`` with ``E v**2 = q``.
    """
    q = _check_q(q)
    ew, ep = radial_moments(Bisquare(c1), q, sigma0)
    if not ep > 1e-300:
        raise DegenerateKernelError(f"E psi^2 vanishes for c1={c1}, q={q}")
    return q * ew * ew / (sigma0 ** 2 * ep)


@lru_cache(maxsize=None)
def solve_c1(q: int, target: float) -> float:
    """Efficiency constant ``c1`` attaining ``are(c1, q) == target``."""
    q = _check_q(q)
    if not 0.0 < target < 1.0:
        raise ContractError(f"target efficiency must lie in (0, 1), got {target}")
    hi = solve_c0(q)
    while are(hi, q) < target:
        hi *= 1.5
    lo = hi / 1.5
    while are(lo, q) > target:
        lo /= 1.5
    return optimize.brentq(lambda c: are(c, q) - target, lo, hi,
                           xtol=1e-12, rtol=1e-14)


@dataclass(frozen=True)
class CalibrationResult:
    q: int
    b: float
    c0: float
    c1: float
    target_are: float
    achieved_are: float


def calibrate(q: int, target_are: float = 0.90, b: float = 0.5) -> CalibrationResult:
    c0 = solve_c0(q, b)
    c1 = solve_c1(q, target_are)
    if not c0 < c1:
        raise ContractError(
            f"target efficiency {target_are} needs c1={c1:.4g} <= c0={c0:.4g}")
    return CalibrationResult(q, b, c0, c1, target_are, are(c1, q))


# --- tau-scale efficiency (univariate, normal law) ---------------------------

def tau_scale_efficiency(c0: float, c2: float, b: float = 0.5) -> float:
    """Gaussian efficiency of the tau-scale relative to the standard deviation.

    Both are compared through the asymptotic variance of their logarithm;
    for the SD that variance is 1/2.  The tau-scale's variance follows from
    its influence function, which combines the influence of the M-scale with
    the direct term of the second rho function.
    """
    k0, k2 = Bisquare(c0), Bisquare(c2)
    # M-scale functional at the normal
    s = optimize.brentq(
        lambda x: radial_expectation(k0.rho, 1, c0, x) - b, 1e-3, 1e3, xtol=1e-13)
    e_rho2 = radial_expectation(k2.rho, 1, c2, s)
    e_psi0 = radial_expectation(lambda u: k0.psi(u) * u, 1, c0, s)
    e_psi2 = radial_expectation(lambda u: k2.psi(u) * u, 1, c2, s)
    tau2 = s * s * e_rho2
    gain = s * (2.0 * e_rho2 - e_psi2)

    def if_tau_sq(z):
        if_s = s * (k0.rho(z / s) - b) / e_psi0
        if_t2 = s * s * (k2.rho(z / s) - e_rho2) + if_s * gain
        return (if_t2 / (2.0 * tau2)) ** 2

    avar_log_tau = radial_expectation(if_tau_sq, 1, (c0 * s, c2 * s))
    return 0.5 / avar_log_tau


@lru_cache(maxsize=None)
def solve_tau_c2(efficiency: float = TAU_EFFICIENCY, b: float = 0.5) -> float:
    """Constant of ``rho_2`` giving the tau-scale the requested efficiency."""
    c0 = solve_c0(1, b)
    f = lambda c: tau_scale_efficiency(c0, c, b) - efficiency
    lo, hi = 0.5, 2.0
    while f(hi) < 0:
        hi *= 1.5
    return optimize.brentq(f, lo, hi, xtol=1e-10)


# --- constants file ----------------------------------------------------------

def constants_path() -> Path:
    return Path(str(resources.files("mmreg").joinpath("data/constants.txt")))


def format_constants(q_values=TABLE_Q, are_values=TABLE_ARE, b: float = 0.5) -> str:
    lines = ["# bisquare tuning constants for Gaussian errors",
             "# regenerate with: mmreg calibrate --regenerate"]
    for q in q_values:
        lines.append(f"c0 q={q} b={b:g} value={solve_c0(q, b):.10f}")
    for e in are_values:
        for q in q_values:
            lines.append(f"c1 q={q} are={e:g} value={solve_c1(q, e):.10f}")
    lines.append(f"tau_c2 q=1 eff={TAU_EFFICIENCY:g} value={solve_tau_c2(TAU_EFFICIENCY, b):.10f}")
    return "\n".join(lines) + "\n"


def read_constants(path=None) -> dict:
    """Parse a constants file into ``{(kind, q, level): value}``."""
    path = constants_path() if path is None else Path(path)
    table = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, *fields = line.split()
        kv = dict(f.split("=", 1) for f in fields)
        level = next(float(v) for k, v in kv.items() if k in ("b", "are", "eff"))
        table[(kind, int(kv["q"]), level)] = float(kv["value"])
    return table


def lookup_c0(q: int, b: float = 0.5, table=None) -> float:
    table = read_constants() if table is None else table
    hit = table.get(("c0", q, float(b)))
    return hit if hit is not None else solve_c0(q, b)


def lookup_c1(q: int, target: float = 0.90, table=None) -> float:
    table = read_constants() if table is None else table
    hit = table.get(("c1", q, float(target)))
    return hit if hit is not None else solve_c1(q, target)


def lookup_tau_c2(table=None) -> float:
    table = read_constants() if table is None else table
    hit = table.get(("tau_c2", 1, TAU_EFFICIENCY))
    return hit if hit is not None else solve_tau_c2()
