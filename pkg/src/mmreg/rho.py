"""Bounded rho functions and their derived functions.

A kernel supplies

* ``rho(u)``  -- bounded loss, ``rho(0) = 0`` and ``sup rho = 1``
* ``psi(u)``  -- ``rho'(u)``
* ``weight(u)`` -- ``psi(u) / u``, continuous at 0
* ``w1_prime(t)`` -- ``d/dt weight(sqrt(t))``, needed for asymptotic variances

All methods accept scalars or arrays and broadcast.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError


class RhoKernel:
    """Interface for bounded rho functions with a tuning constant ``c``."""

    family = "abstract"

    def __init__(self, c: float):
        c = float(c)
        if not (c > 0 and np.isfinite(c)):
            raise ContractError(f"tuning constant must be positive, got {c}")
        self.c = c

    def __repr__(self):
        return f"{type(self).__name__}(c={self.c!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self.c == other.c

    def __hash__(self):
        return hash((type(self).__name__, self.c))

    def rho(self, u):
        raise NotImplementedError

    def psi(self, u):
        raise NotImplementedError

    def weight(self, u):
        raise NotImplementedError

    def w1_prime(self, t):
        raise NotImplementedError

    def weight_deriv(self, u):
        """Derivative of ``weight`` with respect to ``u`` (``2 u w1_prime(u**2)``)."""
        u = np.asarray(u, dtype=float)
        return 2.0 * u * self.w1_prime(u * u)

    def __call__(self, u):
        return self.rho(u)


class Bisquare(RhoKernel):
    """Tukey's bisquare, ``rho(u) = 1 - (1 - (u/c)**2)**3`` for ``|u| <= c``."""

    family = "bisquare"

    def rho(self, u):
        t = np.minimum(np.abs(np.asarray(u, dtype=float)) / self.c, 1.0)
        return 1.0 - (1.0 - t * t) ** 3

    def psi(self, u):
        u = np.asarray(u, dtype=float)
        return u * self.weight(u)

    def weight(self, u):
        # closed form, so weight(0) = 6/c**2 without dividing by zero
        t = np.asarray(u, dtype=float) / self.c
        s = np.maximum(1.0 - t * t, 0.0)
        return (6.0 / self.c ** 2) * s * s

    def w1_prime(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ContractError("w1_prime is defined for t >= 0")
        c2 = self.c ** 2
        return np.where(t <= c2, -(12.0 / c2 ** 2) * (1.0 - t / c2), 0.0)


_FAMILIES = {"bisquare": Bisquare}


def make_kernel(c: float, family: str = "bisquare") -> RhoKernel:
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ContractError(f"unknown rho family {family!r}") from None
    return cls(c)
