"""Physical parameters and the smooth radial cutoff profile.

The cutoff chi is C^inf, identically 1 on [0, 3/4], identically 0 on
[4/3, inf), monotone nonincreasing, bridged by the normalized
exp(-1/u)-type smooth step on (3/4, 4/3).  The same profile generates the
dyadic bump phi(t) = chi(t/2) - chi(t), supported on the annulus
3/4 <= t <= 8/3 -- the constants c0 = 3/4, C0 = 8/3 used by every dyadic
decomposition here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CUTOFF_INNER = 0.75   # chi == 1 up to here
CUTOFF_OUTER = 4.0 / 3.0   # chi == 0 from here on
LP_C0 = 0.75          # inner radius of the dyadic annulus
LP_C1 = 8.0 / 3.0     # outer radius of the dyadic annulus


@dataclass(frozen=True)
class PhysParams:
    """Rossby number, Froude parameter, diffusivities and truncation exponents.

    F = 1 is rejected: that is the non-dispersive regime where the fast-wave
    phase |xi|_F / (F |xi|) degenerates to a constant.  The exponents (m, M)
    define epsilon-coupled truncation radii r_eps = eps^m, R_eps = eps^-M;
    the uniform-diagonalizability hypotheses require M < 1/4 and 3M + m < 1.

    nu and nu_prime are accepted >= 0: the inviscid setting is needed for
    the exact-conservation checks even though production runs use nu > 0.
    """

    epsilon: float
    froude_F: float
    nu: float
    nu_prime: float
    m: float = 0.1
    M: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.froude_F <= 0.0:
            raise ValueError("F must be positive")
        if self.froude_F == 1.0:
            raise ValueError("F must differ from 1 (non-dispersive regime excluded)")
        if self.nu < 0.0 or self.nu_prime < 0.0:
            raise ValueError("viscosities must be nonnegative")
        if not (0.0 < self.m):
            raise ValueError("m must be positive")
        if not (0.0 < self.M < 0.25):
            raise ValueError("M must lie in (0, 1/4)")
        if 3.0 * self.M + self.m >= 1.0:
            raise ValueError("truncation exponents must satisfy 3M + m < 1")

    @property
    def nu0(self) -> float:
        return min(self.nu, self.nu_prime)

    @property
    def r_eps(self) -> float:
        return self.epsilon ** self.m

    @property
    def R_eps(self) -> float:
        return self.epsilon ** (-self.M)

    def with_epsilon(self, epsilon: float) -> "PhysParams":
        return PhysParams(epsilon, self.froude_F, self.nu, self.nu_prime, self.m, self.M)


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C^inf monotone ramp: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    a = np.zeros_like(u)
    b = np.zeros_like(u)
    pos = u > 0.0
    neg = u < 1.0
    with np.errstate(over="ignore", divide="ignore"):
        a[pos] = np.exp(-1.0 / u[pos])
        b[neg] = np.exp(-1.0 / (1.0 - u[neg]))
    return a / (a + b)


def chi(t: np.ndarray | float) -> np.ndarray | float:
    """Smooth radial cutoff: 1 on [0, 3/4], 0 on [4/3, inf)."""
    t = np.asarray(t, dtype=float)
    u = (t - CUTOFF_INNER) / (CUTOFF_OUTER - CUTOFF_INNER)
    out = 1.0 - _smooth_step(u)
    if out.ndim == 0:
        return float(out)
    return out


def lp_bump(t: np.ndarray | float) -> np.ndarray | float:
    """Dyadic bump phi(t) = chi(t/2) - chi(t), supported on [3/4, 8/3]."""
    return chi(np.asarray(t) / 2.0) - chi(t)
