"""Closed-form laws, bounds and constants for the branching Brownian front.

These functions are the oracle layer for the statistical tests: everything
here is exact (up to floating point) and independent of the simulator.
Absolute constants that the underlying inequalities leave unspecified are
configurable through BoundSpec; tests compare decay rates, never the
constants themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import erfc

from .errors import DomainError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BoundSpec:
    """Configurable prefactors of the inequality family (defaults 1.0)."""

    c1: float = 1.0   # right-tail bound prefactor
    C1: float = 1.0   # small-deviation bound prefactor

    def __post_init__(self):
        if not (self.c1 > 0 and self.C1 > 0):
            raise DomainError("BoundSpec constants must be strictly positive")


@dataclass(frozen=True)
class Constants:
    """Reference exponents and centering constants.

    The *_exponent values are asymptotic log-scale growth rates; the
    liminf/limsup constants describe the logarithmic correction of the
    front position and are report-only reference values.
    """

    sqrt2: float = SQRT2
    T_exponent: float = SQRT2                 # log T(y) / y
    two_bbm_exponent: float = SQRT2           # log T(z) / z, paired populations
    tau_leftmost_exponent: float = 4.0        # log tau_{leftmost} / s
    theta_exponent: float = 2.0 + 2.0 * SQRT2  # log Theta_s / s
    extremal_slope: float = 2.0 - SQRT2       # position/s of the slowest-to-lead particle
    liminf_const: float = -3.0 / (2.0 * SQRT2)
    limsup_const: float = -1.0 / (2.0 * SQRT2)

    def __post_init__(self):
        assert self.theta_exponent > 4.0


CONSTANTS = Constants()


def m_of_t(t: float) -> float:
    """Front centering m(t) = sqrt(2) t - (3 / (2 sqrt(2))) log t, for t > 0."""
    if t <= 0:
        raise DomainError(f"m_of_t requires t > 0, got {t}")
    return SQRT2 * t - (3.0 / (2.0 * SQRT2)) * math.log(t)


def bramson_upper(y: float, spec: BoundSpec = BoundSpec()) -> float:
    """Right-tail bound c1 (1 + y_+)^2 exp(-sqrt(2) y) for P[R(t) > m(t) + y].

    The inequality is proved for 2 <= y <= sqrt(t); callers flag the validity
    domain, the formula itself is defined for all y.
    """
    y_plus = max(y, 0.0)
    return spec.c1 * (1.0 + y_plus) ** 2 * math.exp(-SQRT2 * y)


def gauss_tail_exact(s: float, a: float) -> float:
    """P[B_s >= a] for standard Brownian motion, relative error <= 1e-12."""
    if s <= 0:
        raise DomainError(f"gauss_tail_exact requires s > 0, got {s}")
    return 0.5 * float(erfc(a / math.sqrt(2.0 * s)))


def gauss_tail_bounds(s: float, a: float) -> tuple[float, float]:
    """Sandwich bounds for P[B_s >= a], s >= 1, a > 0.

    Returns (lower, upper) with
        upper = sqrt(s / 2 pi) a^-1 exp(-a^2 / 2s)
        lower = (1 - s / a^2) * upper
    The lower bound is informative only when a^2 > s (it vanishes at a^2 = s
    and is negative below); callers flag that regime.
    """
    if s < 1:
        raise DomainError(f"gauss_tail_bounds requires s >= 1, got s={s}")
    if a <= 0:
        raise DomainError(f"gauss_tail_bounds requires a > 0, got a={a}")
    upper = math.sqrt(s / (2.0 * math.pi)) / a * math.exp(-a * a / (2.0 * s))
    lower = (1.0 - s / (a * a)) * upper
    return lower, upper


def lalley_sellke_bound(s: float, mu: float) -> float:
    """Bound mu^-1 (2 pi s)^(-1/2) exp(-s (mu^2/2 - 1)) for P[L(s) <= -mu s].

    Valid for mu >= sqrt(2); the same value bounds P[R(s) >= mu s].
    """
    if mu < SQRT2:
        raise DomainError(f"lalley_sellke_bound requires mu >= sqrt(2), got {mu}")
    if s <= 0:
        raise DomainError(f"lalley_sellke_bound requires s > 0, got {s}")
    return math.exp(-s * (mu * mu / 2.0 - 1.0)) / (mu * math.sqrt(2.0 * math.pi * s))


def geometric_pmf(t: float, k: int) -> float:
    """P[N(t) = k] = e^-t (1 - e^-t)^(k-1); the population size is geometric."""
    if t <= 0:
        raise DomainError(f"geometric_pmf requires t > 0, got {t}")
    if k < 1:
        raise DomainError(f"geometric_pmf requires k >= 1, got {k}")
    p = math.exp(-t)
    return p * (1.0 - p) ** (k - 1)


def sigma_cdf(M: int, s: float) -> float:
    """P[sigma_M <= s] = (1 - e^-s)^M, the law of the M-th branch time."""
    if M < 1:
        raise DomainError(f"sigma_cdf requires M >= 1, got {M}")
    if s <= 0:
        return 0.0
    return (1.0 - math.exp(-s)) ** M


def sigma_density(M: int, s: float) -> float:
    """Density f_M(s) = 1_{s>=0} M e^-s (1 - e^-s)^(M-1) of the M-th branch time."""
    if M < 1:
        raise DomainError(f"sigma_density requires M >= 1, got {M}")
    if s < 0:
        return 0.0
    return M * math.exp(-s) * (1.0 - math.exp(-s)) ** (M - 1)


def gamma_prob(s: float, beta: float) -> float:
    """P[no branching by s and position <= -beta s] = e^-s P[B_s <= -beta s]."""
    if s <= 0:
        raise DomainError(f"gamma_prob requires s > 0, got {s}")
    return math.exp(-s) * gauss_tail_exact(s, beta * s)


def smalldev_bound(z: float, alpha: float, beta: float,
                   spec: BoundSpec = BoundSpec()) -> float:
    """Small-deviation bound C1 exp(-beta z / (6 sqrt(2))).

    Bounds the probability that the front ever drops beta*z below its
    centering within time horizon e^(alpha z); the bound itself does not
    depend on alpha.
    """
    if z <= 0 or alpha <= 0 or beta <= 0:
        raise DomainError("smalldev_bound requires z, alpha, beta > 0")
    return spec.C1 * math.exp(-beta * z / (6.0 * SQRT2))


def biggins_rate(a: float) -> float:
    """Growth rate 1 - a^2/2 of the count of particles at or below -a k.

    Defined for 0 <= a < sqrt(2); beyond sqrt(2) the rate is non-positive and
    the cohort is eventually empty.
    """
    if not 0.0 <= a < SQRT2:
        raise DomainError(f"biggins_rate requires 0 <= a < sqrt(2), got {a}")
    return 1.0 - a * a / 2.0


def bridge_exp_moment(k: float, s: float, x: float) -> float:
    """E[exp(sqrt(2) b_s)] for a Brownian bridge b from 0 to x over [0, k].

    Equals exp(s (k - s + sqrt(2) x) / k) for 0 <= s <= k.
    """
    if k <= 0:
        raise DomainError(f"bridge_exp_moment requires k > 0, got {k}")
    if not 0.0 <= s <= k:
        raise DomainError(f"bridge_exp_moment requires 0 <= s <= k, got s={s}")
    return math.exp(s * (k - s + SQRT2 * x) / k)
