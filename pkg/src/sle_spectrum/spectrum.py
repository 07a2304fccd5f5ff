"""Closed-form quadratics, exponent roots, duality and spectrum functions.

Every function accepts floats or ``fractions.Fraction``.  With rational
inputs the polynomial parts stay exact and square roots stay exact when the
radicand is a perfect rational square, so tests can use them as oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

Number = Union[float, int, Fraction]

HALF = Fraction(1, 2)


class InvalidKappa(ValueError):
    pass


def check_kappa(kappa: Number) -> Number:
    if isinstance(kappa, bool) or not isinstance(kappa, (int, float, Fraction)):
        raise InvalidKappa(f"kappa must be a real number, got {kappa!r}")
    if isinstance(kappa, float) and not math.isfinite(kappa):
        raise InvalidKappa(f"kappa must be finite, got {kappa!r}")
    if kappa <= 0:
        raise InvalidKappa(f"kappa must be positive, got {kappa!r}")
    return kappa


def _isqrt_exact(n: int) -> Optional[int]:
    if n < 0:
        return None
    r = math.isqrt(n)
    return r if r * r == n else None


def exact_sqrt(x: Number) -> Number:
    """sqrt that returns a Fraction when ``x`` is a rational perfect square."""
    if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
        x = Fraction(x)
        if x < 0:
            raise ValueError("negative radicand")
        n, d = _isqrt_exact(x.numerator), _isqrt_exact(x.denominator)
        if n is not None and d is not None:
            return Fraction(n, d)
        return math.sqrt(x)
    if isinstance(x, (float, int)):
        return math.sqrt(x)
    return x ** HALF if hasattr(x, "__rpow__") and not isinstance(x, Fraction) else math.sqrt(x)


@dataclass(frozen=True)
class MomentPoint:
    p: Number
    q: Number

    def __post_init__(self):
        for v in (self.p, self.q):
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError("moment exponents must be finite")


@dataclass(frozen=True)
class SpectrumQuadratics:
    a_sigma: Number
    c: Number
    beta: Number


@dataclass(frozen=True)
class GammaRoots:
    gamma_0: Optional[Number]
    gamma_0_plus: Optional[Number]
    gamma_1_minus: Optional[Number]
    gamma_1: Optional[Number]
    gamma_lin: Number


@dataclass(frozen=True)
class SpectrumBundle:
    beta_tip: Optional[Number]
    beta_0: Optional[Number]
    beta_1: Optional[Number]
    beta_lin: Number


@dataclass(frozen=True)
class Landmarks:
    p0: Number
    q0: Number
    p1: Number
    p_prime_0: Number
    q_prime_0_point: tuple  # Q_0, tip-corner of the bulk phase
    q0_prime_point: tuple   # Q'_0, on the right green branch
    p_star: float
    p_hat: Number
    p_of_kappa: Number


def _frac(kappa):
    # keep rational inputs rational: 1/κ etc.
    return Fraction(1) if isinstance(kappa, (Fraction, int)) else 1.0


def quad_A(kappa, pt: MomentPoint, gamma):
    return -kappa * gamma * gamma / 2 + gamma + pt.p - pt.q


def quad_C(kappa, pt: MomentPoint, gamma):
    return -kappa * gamma * gamma / 2 + (2 + kappa * _frac(kappa) / 2) * gamma - pt.p


def beta_gamma(kappa, pt: MomentPoint, gamma):
    return kappa * gamma * gamma - (2 + kappa * _frac(kappa) / 2) * gamma + pt.p


def quadratics(kappa, pt: MomentPoint, gamma) -> SpectrumQuadratics:
    return SpectrumQuadratics(quad_A(kappa, pt, gamma), quad_C(kappa, pt, gamma),
                              beta_gamma(kappa, pt, gamma))


def dual_gamma(kappa, gamma):
    one = _frac(kappa)
    return 2 * one / kappa + one / 2 - gamma


def gamma_lin(kappa):
    one = _frac(kappa)
    return one / kappa + one / 4


def disc_0(kappa, p):
    """Discriminant of C; the gamma_0 pair exists iff it is >= 0."""
    return (4 + kappa) ** 2 - 8 * kappa * p


def disc_1(kappa, pt: MomentPoint):
    """Discriminant of A (scaled); the gamma_1 pair exists iff it is >= 0."""
    return 1 + 2 * kappa * (pt.p - pt.q)


def gamma_roots(kappa, pt: MomentPoint) -> GammaRoots:
    check_kappa(kappa)
    one = _frac(kappa)
    g0 = g0p = g1m = g1 = None
    d0 = disc_0(kappa, pt.p)
    if d0 >= 0:
        s = exact_sqrt(d0)
        mid = 2 * one / kappa + one / 2
        g0, g0p = mid - s / (2 * kappa), mid + s / (2 * kappa)
    d1 = disc_1(kappa, pt)
    if d1 >= 0:
        s = exact_sqrt(d1)
        g1m, g1 = (1 - s) / kappa, (1 + s) / kappa
    return GammaRoots(g0, g0p, g1m, g1, gamma_lin(kappa))


def beta_from_pair(beta, gamma):
    """Spectrum value carried by an exponent: knee at gamma = -1/2."""
    if gamma >= -HALF:
        return beta
    return beta - 2 * gamma - 1


def beta_lin(kappa, p):
    return p - (4 + kappa) ** 2 / (16 * kappa * _frac(kappa))


def spectrum_functions(kappa, pt: MomentPoint) -> SpectrumBundle:
    r = gamma_roots(kappa, pt)
    b_tip = b0 = b1 = None
    if r.gamma_0 is not None:
        b0 = beta_gamma(kappa, pt, r.gamma_0)
        b_tip = b0 - 2 * r.gamma_0 - 1
    if r.gamma_1 is not None:
        b1 = beta_gamma(kappa, pt, r.gamma_1)
    return SpectrumBundle(b_tip, b0, b1, beta_lin(kappa, pt.p))


def landmarks(kappa) -> Landmarks:
    check_kappa(kappa)
    one = _frac(kappa)
    k = kappa * one
    x = (4 + k) ** 2
    p0 = 3 * x / (32 * k)
    q0 = (4 + k) * (8 + k) / (16 * k)
    p1 = (8 + k) * (8 + 3 * k) / (32 * k)
    pp0 = -1 - 3 * k / 8
    q_corner = (pp0, -2 - 7 * k / 8)
    # right green branch at gamma' = -(1 + 2/κ) meets p = p'_0
    gp = -(1 + 2 / k)
    q_prime = (pp0, x / (8 * k) + gp - k * gp * gp)
    s = math.sqrt(2 * float(x) + 4)
    p_star = (s - 6) * (s + 2) / (32 * float(k))
    return Landmarks(p0, q0, p1, pp0, q_corner, q_prime, p_star,
                     1 + k / 2, (6 + k) * (2 + k) / (8 * k))
