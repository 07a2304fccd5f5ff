"""Transition curves, region classifiers and the conjectured phase diagram.

Regions are decided through inequalities between the exponent roots rather
than through curve geometry, e.g. a point lies to the right of the left green
branch iff dual(gamma_1) < gamma_0.  Boundary ties go to the earlier phase in
the order Tip < Bulk < Linear < One.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .spectrum import (
    MomentPoint, beta_gamma, check_kappa, dual_gamma, exact_sqrt, gamma_roots,
    landmarks, quad_C, spectrum_functions, _frac,
)


class Phase(str, Enum):
    Tip = "Tip"
    Bulk = "Bulk"
    Linear = "Linear"
    One = "One"


class Validity(str, Enum):
    ProvedDHLZ_I = "ProvedDHLZ_I"
    ProvedDHLZ_II = "ProvedDHLZ_II"
    ProvedDHLZ_III = "ProvedDHLZ_III"
    ProvedDHLZ_IV = "ProvedDHLZ_IV"
    ProvedNew = "ProvedNew"
    UpperBoundOnly = "UpperBoundOnly"
    LowerBoundOnly = "LowerBoundOnly"
    Unknown = "Unknown"


class Zone(str, Enum):
    ZoneI = "ZoneI"
    ZoneII = "ZoneII"
    ZoneIII = "ZoneIII"
    ZoneIV = "ZoneIV"
    Outside = "Outside"


class Unclassifiable(ValueError):
    pass


class CurveDefect(ArithmeticError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    gamma: float
    p: float
    q: float
    curve: str  # Red, Green or BlueQuartic


@dataclass(frozen=True)
class Line:
    name: str
    kind: str      # "vertical": p = value ; "diagonal": q - p = value
    value: float

    def side(self, pt: MomentPoint):
        """Signed offset: > 0 means right of a vertical line / above a diagonal one."""
        if self.kind == "vertical":
            return pt.p - self.value
        return (pt.q - pt.p) - self.value


# -- curves -------------------------------------------------------------------

def red_point(kappa, gamma) -> CurvePoint:
    one = _frac(kappa)
    p = (2 + kappa * one / 2) * gamma - kappa * gamma * gamma / 2
    q = (3 + kappa * one / 2) * gamma - kappa * gamma * gamma
    return CurvePoint(gamma, p, q, "Red")


def green_point(kappa, gamma_dual) -> CurvePoint:
    x = (4 + kappa) ** 2 / (8 * kappa * _frac(kappa))
    p = x - kappa * gamma_dual * gamma_dual / 2
    q = p + gamma_dual - kappa * gamma_dual * gamma_dual / 2
    return CurvePoint(gamma_dual, p, q, "Green")


def red_green_intersections(kappa) -> tuple:
    """(P_0, P_1): matching the q - p parts forces gamma' = gamma or 2/kappa - gamma."""
    one = _frac(kappa)
    return (red_point(kappa, (4 + kappa) * one / (4 * kappa)),
            red_point(kappa, (8 + kappa) * one / (4 * kappa)))


def quartic_delta(kappa, gamma):
    one = _frac(kappa)
    return (4 * kappa ** 2 * gamma ** 2 - 2 * kappa * (4 + kappa) * gamma
            + (8 + kappa) ** 2 * one / 4 + 4 * kappa)


def blue_quartic_point(kappa, gamma, check: bool = True) -> CurvePoint:
    one = _frac(kappa)
    d = quartic_delta(kappa, gamma)
    assert d >= 0, "quartic discriminant is positive for kappa > 0"
    p = kappa * one / 16 + (1 + kappa * one / 4) * gamma - kappa * gamma * gamma / 2 - exact_sqrt(d) / 8
    q = p + gamma - kappa * gamma * gamma / 2
    if check:
        bt = spectrum_functions(kappa, MomentPoint(p, q)).beta_tip
        if bt is None or abs(beta_gamma(kappa, MomentPoint(p, q), gamma) - bt) > 1e-9 * (1 + abs(bt)):
            raise CurveDefect(f"quartic point at gamma={gamma} fails beta(gamma) = beta_tip(p)")
    return CurvePoint(gamma, p, q, "BlueQuartic")


def blue_quartic_point_printed(kappa, gamma) -> CurvePoint:
    """The parametrization as typeset in the source; kept for comparison only."""
    d = quartic_delta(kappa, gamma)
    p = kappa / 16 * (1 + kappa / 4) * gamma - kappa * gamma ** 2 / 2 - math.sqrt(d) / 8
    q = p + gamma - kappa * gamma ** 2
    return CurvePoint(gamma, p, q, "BlueQuartic")


def transition_lines(kappa) -> dict:
    check_kappa(kappa)
    one = _frac(kappa)
    k = kappa * one
    lm = landmarks(kappa)
    return {
        "D'_0": Line("D'_0", "vertical", lm.p_prime_0),
        "D_0": Line("D_0", "vertical", lm.p0),
        "D_1": Line("D_1", "diagonal", (16 - k * k) / (32 * k)),
        "D_3": Line("D_3", "diagonal", -1 - k / 2),
        "D_4": Line("D_4", "diagonal", -(2 + k) * (4 + k) / (2 * k)),
        "Delta_0": Line("Delta_0", "vertical", (4 + k) ** 2 / (8 * k)),
        "Delta_1": Line("Delta_1", "diagonal", 1 / (2 * k)),
    }


def sample_curves(kappa, n: int = 200, span: float = 4.0) -> list:
    """Evenly spaced samples of the three transition curves."""
    k = float(kappa)
    out = []
    lo, hi = 1 / k - span, 2 / k + 0.5 + span
    for i in range(n):
        g = lo + (hi - lo) * i / (n - 1)
        out.append(red_point(k, g))
        out.append(green_point(k, g - 0.5))
        out.append(blue_quartic_point(k, g, check=False))
    return out


# -- predicates ---------------------------------------------------------------

def _roots(kappa, pt):
    r = gamma_roots(kappa, pt)
    g1d = dual_gamma(kappa, r.gamma_1) if r.gamma_1 is not None else None
    return r, g1d


def below_delta1(kappa, pt) -> bool:
    return (pt.q - pt.p) < 1 / (2 * kappa * _frac(kappa))


def in_sector(kappa, pt) -> bool:
    """The sector where both gamma_0 and gamma_1 are defined (open)."""
    lines = transition_lines(kappa)
    return lines["Delta_1"].side(pt) < 0 and lines["Delta_0"].side(pt) < 0


def classify_conjecture(kappa, pt: MomentPoint) -> Phase:
    check_kappa(kappa)
    lines = transition_lines(kappa)
    r, g1d = _roots(kappa, pt)
    off_d0 = lines["D_0"].side(pt)
    off_d1 = lines["D_1"].side(pt)
    if off_d0 > 0 or (off_d0 == 0 and off_d1 < 0):
        return Phase.Linear if off_d1 >= 0 else Phase.One
    if r.gamma_0 is None:
        raise Unclassifiable("gamma_0 missing left of D_0")
    tip_side = lines["D'_0"].side(pt) <= 0
    if r.gamma_1 is None:
        return Phase.Tip if tip_side else Phase.Bulk
    if tip_side:
        sb = spectrum_functions(kappa, pt)
        return Phase.One if sb.beta_1 > sb.beta_tip else Phase.Tip
    return Phase.One if g1d < r.gamma_0 else Phase.Bulk


def conjectured_beta(kappa, pt: MomentPoint):
    ph = classify_conjecture(kappa, pt)
    sb = spectrum_functions(kappa, pt)
    val = {Phase.Tip: sb.beta_tip, Phase.Bulk: sb.beta_0,
           Phase.Linear: sb.beta_lin, Phase.One: sb.beta_1}[ph]
    if val is None:
        raise Unclassifiable(f"phase {ph.value} has no spectrum value at {pt}")
    return val


def red_interior_margin(kappa, pt):
    """> 0 strictly inside the red parabola (implicit form)."""
    one = _frac(kappa)
    g = (2 * pt.p - pt.q) / (1 + kappa * one / 2)
    return (2 + kappa * one / 2) * g - kappa * g * g / 2 - pt.p


def green_interior_margin(kappa, pt):
    """> 0 strictly inside the green parabola (implicit form)."""
    x = (4 + kappa) ** 2 / (8 * kappa * _frac(kappa))
    gd = pt.q - 2 * pt.p + x
    return x - kappa * gd * gd / 2 - pt.p


def partition_EIE(kappa, pt: MomentPoint) -> str:
    if not below_delta1(kappa, pt):
        return "AboveDelta1"
    if red_interior_margin(kappa, pt) > 0:
        return "I"
    # the two exterior components touch at the tangency point with Delta_1;
    # they are told apart by the sign of C at gamma_1
    g1 = gamma_roots(kappa, pt).gamma_1
    return "E_minus" if quad_C(kappa, pt, g1) > 0 else "E_plus"


def in_D(kappa, pt) -> bool:
    """Old proved domain between the green branches, left of D_0."""
    if not in_sector(kappa, pt):
        return False
    r, g1d = _roots(kappa, pt)
    one = _frac(kappa)
    return g1d < r.gamma_0 < min(r.gamma_1, g1d + 2 * one / kappa, r.gamma_lin)


def in_D_hat(kappa, pt) -> bool:
    if classify_conjecture(kappa, pt) is not Phase.One or not in_sector(kappa, pt):
        return False
    if transition_lines(kappa)["D_3"].side(pt) < 0:
        return False
    return partition_EIE(kappa, pt) in ("I", "E_minus")


def classify_validity(kappa, pt: MomentPoint) -> Validity:
    ph = classify_conjecture(kappa, pt)
    if ph in (Phase.Tip, Phase.Bulk):
        return Validity.ProvedDHLZ_I
    if ph is Phase.Linear:
        return Validity.ProvedDHLZ_II
    if in_D(kappa, pt):
        return Validity.ProvedDHLZ_III
    if in_D_hat(kappa, pt):
        return Validity.ProvedDHLZ_IV
    part = partition_EIE(kappa, pt)
    if part == "I":
        return Validity.ProvedNew
    if part == "E_plus":
        return Validity.UpperBoundOnly
    if part == "E_minus":
        return Validity.LowerBoundOnly
    return Validity.Unknown


def zone_inequalities(kappa, pt):
    """(gamma_0, gamma_1, dual gamma_1) or None when a root is missing."""
    r, g1d = _roots(kappa, pt)
    if r.gamma_0 is None or r.gamma_1 is None:
        return None
    return r.gamma_0, r.gamma_1, g1d


def proof_zone(kappa, pt: MomentPoint) -> Zone:
    if not in_sector(kappa, pt) or classify_conjecture(kappa, pt) is not Phase.One:
        return Zone.Outside
    g0, g1, g1d = zone_inequalities(kappa, pt)
    one = _frac(kappa)
    g1d2 = g1d + 2 * one / kappa
    h = -one / 2
    if max(h, g1d) < g0 < min(g1d2, g1):
        return Zone.ZoneI
    if g1d < g0 < min(h, g1d2) and g0 < g1:
        return Zone.ZoneII
    if g1d2 < min(h, g0) and g0 < g1:
        return Zone.ZoneIII
    if max(h, g1d) < min(g1d2, g1) < g0:
        return Zone.ZoneIV
    return Zone.Outside


# -- m-fold symmetry ----------------------------------------------------------

@dataclass(frozen=True)
class MFoldTransform:
    m: int

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m == 0:
            raise ValueError("m must be a nonzero integer")

    def forward(self, pt: MomentPoint) -> MomentPoint:
        inv = Fraction(1, self.m)
        if not isinstance(pt.p, Fraction) or not isinstance(pt.q, Fraction):
            inv = 1 / self.m
        return MomentPoint(pt.p, (1 - inv) * pt.p + inv * pt.q)

    def inverse(self, pt: MomentPoint) -> MomentPoint:
        return MomentPoint(pt.p, (1 - self.m) * pt.p + self.m * pt.q)


def m_fold_beta(kappa, m: int, pt: MomentPoint):
    if m == 0:
        raise ValueError("m must be nonzero")
    one = _frac(kappa)
    rad = 1 + 2 * kappa * (pt.p - pt.q) / (m * one)
    if rad < 0:
        raise ValueError("m-fold spectrum undefined: negative radicand")
    return (1 + 2 * one / m) * pt.p - 2 * pt.q / (m * one) - one / 2 - exact_sqrt(rad) / 2
