"""Gauss hypergeometric series, real gamma with poles, and test-function profiles.

A profile is the radial factor g_0 of a test function
(1 - |z|^2)^(-beta(gamma)) u^gamma g_0(u), u = |1 - z|^2, built from the two
Frobenius solutions of the reduced hypergeometric equation and normalized by
g_0(0) = 1 with no singular sqrt(4 - u) part at u = 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectrum import (
    MomentPoint, beta_gamma, dual_gamma, gamma_roots, quad_A,
)

SQRT_PI = math.sqrt(math.pi)
SWITCH_X = 0.75      # series below, connection formula above
INT_SNAP = 1e-9      # parameters this close to a non-positive integer are snapped
INT_AMBIG = 1e-6     # ... and between the two tolerances they are ambiguous
MAX_TERMS = 200000


class HypergeometricError(ValueError):
    pass


class PrecisionLoss(ArithmeticError):
    pass


class AmbiguousCase(ValueError):
    pass


class NotRepresentable(ValueError):
    pass


class MissingRoot(ValueError):
    pass


# -- gamma --------------------------------------------------------------------

@dataclass(frozen=True)
class GammaValue:
    argument: float
    value: float
    pole: bool


def is_pole(x: float) -> bool:
    return x <= 0 and x == math.floor(x)


def gamma_fn(x: float) -> GammaValue:
    if is_pole(x):
        return GammaValue(x, math.inf, True)
    try:
        return GammaValue(x, math.gamma(x), False)
    except OverflowError:
        return GammaValue(x, math.inf if x > 0 else 0.0, False)


def rgamma(x: float) -> float:
    """1/Gamma(x), exactly 0 at the poles."""
    if is_pole(x):
        return 0.0
    try:
        return 1.0 / math.gamma(x)
    except OverflowError:
        return 0.0


# -- 2F1 ----------------------------------------------------------------------

def _nonpos_int(a: float) -> Optional[int]:
    if a <= 0 and a == math.floor(a):
        return int(-a)
    return None


def _series(a, b, c, x):
    """Plain Gauss series with a tail bound; terminates on polynomial input."""
    if x == 0:
        return 1.0
    term, terms = 1.0, [1.0]
    n_stop = None
    for na in (_nonpos_int(a), _nonpos_int(b)):
        if na is not None:
            n_stop = na if n_stop is None else min(n_stop, na)
    k = 0
    while True:
        if n_stop is not None and k >= n_stop:
            return math.fsum(terms)
        if c + k == 0:
            raise HypergeometricError(f"c={c} hits a pole before the series terminates")
        ratio = (a + k) * (b + k) / ((c + k) * (k + 1)) * x
        term *= ratio
        terms.append(term)
        k += 1
        if n_stop is None and k > 2:
            s = math.fsum(terms)
            # tail bound once the ratio has settled below one
            r = abs((a + k) * (b + k) / ((c + k) * (k + 1)) * x)
            if r < 1 and abs(term) * r / (1 - r) <= 1e-17 * max(abs(s), 1e-300):
                return s
            if k > MAX_TERMS:
                raise PrecisionLoss(f"2F1({a},{b};{c};{x}) did not converge")


def _connection(a, b, c, x):
    """x -> 1 - x connection for non-integer c - a - b."""
    s = c - a - b
    if s == math.floor(s):
        raise HypergeometricError("connection formula needs non-integer c-a-b")
    y = 1.0 - x
    gc = gamma_fn(c)
    if gc.pole:
        raise HypergeometricError(f"c={c} is a pole")
    t1 = gc.value * math.gamma(s) * rgamma(c - a) * rgamma(c - b)
    t2 = gc.value * math.gamma(-s) * rgamma(a) * rgamma(b)
    v = 0.0
    if t1 != 0.0:
        v += t1 * _series(a, b, 1 - s, y)
    if t2 != 0.0:
        v += t2 * y ** s * _series(c - a, c - b, 1 + s, y)
    return v


def gauss_2f1(a: float, b: float, c: float, x: float) -> float:
    poly = _nonpos_int(a) is not None or _nonpos_int(b) is not None
    # a terminating series is a polynomial, so x = 1 is allowed for it
    if not (0.0 <= x < 1.0 or poly and x == 1.0):
        raise HypergeometricError(f"x={x} outside [0, 1)")
    if poly or x <= SWITCH_X:
        return _series(a, b, c, x)
    if abs((c - a - b) - round(c - a - b)) < 1e-12:
        # integer c-a-b only appears outside the family used here
        return _series(a, b, c, x)
    return _connection(a, b, c, x)


def gauss_2f1_derivs(a, b, c, x):
    """(F, dF/dx, d2F/dx2) via the contiguous shift rule."""
    f0 = gauss_2f1(a, b, c, x)
    k1 = a * b / c
    f1 = k1 * gauss_2f1(a + 1, b + 1, c + 1, x) if k1 != 0 else 0.0
    k2 = k1 * (a + 1) * (b + 1) / (c + 1)
    f2 = k2 * gauss_2f1(a + 2, b + 2, c + 2, x) if k2 != 0 else 0.0
    return f0, f1, f2


# -- parameters and profiles --------------------------------------------------

@dataclass(frozen=True)
class HyperParams:
    a: float
    b: float
    c: float
    a_p: float
    b_p: float
    c_p: float


def hyper_params(kappa, pt: MomentPoint, gamma) -> HyperParams:
    r = gamma_roots(kappa, pt)
    if r.gamma_1 is None:
        raise MissingRoot("gamma_1 pair absent above Delta_1")
    gd = dual_gamma(kappa, gamma)
    g1, g1m = r.gamma_1, r.gamma_1_minus
    hp = HyperParams(gamma - g1, gamma - g1m, 1 + gamma - gd,
                     gd - g1, gd - g1m, 1 + gd - gamma)
    assert abs((hp.c - hp.a - hp.b) - 0.5) < 1e-9 * (1 + abs(hp.c) + abs(hp.a) + abs(hp.b))
    return hp


def _snap(v: float):
    """(value, n): n is set when v is a non-positive integer up to INT_SNAP."""
    n = round(-v)
    if n >= 0 and abs(v + n) <= INT_SNAP * (1 + n):
        return float(-n), n
    if n >= 0 and abs(v + n) <= INT_AMBIG * (1 + n):
        raise AmbiguousCase(f"parameter {v!r} is within {INT_AMBIG} of -{n}")
    return v, None


@dataclass(frozen=True)
class TestProfile:
    """Standard profile g_0(u) = c1 F(a,b;c;u/4) + c2 (u/4)^(gamma'-gamma) F(a',b';c';u/4).

    ``gamma`` is the exponent actually carried by u^gamma (the smaller of the
    dual pair for cases III and IV, the terminating one for I and II);
    ``requested_gamma`` is what the caller asked for.
    """
    __test__ = False  # keep pytest from collecting the class

    kappa: float
    p: float
    q: float
    gamma: float
    gamma_dual: float
    case: str
    params: HyperParams
    c1: float = 1.0
    c2: float = 0.0
    n: Optional[int] = None
    m: Optional[int] = None
    requested_gamma: Optional[float] = None

    @property
    def point(self) -> MomentPoint:
        return MomentPoint(self.p, self.q)

    @property
    def beta(self) -> float:
        return beta_gamma(self.kappa, self.point, self.gamma)

    def to_text(self) -> str:
        keys = ("kappa", "p", "q", "gamma", "gamma_dual", "case", "c1", "c2", "n", "m")
        return "\n".join(f"{k}={getattr(self, k)!r}" for k in keys) + "\n"


def _profile(kappa, pt, gamma, case, c1, c2, n=None, m=None, requested=None):
    hp = hyper_params(kappa, pt, gamma)
    a, _ = _snap(float(hp.a))
    b, _ = _snap(float(hp.b))
    ap, _ = _snap(float(hp.a_p))
    bp, _ = _snap(float(hp.b_p))
    hp = HyperParams(a, b, float(hp.c), ap, bp, float(hp.c_p))
    return TestProfile(float(kappa), float(pt.p), float(pt.q), float(gamma),
                       float(dual_gamma(kappa, gamma)), case, hp, c1, c2, n, m,
                       requested if requested is not None else float(gamma))


def c0_coefficient(hp: HyperParams) -> float:
    """C_2/C_1 making the sqrt(4-u) parts of both solutions cancel."""
    return -(gamma_fn(hp.c).value * math.gamma(hp.a_p) * math.gamma(hp.b_p)
             * rgamma(hp.a) * rgamma(hp.b) * rgamma(hp.c_p))


def _checked(prof: TestProfile) -> TestProfile:
    """Reject terminating profiles whose polynomial meets a pole of c first."""
    hp = prof.params
    blocks = [(hp.a, hp.b, hp.c)] + ([(hp.a_p, hp.b_p, hp.c_p)] if prof.c2 else [])
    for a, b, c in blocks:
        try:
            _series(a, b, c, 0.5)
        except HypergeometricError as exc:
            raise NotRepresentable(f"case {prof.case}: {exc}") from None
    return prof


def build_test_profile(kappa, pt: MomentPoint, gamma, case3_constant: float = 1.0) -> TestProfile:
    hp = hyper_params(kappa, pt, gamma)
    gd = dual_gamma(kappa, gamma)
    _, na = _snap(float(hp.a))
    _, nb = _snap(float(hp.b))
    _, nap = _snap(float(hp.a_p))
    _, nbp = _snap(float(hp.b_p))
    n_here = na if na is not None else nb
    n_dual = nap if nap is not None else nbp
    if n_here is not None and n_dual is not None:
        lo, hi = (gamma, gd) if gamma <= gd else (gd, gamma)
        n_lo, n_hi = (n_here, n_dual) if gamma <= gd else (n_dual, n_here)
        return _checked(_profile(kappa, pt, lo, "III", 1.0, case3_constant, n_lo, n_hi, float(gamma)))
    if n_here is not None:
        return _checked(_profile(kappa, pt, gamma, "II", 1.0, 0.0, n_here, None, float(gamma)))
    if n_dual is not None:
        return _checked(_profile(kappa, pt, gd, "I", 1.0, 0.0, n_dual, None, float(gamma)))
    if not gamma < gd:
        raise NotRepresentable(f"gamma={gamma} is not below its dual {gd} and no series terminates")
    if is_pole(hp.c) or abs(hp.c - round(hp.c)) < INT_SNAP and hp.c <= 0:
        raise NotRepresentable(f"c={hp.c} is a pole (logarithmic case)")
    prof = _profile(kappa, pt, gamma, "IV", 1.0, 0.0)
    return _profile(kappa, pt, gamma, "IV", 1.0, c0_coefficient(prof.params), requested=float(gamma))


def regularity_defect(profile: TestProfile) -> float:
    hp = profile.params
    t1 = profile.c1 * SQRT_PI * gamma_fn(hp.c).value * rgamma(hp.a) * rgamma(hp.b) if profile.c1 else 0.0
    t2 = profile.c2 * SQRT_PI * gamma_fn(hp.c_p).value * rgamma(hp.a_p) * rgamma(hp.b_p) if profile.c2 else 0.0
    return t1 + t2


def _regular_part(a, b, c, y):
    """Analytic part at x = 1 of 2F1(a,b;c;1-y) when c-a-b = 1/2, with y-derivatives."""
    amp = gamma_fn(c).value * SQRT_PI * rgamma(c - a) * rgamma(c - b)
    if amp == 0.0:
        return 0.0, 0.0, 0.0
    f0, f1, f2 = gauss_2f1_derivs(a, b, 0.5, y)
    return amp * f0, amp * f1, amp * f2


def _power_derivs(d, x):
    if x == 0.0:
        if d == 0:
            return 1.0, 0.0, 0.0
        return 0.0, (math.inf if d < 1 else float(d == 1)), (math.inf if d < 2 else float(2 * (d == 2)))
    xd = x ** d
    return xd, d * xd / x, d * (d - 1) * xd / (x * x)


def eval_g0(profile: TestProfile, u: float):
    """g_0(u) with its first and second u-derivatives."""
    if not 0.0 <= u <= 4.0:
        raise ValueError(f"u={u} outside [0, 4]")
    hp = profile.params
    x = u / 4.0
    d = profile.gamma_dual - profile.gamma
    polynomial = profile.case in ("I", "II", "III")
    if polynomial or x <= SWITCH_X:
        first = gauss_2f1_derivs(hp.a, hp.b, hp.c, x) if profile.c1 else (0.0, 0.0, 0.0)
        second = gauss_2f1_derivs(hp.a_p, hp.b_p, hp.c_p, x) if profile.c2 else (0.0, 0.0, 0.0)
    else:
        # sqrt(1-x) parts cancel by regularity; keep only the analytic parts
        y = 1.0 - x
        r = _regular_part(hp.a, hp.b, hp.c, y)
        first = (r[0], -r[1], r[2])
        r = _regular_part(hp.a_p, hp.b_p, hp.c_p, y) if profile.c2 else (0.0, 0.0, 0.0)
        second = (r[0], -r[1], r[2])
    g = profile.c1 * first[0]
    g1 = profile.c1 * first[1]
    g2 = profile.c1 * first[2]
    if profile.c2:
        w0, w1, w2 = _power_derivs(d, x)
        g += profile.c2 * w0 * second[0]
        g1 += profile.c2 * (w1 * second[0] + w0 * second[1])
        g2 += profile.c2 * (w2 * second[0] + 2 * w1 * second[1] + w0 * second[2])
    return g, g1 / 4.0, g2 / 16.0


def connection_consistency(profile: TestProfile, x: float = SWITCH_X) -> float:
    """Relative mismatch of the series form and the analytic-part form at x."""
    if profile.case != "IV":
        return 0.0
    hp = profile.params
    d = profile.gamma_dual - profile.gamma
    s = gauss_2f1(hp.a, hp.b, hp.c, x) + profile.c2 * x ** d * gauss_2f1(hp.a_p, hp.b_p, hp.c_p, x)
    y = 1.0 - x
    r = _regular_part(hp.a, hp.b, hp.c, y)[0] + profile.c2 * x ** d * _regular_part(hp.a_p, hp.b_p, hp.c_p, y)[0]
    return abs(s - r) / max(abs(s), 1e-300)


def ode_residual(profile: TestProfile, u: float) -> float:
    """Residual of the reduced equation for g_0, scaled by its term sizes."""
    k, gm = profile.kappa, profile.gamma
    A = quad_A(k, profile.point, gm)
    g, g1, g2 = eval_g0(profile, u)
    terms = (A * g, (k / 2 * (2 - u) + (k * gm - 1) * (4 - u)) * g1, k / 2 * (4 - u) * u * g2)
    # A is itself a cancelling sum, so its size counts its summands
    a_size = k * gm * gm / 2 + abs(gm) + abs(profile.p) + abs(profile.q)
    scale = a_size * abs(g) + abs(terms[1]) + abs(terms[2])
    return abs(math.fsum(terms)) / max(scale, 1e-300)


def boundary_residual(profile: TestProfile, u: float) -> float:
    """Residual of the boundary equation satisfied by g(u) = u^gamma g_0(u)."""
    k, gm, p, q = profile.kappa, profile.gamma, profile.p, profile.q
    g0, g01, g02 = eval_g0(profile, u)
    ug = u ** gm
    g = ug * g0
    gp = ug * (gm / u * g0 + g01)
    gpp = ug * (gm * (gm - 1) / u ** 2 * g0 + 2 * gm / u * g01 + g02)
    b = beta_gamma(k, profile.point, gm)
    terms = ((2 * p - (q - p) * u - 2 * b) * g, (k / 2 * (2 - u) - (4 - u)) * u * gp,
             k / 2 * (4 - u) * u * u * gpp)
    b_size = k * gm * gm + (2 + k / 2) * abs(gm) + abs(p)
    scale = (2 * abs(p) + abs(q - p) * u + 2 * b_size) * abs(g) + abs(terms[1]) + abs(terms[2])
    return abs(math.fsum(terms)) / max(scale, 1e-300)


def endpoint_g1_closed_form(profile: TestProfile) -> Optional[float]:
    """Closed-form value at u = 4 of the regular combination, or None at Gamma poles."""
    hp = profile.params
    args = (0.5 + hp.a + hp.b, 0.5 - hp.a, 0.5 - hp.b)
    if any(is_pole(t) for t in args):
        return None
    prod = math.prod(math.gamma(t) for t in args)
    return profile.c1 * math.pi ** -1.5 * math.cos(math.pi * (hp.a + hp.b)) * prod


def positivity_certificate(profile: TestProfile, n_grid: int = 4096) -> str:
    r = gamma_roots(profile.kappa, profile.point)
    g1d = dual_gamma(profile.kappa, r.gamma_1)
    if min(profile.gamma, profile.gamma_dual) < g1d:
        return "ProvedPositive"
    for i in range(n_grid):
        u = 4.0 * i / (n_grid - 1)
        if eval_g0(profile, u)[0] < -1e-12:
            return "Indefinite"
    return "NumericallyPositive"


# -- array evaluation (same math, Taylor coefficients + Horner) ---------------

def taylor_coeffs(a, b, c, x_max, rtol=1e-18, cap=20000):
    """Coefficients of 2F1(a,b;c;x) until the remaining tail at x_max is negligible."""
    coeffs = [1.0]
    n_stop = None
    for na in (_nonpos_int(a), _nonpos_int(b)):
        if na is not None:
            n_stop = na if n_stop is None else min(n_stop, na)
    k, t, big = 0, 1.0, 1.0
    while True:
        if n_stop is not None and k >= n_stop:
            break
        if c + k == 0:
            raise HypergeometricError(f"c={c} hits a pole before the series terminates")
        t *= (a + k) * (b + k) / ((c + k) * (k + 1))
        coeffs.append(t)
        k += 1
        tx = abs(t) * x_max ** k
        big = max(big, tx)
        if n_stop is None and k > 4:
            r = abs((a + k) * (b + k) / ((c + k) * (k + 1))) * x_max
            if r < 1 and tx * r / (1 - r) <= rtol * big:
                break
            if k > cap:
                raise PrecisionLoss(f"2F1({a},{b};{c}) needs more than {cap} terms at x={x_max}")
    return np.asarray(coeffs)


def _horner3(coeffs, x):
    """Polynomial with its first two derivatives."""
    p = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    for cf in coeffs[::-1]:
        d2 = d2 * x + 2 * d1
        d1 = d1 * x + p
        p = p * x + cf
    return p, d1, d2


def g0_array(profile: TestProfile, u):
    """Vectorized eval_g0: arrays (g_0, g_0', g_0'') in u."""
    u = np.asarray(u, dtype=float)
    x = u / 4.0
    hp = profile.params
    d = profile.gamma_dual - profile.gamma
    polynomial = profile.case in ("I", "II", "III")
    lo = np.ones(x.shape, bool) if polynomial else x <= SWITCH_X
    hi = ~lo
    g = np.zeros_like(x)
    g1 = np.zeros_like(x)
    g2 = np.zeros_like(x)
    terms = [(profile.c1, hp.a, hp.b, hp.c, 0.0), (profile.c2, hp.a_p, hp.b_p, hp.c_p, d)]
    for coef, a, b, c, dd in terms:
        if coef == 0:
            continue
        f = np.zeros_like(x)
        f1 = np.zeros_like(x)
        f2 = np.zeros_like(x)
        if lo.any():
            xl = x[lo]
            cf = taylor_coeffs(a, b, c, float(xl.max()) if xl.size else 0.0)
            f[lo], f1[lo], f2[lo] = _horner3(cf, xl)
        if hi.any():
            amp = gamma_fn(c).value * SQRT_PI * rgamma(c - a) * rgamma(c - b)
            if amp != 0.0:
                y = 1.0 - x[hi]
                cf = taylor_coeffs(a, b, 0.5, float(y.max()))
                h0, h1, h2 = _horner3(cf, y)
                f[hi], f1[hi], f2[hi] = amp * h0, -amp * h1, amp * h2
        if dd != 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                w0 = x ** dd
                w1 = np.where(x > 0, dd * w0 / x, np.inf if dd < 1 else float(dd == 1))
                w2 = np.where(x > 0, dd * (dd - 1) * w0 / (x * x), np.inf if dd < 2 else float(2 * (dd == 2)))
            f, f1, f2 = w0 * f, w1 * f + w0 * f1, w2 * f + 2 * w1 * f1 + w0 * f2
        g += coef * f
        g1 += coef * f1
        g2 += coef * f2
    return g, g1 / 4.0, g2 / 16.0
