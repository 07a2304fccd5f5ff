"""The moment operator P(D) on the disk: closed-form action, finite differences,
sign scans of sub-/super-solutions and the zone-wise sub-solution recipe.

Points near the circle are addressed by eta = 1 - r, so that 1 - r^2 and
u = |1 - z|^2 keep full relative precision down to eta ~ 1e-12.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .phase import Zone, proof_zone
from .spectrum import (
    MomentPoint, beta_from_pair, beta_gamma, dual_gamma, gamma_roots, quad_A,
    quad_C,
)
from .special import AmbiguousCase, TestProfile, build_test_profile, g0_array

log = logging.getLogger(__name__)

NEAR_FOUR = 1e-4   # below this 4-u the removable singularity is evaluated by a midpoint slope


class InadmissibleProfile(ValueError):
    pass


class ConstructionFailed(RuntimeError):
    pass


class MeshTooCoarse(RuntimeError):
    pass


@dataclass(frozen=True)
class DiskPoint:
    eta: float      # 1 - r
    theta: float

    @property
    def r(self):
        return 1.0 - self.eta

    @property
    def z(self):
        return self.r * complex(math.cos(self.theta), math.sin(self.theta))

    @property
    def u(self):
        return float(disk_u(self.eta, self.theta))

    @classmethod
    def from_polar(cls, r, theta):
        return cls(1.0 - r, theta)


def disk_u(eta, theta):
    r = 1.0 - eta
    return eta * eta + 4.0 * r * np.sin(theta / 2) ** 2


def one_minus_r2(eta):
    return eta * (2.0 - eta)


@dataclass(frozen=True)
class MixedProfile:
    psi0: TestProfile
    psi1: TestProfile


@dataclass(frozen=True)
class LogModified:
    base: Union[TestProfile, MixedProfile]
    delta: float


@dataclass
class SignReport:
    verdict: str
    vmin: float
    vmax: float
    worst: tuple           # (r, theta) of the value closest to the wrong sign
    positive: bool         # test function itself stayed positive on the grid
    r_range: tuple
    shape: tuple
    values: Optional[np.ndarray] = None
    radii: Optional[np.ndarray] = None
    angles: Optional[np.ndarray] = None

    def to_csv(self) -> str:
        lines = ["r,theta,value"]
        if self.values is not None:
            for i, rr in enumerate(self.radii):
                for j, th in enumerate(self.angles):
                    lines.append(f"{rr:.17g},{th:.17g},{self.values[i, j]:.17g}")
        lines.append(f"# verdict={self.verdict} min={self.vmin:.17g} max={self.vmax:.17g}"
                     f" r=[{self.r_range[0]:.17g},{self.r_range[1]:.17g}] grid={self.shape[0]}x{self.shape[1]}")
        return "\n".join(lines) + "\n"


# -- closed forms ----------------------------------------------------------------

def ansatz_action(kappa, p, q, beta, gamma, eta, theta):
    """P(D)G/G for G = (1-|z|^2)^(-beta) u^gamma."""
    pt = MomentPoint(p, q)
    A, C = quad_A(kappa, pt, gamma), quad_C(kappa, pt, gamma)
    bg = beta_gamma(kappa, pt, gamma)
    u = disk_u(eta, theta)
    w = one_minus_r2(eta) / u
    r2 = (1.0 - eta) ** 2
    return 2 * (bg - beta) * r2 / u + C * w * w + (A + C) * w + A


def _blocks(profile: TestProfile, eta, theta):
    """The blocks of P(D)psi/psi carried by (1-|z|^2) and (1-|z|^2)^2/u^2, unweighted."""
    k, gm = profile.kappa, profile.gamma
    pt = profile.point
    A, C = quad_A(k, pt, gm), quad_C(k, pt, gm)
    u = disk_u(np.asarray(eta, float), np.asarray(theta, float))
    if np.any(u <= 0):
        raise ZeroDivisionError("operator action is singular at z = 1")
    g, g1, g2 = g0_array(profile, u)
    L = g1 / g
    L4 = A / k                     # endpoint value of g_0'/g_0
    h = 4.0 - u
    with np.errstate(divide="ignore", invalid="ignore"):
        D = (L4 - L) / h
    near = h < NEAR_FOUR
    if np.any(near):
        # (L(4) - L(u))/(4 - u) ~ L'(midpoint)
        um = (u[near] + 4.0) / 2
        gm0, gm1, gm2 = g0_array(profile, um)
        D[near] = gm2 / gm0 - (gm1 / gm0) ** 2
    first = -(C + A) / u + 2 * k * D + (k / 2 - 1) * L
    second = 4 * k * D + k * L + (profile.q - 2 * profile.p) + (k / 2 + 1) * (gm + u * L)
    return first, second, u, g


def action_closed_form(profile: TestProfile, eta, theta):
    first, second, u, _ = _blocks(profile, eta, theta)
    m = one_minus_r2(np.asarray(eta, float))
    w = m / u
    return m * first + w * w * second


def log_term(delta, eta, theta):
    """Correction -2 delta |z|^2 / (u (-log(1-|z|^2))) from the log factor."""
    eta = np.asarray(eta, float)
    u = disk_u(eta, np.asarray(theta, float))
    return -2 * delta * (1 - eta) ** 2 / (u * -np.log(one_minus_r2(eta)))


def log_psi(profile: TestProfile, eta, theta):
    """(log|psi|, sign psi) for the standard function carried by the profile."""
    eta = np.asarray(eta, float)
    u = disk_u(eta, np.asarray(theta, float))
    g = g0_array(profile, u)[0]
    lp = -profile.beta * np.log(one_minus_r2(eta)) + profile.gamma * np.log(u) + np.log(np.abs(g))
    return lp, np.sign(g)


def mixed_ratio(mp: MixedProfile, eta, theta):
    """(P(D)psi/psi, psi/psi1) for psi = psi0 + psi1."""
    r0 = action_closed_form(mp.psi0, eta, theta)
    r1 = action_closed_form(mp.psi1, eta, theta)
    l0, s0 = log_psi(mp.psi0, eta, theta)
    l1, s1 = log_psi(mp.psi1, eta, theta)
    with np.errstate(over="ignore"):
        rho = s0 * s1 * np.exp(l0 - l1)
    big = np.abs(rho) > 1e250
    out = np.where(big, r0, (r0 * rho + r1) / np.where(big, 1.0, rho + 1))
    return out, rho + 1


def action_log_modified(fn: LogModified, eta, theta):
    if isinstance(fn.base, MixedProfile):
        base, _ = mixed_ratio(fn.base, eta, theta)
    else:
        base = action_closed_form(fn.base, eta, theta)
    if fn.delta == 0:
        return base
    return base + log_term(fn.delta, eta, theta)


# -- finite differences ------------------------------------------------------------

def _stable_u(r, theta):
    """|1 - r e^{i theta}|^2 and sin^2(theta/2), without cancellation near z = 1."""
    s2 = np.sin(theta / 2) ** 2
    return (1 - r) ** 2 + 4 * r * s2, s2


def polar_coefficients(kappa, p, q, r, theta):
    """Coefficients of G_thth, G_th, G_r and G in the polar form of the operator."""
    s = np.sin(theta)
    den, s2 = _stable_u(r, theta)
    # 1 - 2 r cos(theta) + r^2 cos(2 theta) = den - 2 r^2 sin^2(theta);  1 - r cos(theta) = (1 - r) + 2 r s2
    pot = (-2 * p * (den - 2 * r * r * s * s) / den ** 2
           + 2 * q * ((1 - r) + 2 * r * s2) / den + 2 * p - 2 * q)
    return kappa / 2, -2 * r * s / den, r * (r * r - 1) / den, pot


def fd_operator(field, radii, angles, kappa, p, q):
    """Second-order central differences on a polar mesh (theta periodic).

    Returns residuals at interior radii, shape (len(radii) - 2, len(angles)).
    """
    field = np.asarray(field, float)
    radii = np.asarray(radii, float)
    angles = np.asarray(angles, float)
    hr = radii[1] - radii[0]
    ht = angles[1] - angles[0]
    if not (np.allclose(np.diff(radii), hr) and np.allclose(np.diff(angles), ht)):
        raise ValueError("fd_operator needs a uniform mesh")
    if not math.isclose(ht * len(angles), 2 * math.pi, rel_tol=1e-12):
        raise ValueError("angle mesh must cover the full circle uniformly")
    G = field[1:-1]
    Gp = np.roll(G, -1, axis=1)
    Gm = np.roll(G, 1, axis=1)
    G_tt = (Gp - 2 * G + Gm) / ht ** 2
    G_t = (Gp - Gm) / (2 * ht)
    G_r = (field[2:] - field[:-2]) / (2 * hr)
    R, TH = np.meshgrid(radii[1:-1], angles, indexing="ij")
    a, b, c, pot = polar_coefficients(kappa, p, q, R, TH)
    return a * G_tt + b * G_t + c * G_r + pot * G


def fd_operator_checked(sampler, radii, n_angles, kappa, p, q, tol):
    """fd_operator plus a Richardson estimate from a mesh with doubled angular
    and radial resolution; raises MeshTooCoarse when the estimate exceeds tol."""
    radii = np.asarray(radii, float)
    ang = np.arange(n_angles) * 2 * math.pi / n_angles
    coarse = fd_operator(sampler(*np.meshgrid(radii, ang, indexing="ij")), radii, ang, kappa, p, q)
    fine_r = np.linspace(radii[0], radii[-1], 2 * len(radii) - 1)
    fine_a = np.arange(2 * n_angles) * math.pi / n_angles
    fine = fd_operator(sampler(*np.meshgrid(fine_r, fine_a, indexing="ij")), fine_r, fine_a, kappa, p, q)
    fine_on_coarse = fine[1:-1:2, ::2]
    est = np.max(np.abs(coarse[1:-1] - fine_on_coarse[1:-1])) * 4 / 3 if coarse.shape[0] > 2 else 0.0
    if est > tol:
        raise MeshTooCoarse(f"Richardson truncation estimate {est:.3g} exceeds {tol:.3g}")
    return coarse, est


def red_solution_terms(kappa, gamma, r, theta):
    """Individual polar-operator terms, divided by G, for the exact red-parabola
    solution (1-r^2)^(-kappa gamma^2/2) u^gamma, from analytic derivatives."""
    p = (2 + kappa / 2) * gamma - kappa * gamma ** 2 / 2
    q = (3 + kappa / 2) * gamma - kappa * gamma ** 2
    u, s2 = _stable_u(r, theta)
    ut, utt, ur = 2 * r * np.sin(theta), 2 * r * np.cos(theta), 2 * (r - 1) + 4 * s2
    lt = gamma * ut / u
    ltt = gamma * (utt / u - ut ** 2 / u ** 2)
    lr = kappa * gamma ** 2 * r / (1 - r * r) + gamma * ur / u
    a, b, c, pot = polar_coefficients(kappa, p, q, r, theta)
    return np.stack([a * (ltt + lt ** 2), b * lt, c * lr, pot * np.ones_like(u)])


# -- sign scans ----------------------------------------------------------------------

def annulus_grid(r0=0.9, eta_min=1e-5, n_r=512, n_theta=512):
    """eta geometric in [eta_min, 1-r0]; theta half uniform, half clustered at 0."""
    etas = np.geomspace(1.0 - r0, eta_min, n_r)
    n_u = n_theta // 2
    uni = -math.pi + 2 * math.pi * np.arange(n_u) / n_u
    n_c = (n_theta - n_u) // 2
    clus = np.geomspace(1e-8, 0.5, n_c)
    thetas = np.sort(np.concatenate([uni, clus, -clus]))
    return etas, thetas


def check_mixed_admissible(mp: MixedProfile):
    k = mp.psi0.kappa
    r = gamma_roots(k, mp.psi0.point)
    g1d = dual_gamma(k, r.gamma_1)
    g = mp.psi0.gamma
    if not g1d < g:
        raise InadmissibleProfile(f"need dual(gamma_1)={g1d:.6g} < gamma={g:.6g}")
    if not g < r.gamma_1:
        raise InadmissibleProfile(f"need gamma={g:.6g} < gamma_1={r.gamma_1:.6g}")
    if not g < g1d + 2 / k:
        raise InadmissibleProfile(f"need gamma={g:.6g} < dual(gamma_1)+2/kappa={g1d + 2 / k:.6g}")


def _scan_rows(fn: LogModified, etas, thetas):
    """(base action, log correction, psi-positive) on one block of radii."""
    E, TH = np.meshgrid(etas, thetas, indexing="ij")
    if isinstance(fn.base, MixedProfile):
        base, weight = mixed_ratio(fn.base, E, TH)
        positive = bool(np.all(weight > 0))
    else:
        base = action_closed_form(fn.base, E, TH)
        positive = bool(np.all(log_psi(fn.base, E, TH)[1] > 0))
    corr = log_term(fn.delta, E, TH) if fn.delta else np.zeros_like(base)
    return base, corr, positive


def verify_sign(fn: LogModified, r0=0.9, eta_min=1e-5, n_r=512, n_theta=512, keep_values=False,
                workers: int = 1) -> SignReport:
    """Sign of P(D)psi/psi on the annulus r0 <= r <= 1 - eta_min.

    Rows of radii are evaluated in blocks, `workers` at a time; every grid value
    is computed independently, so the report does not depend on `workers`.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if isinstance(fn.base, MixedProfile):
        check_mixed_admissible(fn.base)
    etas, thetas = annulus_grid(r0, eta_min, n_r, n_theta)
    blocks = np.array_split(np.arange(len(etas)), min(workers, len(etas)))
    if workers == 1:
        parts = [_scan_rows(fn, etas, thetas)]
    else:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda ix: _scan_rows(fn, etas[ix], thetas), blocks))
    base = np.concatenate([b for b, _, _ in parts])
    corr = np.concatenate([c for _, c, _ in parts])
    positive = all(ok for _, _, ok in parts)
    vals = base + corr
    # tolerance relative to the size of the two pieces at each point
    tol = 1e-12 * (np.abs(base) + np.abs(corr))
    if not np.all(np.isfinite(vals)):
        verdict = "MixedSign"
    elif np.all(vals < -tol):
        verdict = "StrictlyNegative"
    elif np.all(vals > tol):
        verdict = "StrictlyPositive"
    else:
        verdict = "MixedSign"
    finite = np.where(np.isfinite(vals), vals, np.nan)
    vmin, vmax = float(np.nanmin(finite)), float(np.nanmax(finite))
    # worst point: the one closest to flipping the dominant sign
    idx = np.nanargmax(finite) if abs(vmin) >= abs(vmax) else np.nanargmin(finite)
    i, j = np.unravel_index(idx, vals.shape)
    rep = SignReport(verdict, vmin, vmax, (1 - etas[i], thetas[j]), positive,
                     (r0, 1 - eta_min), vals.shape)
    if keep_values:
        rep.values, rep.radii, rep.angles = vals, 1 - etas, thetas
    return rep


# -- exponents and sub-solutions ------------------------------------------------------

def exponent_of(fn) -> float:
    if isinstance(fn, LogModified):
        fn = fn.base
    if isinstance(fn, MixedProfile):
        return max(exponent_of(fn.psi0), exponent_of(fn.psi1))
    return beta_from_pair(fn.beta, fn.gamma)


def gamma1_profile(kappa, pt: MomentPoint) -> TestProfile:
    g1 = gamma_roots(kappa, pt).gamma_1
    return build_test_profile(kappa, pt, g1)


def zone_gamma(kappa, pt: MomentPoint, zone: Zone, eps: float) -> float:
    r = gamma_roots(kappa, pt)
    g0, g1, gl = float(r.gamma_0), float(r.gamma_1), float(r.gamma_lin)
    g1d = float(dual_gamma(kappa, r.gamma_1))
    k = float(kappa)
    if zone is Zone.ZoneI:
        return 0.5 * (max(-0.5, g1d) + min(g0, gl))
    if zone is Zone.ZoneII:
        return g0 - eps
    if zone is Zone.ZoneIII:
        return g1d + 2 / k - eps
    if zone is Zone.ZoneIV:
        return 0.5 * (max(-0.5, g1d) + min(g1d + 2 / k, g1, gl))
    raise ConstructionFailed(f"no recipe outside the four zones ({zone})")


def sub_conditions(kappa, pt: MomentPoint, gamma: float):
    """Names of violated sub-solution conditions (empty when admissible)."""
    r = gamma_roots(kappa, pt)
    g1d = dual_gamma(kappa, r.gamma_1)
    bad = []
    upper = min(r.gamma_0, r.gamma_1, g1d + 2 / kappa, r.gamma_lin)
    if not g1d < gamma:
        bad.append("dual(gamma_1) < gamma")
    if not gamma < upper:
        bad.append("gamma < min(gamma_0, gamma_1, dual(gamma_1)+2/kappa, gamma_lin)")
    b1 = beta_gamma(kappa, pt, r.gamma_1)
    if not beta_from_pair(beta_gamma(kappa, pt, gamma), gamma) < b1:
        bad.append("exponent of psi_0 < beta(gamma_1)")
    return bad


def choose_subsolution(kappa, pt: MomentPoint, delta: float = 1.0, eps0: float = 1e-3,
                       max_refine: int = 10, scan: Optional[dict] = None,
                       delta_steps: int = 3):
    """Mixed sub-solution for a point of the four zones; returns (LogModified, SignReport).

    The log factor only adds -2 delta |z|^2 / (u (-log(1-|z|^2))) to the action,
    so raising delta keeps the exponent and can only push the action down.  On a
    finite annulus the band where psi_1 dominates may need a larger delta than the
    asymptotics suggest, hence the escalation delta, 4 delta, 16 delta, ...
    """
    zone = proof_zone(kappa, pt)
    if zone is Zone.Outside:
        raise ConstructionFailed("point is outside the proof zones")
    scan = scan or {}
    eps = eps0
    psi1 = gamma1_profile(kappa, pt)
    last = None
    for attempt in range(max_refine + 1):
        gamma = zone_gamma(kappa, pt, zone, eps)
        bad = sub_conditions(kappa, pt, gamma)
        if bad:
            log.info("zone %s gamma=%.6g violates %s", zone.value, gamma, bad)
        else:
            try:
                psi0 = build_test_profile(kappa, pt, gamma)
            except AmbiguousCase as exc:
                log.info("zone %s gamma=%.6g: %s", zone.value, gamma, exc)
                break
            d = delta
            for _ in range(delta_steps + 1):
                fn = LogModified(MixedProfile(psi0, psi1), d)
                rep = verify_sign(fn, **scan)
                last = rep
                if rep.verdict == "StrictlyNegative" and rep.positive:
                    return fn, rep
                log.info("zone %s gamma=%.6g delta=%g: verdict %s", zone.value, gamma, d, rep.verdict)
                d *= 4
        if zone not in (Zone.ZoneII, Zone.ZoneIII):
            break
        eps /= 2
    raise ConstructionFailed(f"no negative sub-solution found in {zone.value}"
                             + (f" (last verdict {last.verdict})" if last else ""))


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    interval: Optional[tuple]


def supersolution_feasibility(kappa, pt: MomentPoint) -> Feasibility:
    r = gamma_roots(kappa, pt)
    if r.gamma_0 is None or r.gamma_1 is None:
        return Feasibility(False, None)
    g1d = dual_gamma(kappa, r.gamma_1)
    hi = min(r.gamma_0_plus, r.gamma_1, g1d + 2 / kappa, r.gamma_lin)
    if r.gamma_0 < hi:
        return Feasibility(True, (r.gamma_0, hi))
    return Feasibility(False, None)


# -- asymptotic bookkeeping --------------------------------------------------------

def block_magnitudes(profile: TestProfile, delta, eta, u):
    """|first block|, |second block|, |log term| at radius 1-eta and given u."""
    r = 1 - eta
    # theta with |1 - r e^{i theta}|^2 = u
    s2 = (u - eta * eta) / (4 * r)
    theta = 2 * np.arcsin(np.sqrt(np.clip(s2, 0, 1)))
    first, second, uu, _ = _blocks(profile, np.asarray(eta, float), np.asarray(theta, float))
    m = one_minus_r2(eta)
    w = m / uu
    return (np.abs(m * first), np.abs(w * w * second), np.abs(log_term(delta, eta, theta)),
            np.sign(w * w * second))
