"""Acceptance criteria 1-7, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line (see conftest.py); the lines are
repeated in the terminal summary.
"""
import math
import random
import time
from fractions import Fraction as F

import mpmath
import numpy as np
import pytest

from sle_spectrum import montecarlo as mc
from sle_spectrum.operator import (
    block_magnitudes, choose_subsolution, exponent_of, fd_operator, action_closed_form,
    log_psi, red_solution_terms, supersolution_feasibility,
)
from sle_spectrum.phase import (
    Phase, Zone, blue_quartic_point, classify_conjecture, green_point, in_D, in_sector,
    proof_zone, red_green_intersections, red_point, transition_lines,
)
from sle_spectrum.special import (
    AmbiguousCase, NotRepresentable, boundary_residual, build_test_profile, eval_g0,
    gauss_2f1, is_pole,
)
from sle_spectrum.spectrum import (
    MomentPoint, beta_gamma, dual_gamma, gamma_roots, landmarks, quad_A, quad_C,
    spectrum_functions,
)

KAPPAS = [1, 2, 4, 6, 8]
SEED = 2026
WORKERS = (1, 4, 8)

ZONE_POINTS = {
    Zone.ZoneI: [(-1.4, -6.0), (1.4, 0.75), (-0.3, -1.5)],
    Zone.ZoneII: [(-2.4, -6.25), (-3.3, -9.0), (-3.7, -8.75)],
    Zone.ZoneIII: [(0.0, -8.75), (-0.6, -9.75), (-0.8, -8.25)],
    Zone.ZoneIV: [(2.0, -1.0), (1.0, -4.25), (-1.2, -6.75)],
}


def rel_err(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


# -- criterion 1 ---------------------------------------------------------------------

def closed_form_suite():
    """Worst relative defect of every identity, over all kappas."""
    rng = random.Random(SEED)
    worst = {}

    def note(name, v):
        worst[name] = max(worst.get(name, 0.0), float(v))

    for kappa in KAPPAS:
        k = float(kappa)
        for _ in range(200):
            pt = MomentPoint(rng.uniform(-10, 10), rng.uniform(-10, 10))
            g = rng.uniform(-10, 10)
            a, b = beta_gamma(k, pt, g), beta_gamma(k, pt, dual_gamma(k, g))
            note("duality", abs(a - b) / max(1.0, abs(a), k * g * g))
            r = gamma_roots(k, pt)
            for root in (r.gamma_0, r.gamma_0_plus):
                if root is not None:
                    size = (1 + k) * (1 + root * root + abs(pt.p))
                    note("roots", abs(quad_C(k, pt, root)) / size)
            for root in (r.gamma_1_minus, r.gamma_1):
                if root is not None:
                    size = (1 + k) * (1 + root * root + abs(pt.p) + abs(pt.q))
                    note("roots", abs(quad_A(k, pt, root)) / size)
        kf = F(kappa)
        lm = landmarks(kf)
        b = spectrum_functions(kf, MomentPoint(lm.p0, 0))
        note("beta_0(p_0)=beta_lin(p_0)", rel_err(b.beta_0, b.beta_lin))
        b = spectrum_functions(kf, MomentPoint(lm.p_prime_0, 0))
        note("beta_tip(p'_0)=beta_0(p'_0)", rel_err(b.beta_tip, b.beta_0))
        lo, hi = F(1, kappa), F(2, kappa) + F(1, 2)
        for i in range(21):
            rp = red_point(kf, lo + (hi - lo) * F(i, 20))
            b = spectrum_functions(kf, MomentPoint(rp.p, rp.q))
            note("red beta_0=beta_1", rel_err(b.beta_0, b.beta_1))
        # both loci start at a double root of A, so they are evaluated at 50 digits
        with mpmath.workdps(50):
            for i in range(21):
                gr = green_point(k, 1 / mpmath.mpf(kappa) + mpmath.mpf(8) * i / 20)
                b = spectrum_functions(k, MomentPoint(gr.p, gr.q))
                note("green beta_0=beta_1", rel_err(b.beta_0, b.beta_1))
                bq = blue_quartic_point(k, 1 / mpmath.mpf(kappa) + mpmath.mpf(6) * i / 20, check=False)
                b = spectrum_functions(k, MomentPoint(bq.p, bq.q))
                note("quartic beta_tip=beta_1", rel_err(b.beta_tip, b.beta_1))
        p0, _ = red_green_intersections(kf)
        b = spectrum_functions(kf, MomentPoint(p0.p, p0.q))
        note("triple coincidence at P_0", max(rel_err(b.beta_0, b.beta_lin), rel_err(b.beta_1, b.beta_0)))
    return worst


def test_criterion_1_closed_form_identities(record):
    t = time.perf_counter()
    worst = closed_form_suite()
    elapsed = time.perf_counter() - t
    bad = {k: v for k, v in worst.items() if not v <= 1e-10}
    ok = not bad and elapsed < 1.0 and len(worst) == 8
    record(1, ok, f"{len(worst)} identities, worst {max(worst.values()):.2e}, {elapsed:.2f} s")
    assert not bad, bad
    assert elapsed < 1.0


# -- criterion 2 ---------------------------------------------------------------------

def test_criterion_2_landmarks(record):
    t = time.perf_counter()
    k = F(2)
    lm = landmarks(k)
    p0, _ = red_green_intersections(k)
    t0, t1 = red_point(k, F(3, 2)), red_point(k, F(1, 2))
    bq = blue_quartic_point(k, F(1, 2))
    b = spectrum_functions(k, MomentPoint(bq.p, bq.q))
    checks = {
        "P_0": (p0.p, p0.q) == (lm.p0, lm.q0) == (F(27, 16), F(15, 8)),
        "Q_0": lm.q_prime_0_point == (F(-7, 4), F(-15, 4)),
        "Q'_0": lm.q0_prime_point == (F(-7, 4), F(-31, 4)),
        "T_0": (t0.p, t0.q) == (F(9, 4), F(3, 2)),
        "T_1": (t1.p, t1.q) == (F(5, 4), F(3, 2)),
        "quartic": (bq.p, bq.q) == (0, F(1, 4)) and b.beta_tip == b.beta_1 == -1,
        "rational": all(isinstance(v, (F, int)) for v in (p0.p, p0.q, t0.p, bq.q, b.beta_tip, b.beta_1)),
    }
    elapsed = time.perf_counter() - t
    failed = [n for n, v in checks.items() if not v]
    record(2, not failed and elapsed < 1.0, f"{len(checks) - len(failed)}/{len(checks)} exact, {elapsed:.3f} s")
    assert not failed, failed
    assert elapsed < 1.0


# -- criterion 3 ---------------------------------------------------------------------

def hyper_draws(n, seed):
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        a, b = rng.uniform(-3.5, 3.5), rng.uniform(-3.5, 3.5)
        if len(out) % 2:
            c, x = a + b + 0.5, rng.uniform(0.0, 0.999)
        else:
            c, x = rng.uniform(0.2, 4.0), rng.uniform(0.0, 0.75)
        if is_pole(c) or abs(c - round(c)) < 1e-3 and c < 0.5:
            continue
        out.append((a, b, c, x))
    return out


def buildable_profiles(n, seed):
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        k = rng.choice([1.0, 2.0, 4.0, 6.0, 8.0])
        pt = MomentPoint(rng.uniform(-6, 2), rng.uniform(-10, 2))
        r = gamma_roots(k, pt)
        if r.gamma_1 is None:
            continue
        g1d = dual_gamma(k, r.gamma_1)
        u = rng.random()
        if u < 0.6:
            gamma = g1d - rng.uniform(0.01, 2.0)
        elif u < 0.8:
            gamma = r.gamma_1 - rng.randrange(0, 4)
        else:
            gamma = g1d - rng.randrange(0, 4)
        try:
            out.append(build_test_profile(k, pt, gamma))
        except (NotRepresentable, AmbiguousCase):
            continue
    return out


def test_criterion_3_hypergeometric(record):
    t = time.perf_counter()
    series = 0.0
    with mpmath.workdps(40):
        for a, b, c, x in hyper_draws(1000, SEED):
            want = mpmath.hyp2f1(a, b, c, x)
            series = max(series, float(abs(gauss_2f1(a, b, c, x) - want) / max(abs(want), mpmath.mpf(1e-300))))
    endpoint = residual = 0.0
    profs = buildable_profiles(100, SEED)
    us = np.linspace(0, 4, 130)[1:-1]
    n_end = 0
    for prof in profs:
        g, gp, _ = eval_g0(prof, 4.0)
        if abs(g) > 1e-8:
            A = quad_A(prof.kappa, prof.point, prof.gamma)
            endpoint = max(endpoint, abs(gp / g - A / prof.kappa) / max(1.0, abs(A / prof.kappa)))
            n_end += 1
        for u in us:
            residual = max(residual, boundary_residual(prof, float(u)))
    elapsed = time.perf_counter() - t
    ok = series <= 1e-12 and endpoint <= 1e-8 and residual <= 1e-8 and elapsed < 10
    record(3, ok, f"2F1 worst {series:.1e} on 1000 draws, endpoint {endpoint:.1e} on {n_end} profiles, "
                  f"residual {residual:.1e} on {len(profs)} profiles, {elapsed:.1f} s")
    assert series <= 1e-12
    assert endpoint <= 1e-8
    assert residual <= 1e-8
    assert elapsed < 10


# -- criterion 4 ---------------------------------------------------------------------

def fd_error(prof, r, n_theta, hr):
    radii = np.array([r - hr, r, r + hr])
    ang = np.arange(n_theta) * 2 * math.pi / n_theta
    R, TH = np.meshgrid(radii, ang, indexing="ij")
    lp, s = log_psi(prof, 1 - R, TH)
    field = s * np.exp(lp - lp[1].max())
    res = fd_operator(field, radii, ang, prof.kappa, prof.p, prof.q)[0] / field[1]
    closed = action_closed_form(prof, np.full_like(ang, 1 - r), ang)
    return np.max(np.abs(res - closed))


def dominance_ratios(eta=1e-6):
    """Measured ratios for the three regimes of the log-modified test function.

    Case I   u = 1:             log term vs the other blocks.
    Case II  u = eta^(2-0.1):   log term vs the other blocks.
    Case III u = eta^2:         (1-|z|^2)^2/u^2 block vs the others, with sign C(gamma).
    """
    prof = build_test_profile(2.0, MomentPoint(1.4, 0.75), 0.31468)
    C = quad_C(2.0, prof.point, prof.gamma)
    f, s, l, _ = block_magnitudes(prof, 1.0, eta, 1.0)
    case1 = l / max(f, s)
    f, s, l, _ = block_magnitudes(prof, 1.0, eta, eta ** 1.9)
    case2 = l / max(f, s)
    f, s, l, sign = block_magnitudes(prof, 1.0, eta, eta ** 2)
    case3 = s / max(f, l)
    return float(case1), float(case2), float(case3), float(sign) == math.copysign(1.0, C)


def test_criterion_4_operator(record):
    t = time.perf_counter()
    annih = 0.0
    for kappa in (2.0, 6.0):
        for gamma in (0.25, 0.5, 1.0):
            r = np.linspace(0.5, 1 - 1e-6, 400)[:, None]
            th = np.linspace(-math.pi, math.pi, 256, endpoint=False)[None, :]
            terms = red_solution_terms(kappa, gamma, r, th)
            annih = max(annih, float((np.abs(terms.sum(axis=0)) / np.abs(terms).max(axis=0)).max()))
    rng = random.Random(SEED)
    orders = []
    for kappa in (2.0, 6.0):
        found = 0
        while found < 4:
            pt = MomentPoint(rng.uniform(-3, 1.5), rng.uniform(-8, 1))
            roots = gamma_roots(kappa, pt)
            if roots.gamma_1 is None:
                continue
            try:
                prof = build_test_profile(kappa, pt, dual_gamma(kappa, roots.gamma_1) - rng.uniform(0.05, 1.0))
            except ValueError:
                continue
            found += 1
            errs = [fd_error(prof, 0.6, 256 * 2 ** lev, 0.02 / 2 ** lev) for lev in range(3)]
            orders += [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    c1, c2, c3, sign_ok = dominance_ratios()
    elapsed = time.perf_counter() - t
    parts = {"annihilation": annih <= 1e-10, "fd order": min(orders) >= 1.9,
             "case I": c1 > 10, "case II": c2 > 10, "case III": c3 > 10 and sign_ok, "time": elapsed < 60}
    record(4, all(parts.values()),
           f"annihilation {annih:.1e}, fd order {min(orders):.2f}, dominance I {c1:.3g} II {c2:.3g} "
           f"III {c3:.3g}, {elapsed:.1f} s; failing: {[k for k, v in parts.items() if not v] or 'none'}")
    assert annih <= 1e-10
    assert min(orders) >= 1.9
    assert c1 > 10
    assert c3 > 10 and sign_ok
    # unattainable at r = 1 - 1e-6: the ratio grows only like eta^-0.1 on this path
    assert c2 > 10, f"Case II dominance ratio {c2:.3g} <= 10"
    assert elapsed < 60


# -- criteria 5 to 7 -----------------------------------------------------------------

_RUNS = {}


def subsolution_run(workers):
    """Sub-solutions for the 12 zone points plus a sampled feasibility sweep."""
    key = ("thm", workers)
    if key not in _RUNS:
        out = []
        for zone, pts in ZONE_POINTS.items():
            for p, q in pts:
                pt = MomentPoint(p, q)
                fn, rep = choose_subsolution(2.0, pt, scan={"workers": workers})
                b1 = beta_gamma(2.0, pt, gamma_roots(2.0, pt).gamma_1)
                out.append((zone, proof_zone(2.0, pt), (p, q), rep.verdict, rep.vmin, rep.vmax,
                            rep.worst, fn.delta, fn.base.psi0.gamma, exponent_of(fn), b1))
        _RUNS[key] = out
    return _RUNS[key]


def feasibility_sweep(n=4000):
    rng = random.Random(SEED)
    lines = transition_lines(2.0)
    hits = []
    while len(hits) < n:
        pt = MomentPoint(rng.uniform(-7, 2.5), rng.uniform(-16, 2.5))
        if not in_sector(2.0, pt) or lines["D_1"].side(pt) >= 0:
            continue
        if classify_conjecture(2.0, pt) is not Phase.One:
            continue
        hits.append((in_D(2.0, pt), supersolution_feasibility(2.0, pt).feasible))
    return hits


def mc_run(workers):
    key = ("mc", workers)
    if key not in _RUNS:
        cfg = mc.SimConfig(dt=1e-3, workers=workers)
        rep = mc.validate_red_parabola(2.0, [0.25, 0.5], n=20000, seed=SEED, cfg=cfg)
        fit = mc.fit_beta(2.0, MomentPoint(1.25, 1.5), [1 - 2.0 ** -j for j in range(2, 8)], n=100,
                          seed=SEED, cfg=cfg)
        _RUNS[key] = (rep, fit)
    return _RUNS[key]


@pytest.mark.slow
def test_criterion_5_subsolutions(record):
    t = time.perf_counter()
    rows = subsolution_run(1)
    sweep = feasibility_sweep()
    elapsed = time.perf_counter() - t
    zones_ok = all(z == got for z, got, *_ in rows)
    neg = sum(r[3] == "StrictlyNegative" for r in rows)
    expo = all(abs(r[9] - r[10]) <= 1e-12 * max(1.0, abs(r[10])) for r in rows)
    inside = sum(d for d, _ in sweep)
    mismatch = sum(d != f for d, f in sweep)
    deltas = sorted({r[7] for r in rows})
    ok = zones_ok and neg == 12 and expo and mismatch == 0 and elapsed < 300
    record(5, ok, f"{neg}/12 StrictlyNegative, exponents match beta(gamma_1): {expo}, deltas {deltas}, "
                  f"feasibility mismatches {mismatch}/{len(sweep)} ({inside} inside D), {elapsed:.0f} s")
    assert zones_ok
    assert neg == 12, [(r[2], r[3]) for r in rows if r[3] != "StrictlyNegative"]
    assert expo
    assert mismatch == 0
    assert elapsed < 300


@pytest.mark.slow
def test_criterion_6_monte_carlo(record):
    t = time.perf_counter()
    rep, fit = mc_run(1)
    elapsed = time.perf_counter() - t
    half = [r for r in rep.rows if r.gamma == 0.5 and r.z == 0.5][0]
    z05 = abs(half.exact - 0.537285) <= 5e-7 and half.ok
    fit_ok = abs(fit.slope - 0.25) <= 0.15
    worst = max(abs(r.zscore) for r in rep.rows)
    ok = len(rep.rows) == 12 and rep.pass_fraction >= 0.95 and z05 and fit_ok
    record(6, ok, f"{sum(r.ok for r in rep.rows)}/{len(rep.rows)} within 4 stderr (worst |z| {worst:.2f}), "
                  f"z=0.5 mean {half.estimate.mean:.6f} vs {half.exact:.6f}, "
                  f"beta fit {fit.slope:.4f} +- {fit.stderr:.4f}, {elapsed:.0f} s")
    assert len(rep.rows) == 12
    assert rep.pass_fraction >= 0.95
    assert z05
    assert fit_ok


@pytest.mark.slow
def test_criterion_7_determinism(record):
    t = time.perf_counter()
    base_thm, base_mc = subsolution_run(1), mc_run(1)
    same = {}
    for w in WORKERS[1:]:
        rep, fit = mc_run(w)
        r1, f1 = base_mc
        mc_same = ([(r.estimate.mean, r.estimate.stderr) for r in rep.rows]
                   == [(r.estimate.mean, r.estimate.stderr) for r in r1.rows]
                   and fit.circle_means == f1.circle_means and fit.slope == f1.slope)
        same[w] = mc_same and subsolution_run(w) == base_thm
    elapsed = time.perf_counter() - t
    ok = all(same.values())
    record(7, ok, f"bitwise equal to the 1-worker run: {same}, {elapsed:.0f} s")
    assert ok, same
