import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from sle_spectrum.spectrum import (
    InvalidKappa, MomentPoint, beta_from_pair, beta_gamma, beta_lin, check_kappa,
    dual_gamma, gamma_lin, gamma_roots, landmarks, quad_A, quad_C, spectrum_functions,
)

KAPPAS = [F(1), F(2), F(4), F(6), F(8)]

kappas = st.floats(0.05, 12.0)
reals = st.floats(-20.0, 20.0)


@pytest.mark.parametrize("kappa,p,q,gamma,want", [
    (F(2), F(5, 4), F(3, 2), F(1, 2), 0),
    (F(2), F(7), F(7), F(1), 0),
    (F(3), F(2), F(5), F(0), -3),
])
def test_quad_A(kappa, p, q, gamma, want):
    assert quad_A(kappa, MomentPoint(p, q), gamma) == want


@pytest.mark.parametrize("kappa,p,gamma,want", [
    (F(2), F(5, 4), F(1, 2), 0),
    (F(2), F(9, 4), F(3, 2), 0),
    (F(5), F(3), F(0), -3),
])
def test_quad_C(kappa, p, gamma, want):
    assert quad_C(kappa, MomentPoint(p, 0), gamma) == want


def test_beta_values():
    assert beta_gamma(F(2), MomentPoint(F(5, 4), 0), F(1, 2)) == F(1, 4)
    pt = MomentPoint(F(1), 0)
    assert beta_gamma(F(2), pt, F(1, 5)) == beta_gamma(F(2), pt, F(13, 10)) == F(12, 25)


@pytest.mark.parametrize("kappa,gamma,want", [
    (F(2), F(3, 4), F(3, 4)), (F(2), F(1, 5), F(13, 10)), (F(4), F(0), F(1)),
])
def test_dual(kappa, gamma, want):
    assert dual_gamma(kappa, gamma) == want


def test_gamma_roots_examples():
    r = gamma_roots(F(2), MomentPoint(F(5, 4), F(3, 2)))
    assert (r.gamma_0, r.gamma_0_plus, r.gamma_1_minus, r.gamma_1) == (F(1, 2), F(5, 2), F(1, 2), F(1, 2))
    r = gamma_roots(F(2), MomentPoint(F(3), F(0)))
    assert r.gamma_0 is None and r.gamma_0_plus is None
    assert r.gamma_1 == pytest.approx(0.5 + 0.5 * math.sqrt(13), rel=1e-15)
    r = gamma_roots(F(2), MomentPoint(F(0), F(1)))
    assert r.gamma_1 is None and r.gamma_1_minus is None
    assert (r.gamma_0, r.gamma_0_plus) == (0, 3)


def test_spectrum_bundle_examples():
    assert spectrum_functions(F(2), MomentPoint(F(2), F(9))).beta_lin == F(7, 8)
    b = spectrum_functions(2.0, MomentPoint(-2.0, 0.0))
    assert b.beta_tip == pytest.approx(1 + (6 - math.sqrt(68)) / 4, rel=1e-14)
    b = spectrum_functions(F(2), MomentPoint(F(5, 4), F(3, 2)))
    assert b.beta_0 == b.beta_1 == F(1, 4)


@pytest.mark.parametrize("beta,gamma,want", [
    (F(3, 10), F(0), F(3, 10)), (F(3, 10), F(-1, 2), F(3, 10)), (F(3, 10), F(-1), F(13, 10)),
])
def test_knee(beta, gamma, want):
    assert beta_from_pair(beta, gamma) == want


def test_landmarks_exact():
    lm = landmarks(F(2))
    assert (lm.p0, lm.q0, lm.p1) == (F(27, 16), F(15, 8), F(35, 16))
    assert lm.q_prime_0_point == (F(-7, 4), F(-15, 4))
    assert lm.q0_prime_point == (F(-7, 4), F(-31, 4))
    assert landmarks(F(6)).p0 == F(25, 16)
    lm4 = landmarks(F(4))
    assert (lm4.p_hat, lm4.p_of_kappa) == (3, F(15, 8))


def test_p_star_value():
    k = 2.0
    s = math.sqrt(2 * 36 + 4)
    assert landmarks(k).p_star == pytest.approx((s - 6) * (s + 2) / 64, rel=1e-15)
    assert landmarks(k).p_star == pytest.approx(0.455137632057416, abs=1e-15)


@pytest.mark.parametrize("kappa", [0, -1, 0.0, float("nan")])
def test_bad_kappa(kappa):
    with pytest.raises(InvalidKappa):
        check_kappa(kappa)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_landmark_coincidences(kappa):
    lm = landmarks(kappa)
    b = spectrum_functions(kappa, MomentPoint(lm.p0, 0))
    assert b.beta_0 == b.beta_lin
    b = spectrum_functions(kappa, MomentPoint(lm.p_prime_0, 0))
    assert b.beta_tip == b.beta_0


@settings(max_examples=300, deadline=None)
@given(kappas, reals, reals)
def test_duality(kappa, p, gamma):
    pt = MomentPoint(p, 0.0)
    a = beta_gamma(kappa, pt, gamma)
    b = beta_gamma(kappa, pt, dual_gamma(kappa, gamma))
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a), kappa * gamma * gamma)


@settings(max_examples=300, deadline=None)
@given(kappas, reals, reals)
def test_roots_certified(kappa, p, q):
    pt = MomentPoint(p, q)
    r = gamma_roots(kappa, pt)
    for g in (r.gamma_0, r.gamma_0_plus):
        if g is not None:
            assert abs(quad_C(kappa, pt, g)) <= 1e-12 * (1 + kappa) * (1 + g * g + abs(p))
    for g in (r.gamma_1_minus, r.gamma_1):
        if g is not None:
            assert abs(quad_A(kappa, pt, g)) <= 1e-12 * (1 + kappa) * (1 + g * g + abs(p) + abs(q))


@settings(max_examples=100, deadline=None)
@given(kappas, reals, st.lists(reals, min_size=1, max_size=50))
def test_lin_is_minimum(kappa, p, gammas):
    pt = MomentPoint(p, 0.0)
    lo = beta_gamma(kappa, pt, gamma_lin(kappa))
    assert lo == pytest.approx(beta_lin(kappa, p), abs=1e-12 * (1 + abs(p) + 16 / kappa))
    for g in gammas:
        assert beta_gamma(kappa, pt, g) >= lo - 1e-12 * (1 + abs(lo))


@given(st.fractions(-10, 10))
def test_knee_continuity_exact(beta):
    assert beta_from_pair(beta, F(-1, 2)) == beta - 2 * F(-1, 2) - 1
