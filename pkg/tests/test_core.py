import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammaln

from lorentz_lab.core import (EULER_GAMMA, BallParams, Normalization, QIndex, as_extended, as_q,
                              ball_volume, clt_constants, compensated_cumsum,
                              decreasing_rearrangement, g_profile, intersection_threshold,
                              intersection_threshold_q1_limit, kappa, kappa_tail_inverse_square,
                              limit_law, lln_constant, lorentz_norm, lr_ball_volume_radius,
                              lr_norm, lr_radius_limit, max_norm_linearized_variance,
                              normalization_scale, profile_error_scale)

qs = st.one_of(st.floats(1.0, 20.0), st.just("inf"))
vectors = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=12)


# --- q index -------------------------------------------------------------

def test_q_parsing():
    assert as_q("inf").is_infinite
    assert as_q(math.inf) == QIndex.infinity()
    assert as_q(2).value == 2.0
    assert str(as_q("inf")) == "inf"
    with pytest.raises(ValueError):
        as_q(0.5)
    with pytest.raises(ValueError):
        as_q("abc")
    with pytest.raises(ValueError):
        as_q("inf").value
    assert math.isinf(as_extended("inf"))


def test_ball_params_validation():
    with pytest.raises(ValueError):
        BallParams(2, 5, p=3)
    with pytest.raises(ValueError):
        BallParams(2, 0)
    assert BallParams("inf", 4).to_dict()["q"] == "inf"


# --- kappa ---------------------------------------------------------------

def test_kappa_infinite_q_is_harmonic():
    k = kappa("inf", 10)
    assert k[1] == 1.0
    assert k[10] == pytest.approx(sum(1 / i for i in range(1, 11)), rel=1e-15)


def test_kappa_q1_counts():
    assert np.array_equal(kappa(1, 5).values, np.arange(1, 6, dtype=float))


def test_kappa_is_read_only_and_one_based():
    k = kappa(2, 4)
    with pytest.raises(ValueError):
        k.values[0] = 3.0
    with pytest.raises(IndexError):
        k[0]
    assert k[2] == pytest.approx(1 + 2 ** -0.5)


def test_compensated_cumsum_matches_fsum():
    rng = np.random.default_rng(1)
    terms = rng.standard_exponential(100_000) * 10.0 ** rng.uniform(-8, 8, 100_000)
    out = compensated_cumsum(terms)
    assert out[-1] == math.fsum(terms)
    assert out[999] == pytest.approx(math.fsum(terms[:1000]), rel=1e-15)


def test_large_n_kappa_against_asymptotics():
    # kappa_q(n) ~ q n^{1/q} + zeta(1 - 1/q)
    from scipy.special import zeta

    n, q = 10**6, 3.0
    approx = q * n ** (1 / q) + zeta(1 - 1 / q) + 0.5 * n ** (1 / q - 1)
    assert kappa(q, n)[n] == pytest.approx(approx, rel=1e-12)


# --- norms ---------------------------------------------------------------

@given(vectors, qs)
def test_lorentz_norm_symmetries(xs, q):
    x = np.array(xs)
    v = lorentz_norm(x, q)
    perm = np.random.default_rng(0).permutation(len(x))
    assert lorentz_norm(-x[perm], q) == pytest.approx(v, rel=1e-12, abs=1e-12)
    assert lorentz_norm(3.5 * x, q) == pytest.approx(3.5 * v, rel=1e-12, abs=1e-12)


@given(vectors, vectors, qs)
def test_lorentz_norm_triangle_inequality(a, b, q):
    m = min(len(a), len(b))
    x, y = np.array(a[:m]), np.array(b[:m])
    assert lorentz_norm(x + y, q) <= lorentz_norm(x, q) + lorentz_norm(y, q) + 1e-9 * (
        1 + lorentz_norm(x, q) + lorentz_norm(y, q))


@given(vectors)
def test_lorentz_norm_extremes(xs):
    x = np.array(xs)
    assert lorentz_norm(x, 1) == pytest.approx(np.abs(x).sum(), rel=1e-12, abs=1e-12)
    # the weights i^{-1} at q = inf dominate the max and are dominated by the l1 norm
    assert np.abs(x).max() - 1e-12 <= lorentz_norm(x, "inf") <= np.abs(x).sum() + 1e-9


def test_lorentz_norm_rowwise_and_rejects_nan():
    x = np.array([[3.0, -1.0], [0.0, 2.0]])
    assert np.allclose(lorentz_norm(x, 2), [3 + 2**-0.5, 2.0])
    with pytest.raises(ValueError):
        lorentz_norm(np.array([1.0, np.nan]), 2)


def test_decreasing_rearrangement():
    assert np.array_equal(decreasing_rearrangement(np.array([1.0, -3.0, 2.0])), [3.0, 2.0, 1.0])


# the direct sum underflows for tiny entries, so keep them away from the subnormal range
moderate = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-12)


@given(st.lists(moderate, min_size=1, max_size=10), st.floats(1.0, 20.0))
def test_lr_norm_matches_direct_sum(xs, r):
    direct = math.fsum(abs(v) ** r for v in xs) ** (1 / r)
    assert lr_norm(np.array(xs), r) == pytest.approx(direct, rel=1e-9, abs=1e-200)


def test_lr_norm_overflow_safe():
    assert lr_norm(np.array([1e300, 1e300]), 2) == pytest.approx(math.sqrt(2) * 1e300)
    assert lr_norm(np.array([-4.0, 2.0]), math.inf) == 4.0


# --- volume ----------------------------------------------------------------

def _shoelace(pts):
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    p = pts[np.argsort(ang)]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 4.0, "inf"])
def test_planar_volume_against_shoelace(q):
    k2 = kappa(q, 2)[2]
    pts = np.array([[1, 0], [0, 1], [-1, 0], [0, -1],
                    [1 / k2, 1 / k2], [-1 / k2, 1 / k2], [-1 / k2, -1 / k2], [1 / k2, -1 / k2]])
    assert ball_volume(q, 2).volume == pytest.approx(_shoelace(pts), rel=1e-14)


def test_volume_monte_carlo_three_dims():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (400_000, 3))
    frac = np.mean(lorentz_norm(pts, 2.0) <= 1.0)
    assert ball_volume(2, 3).volume == pytest.approx(8 * frac, rel=0.01)


def test_volume_known_values():
    assert ball_volume(2, 3).volume == pytest.approx(8 / ((1 + 2**-0.5) * (1 + 2**-0.5 + 3**-0.5)),
                                                     rel=1e-15)
    assert ball_volume(1, 5).volume == pytest.approx(2**5 / math.factorial(5), rel=1e-14)


def test_volume_overflow_reported():
    big = ball_volume(1.01, 10**6)
    assert big.volume is None or math.isfinite(big.volume)
    tiny = ball_volume(20, 10**6)
    assert math.isfinite(tiny.log_volume)


def test_normalization_scales():
    n = 50
    assert normalization_scale(2, n, Normalization.TILDE) == pytest.approx(math.sqrt(n))
    assert normalization_scale("inf", n, Normalization.TILDE) == pytest.approx(math.log(n + 1))
    s = normalization_scale(3, n, Normalization.VOLNORM)
    assert n * math.log(s) + ball_volume(3, n).log_volume == pytest.approx(0.0, abs=1e-9)


def test_lr_ball_volume_radius():
    n, r = 7, 2.0
    log_vol = n * math.log(2) + n * gammaln(1 + 1 / r) - gammaln(1 + n / r)
    assert lr_ball_volume_radius(r, n) == pytest.approx(math.exp(log_vol / n), rel=1e-14)
    assert lr_ball_volume_radius(math.inf, n) == 2.0


# --- limit law ------------------------------------------------------------

@pytest.mark.parametrize("q", [1.2, 2.0, 3.0, 7.5, "inf"])
def test_limit_density_integrates_to_one(q):
    law = limit_law(q)
    mass, _ = integrate.quad(law.density, -law.support, law.support, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("q", [1.2, 2.0, 3.0, "inf"])
def test_limit_cdf_is_integral_of_density(q):
    law = limit_law(q)
    for x in (-0.3, 0.0, 0.1, 0.4):
        val, _ = integrate.quad(law.density, -law.support, x)
        assert law.cdf(x) == pytest.approx(val, abs=1e-9)


@given(st.floats(0.0, 1.0), st.one_of(st.floats(1.05, 30.0), st.just("inf")))
def test_limit_quantile_inverts_cdf(u, q):
    law = limit_law(q)
    assert law.cdf(law.quantile(u)) == pytest.approx(u, abs=1e-9)


def test_limit_density_at_zero():
    assert limit_law(2).density(0.0) == 1.0
    assert limit_law(3).density(0.0) == 1.5
    assert limit_law(2).density(1.5) == 0.0


@given(st.floats(0.0, 1.0), st.floats(1.05, 30.0))
def test_profile_is_upper_quantile_of_abs_coordinate(t, q):
    # P(|X| > G_q(t)) = t under nu_{q,1}
    law = limit_law(q)
    tail = 2.0 * (1.0 - law.cdf(g_profile(q, t)))
    assert tail == pytest.approx(t, abs=1e-9)


def test_profile_endpoints_and_rates():
    assert g_profile(3, 1.0) == 0.0
    assert g_profile(3, 0.0) == 0.5
    assert g_profile("inf", 0.25) == 0.75
    n = 10**4
    assert profile_error_scale(1.5, n) == pytest.approx(n ** (-1 / 3))
    assert profile_error_scale(2, n) == pytest.approx(math.log(n) / 100)
    assert profile_error_scale(4, n) == pytest.approx(0.1)
    assert profile_error_scale("inf", n) == pytest.approx(1 / math.log(n))


# --- constants ------------------------------------------------------------

def test_clt_constants():
    assert clt_constants(3, 10).sigma_q2 == pytest.approx(1 / 12)
    assert clt_constants(2, 10).sigma_q2 == 0.25
    assert clt_constants(1.5, 10).sigma_q2 is None
    with pytest.raises(ValueError):
        clt_constants("inf", 10)
    n = 1000
    mu = clt_constants(2, n).mu_qn
    assert mu == pytest.approx(math.sqrt(n) * sum(1 / kappa(2, n).values) / n)


def test_linearized_variance_limits():
    # q = 1: the limit is a centered Gumbel law, variance pi^2/6
    assert max_norm_linearized_variance(1, 10**6) == pytest.approx(math.pi**2 / 6, rel=2e-3)
    # q > 2 converges to sigma_q^2 slowly from above
    v = [max_norm_linearized_variance(3, n) for n in (10**4, 10**5, 10**6)]
    assert v[0] > v[1] > v[2] > 1 / 12


def test_lln_constants():
    assert lln_constant("inf", "inf") == 0.5
    assert lln_constant("inf", 1) == 0.25
    # nu_{2,1} has E|Y|^2 = 1/6 and the volume radius constant is e^{-1/2}
    assert lln_constant(2, 2) == pytest.approx(math.exp(-0.5) / math.sqrt(6), rel=1e-14)
    assert lln_constant(2, 2) == pytest.approx(0.2476340, rel=1e-4)
    with pytest.raises(ValueError):
        lln_constant(1, 2)


def test_lln_constant_against_quadrature():
    # volume normalization rescales the Tilde ball by c = q e^{-1/q}/2 in the limit
    for q, r in ((2, 2), (3, 1.5), (5, 3)):
        law = limit_law(q)
        mom, _ = integrate.quad(lambda x: 2 * x**r * law.density(x), 0, law.support)
        c = q * math.exp(-1 / q) / 2
        assert lln_constant(q, r) == pytest.approx(c * mom ** (1 / r), rel=1e-8)


def test_threshold_identity_and_limit():
    for q in (1.3, 2, 5, "inf"):
        for r in (1.5, 2, 4, "inf"):
            a = intersection_threshold(q, r)
            assert a == pytest.approx(lr_radius_limit(r) / lln_constant(q, r), rel=1e-12)
    for r in (1.5, 2.0, 5.0):
        assert intersection_threshold(1 + 1e-8, r) == pytest.approx(
            intersection_threshold_q1_limit(r), abs=1e-6)


def test_lr_radius_limit_against_volume():
    r, n = 3.0, 10**7
    assert 1 / (n ** (1 / r) * lr_ball_volume_radius(r, n)) == pytest.approx(lr_radius_limit(r),
                                                                              rel=1e-5)


@pytest.mark.parametrize("q", [1.0, 1.5, 1.8])
def test_kappa_tail_against_direct_sum(q):
    n = 2000
    direct = math.fsum(kappa(q, 400_000).values[n:] ** -2.0)
    if q == 1.0:
        rest = 1 / 400_000
    else:
        rest = kappa_tail_inverse_square(q, 400_000)
    assert kappa_tail_inverse_square(q, n) == pytest.approx(direct + rest, rel=1e-6)
    with pytest.raises(ValueError):
        kappa_tail_inverse_square(2, n)


def test_euler_gamma():
    assert EULER_GAMMA == pytest.approx(-integrate.quad(lambda x: math.exp(-x) * math.log(x),
                                                        0, math.inf)[0], abs=1e-10)
