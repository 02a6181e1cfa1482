import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from equivmaps.couplings import (
    BinomialCoupledDensity,
    PoissonRootDensity,
    SaturationWarning,
    binomial_coupled_density,
    coupling_boundaries,
    fm_cdf,
    fm_quantile,
    fm_to_normal,
    normal_cdf,
    normal_interval,
    normal_pdf,
    normal_quantile,
    normal_to_fm,
    poisson_root_density,
    root_transform,
    root_transform_inverse,
    tusnady_boundaries,
)

mpmath.mp.dps = 40


def mp_fm_cdf(m, x):
    """Exact-arithmetic oracle for F_m."""
    x = mpmath.mpf(x)
    j = int(mpmath.floor(x + mpmath.mpf(1) / 2))
    if j < 0:
        return mpmath.mpf(0)
    if j > m:
        return mpmath.mpf(1)
    half = mpmath.mpf(2) ** -m
    below = sum(mpmath.binomial(m, i) for i in range(j)) * half
    return below + mpmath.binomial(m, j) * half * (x - j + mpmath.mpf(1) / 2)


# -- root transform

def test_root_transform_examples():
    assert root_transform(1.0) == 2.0
    assert root_transform_inverse(2.0) == 1.0
    assert root_transform(-0.25) == -1.0
    assert root_transform(0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(x=st.one_of(st.just(0.0), st.floats(1e-100, 1e6), st.floats(-1e6, -1e-100)))
def test_root_transform_roundtrip(x):
    assert root_transform_inverse(root_transform(x)) == pytest.approx(x, rel=1e-14, abs=1e-300)
    assert root_transform(root_transform_inverse(x)) == pytest.approx(x, rel=1e-14, abs=1e-300)


# -- F_m

def test_fm_cdf_examples():
    assert fm_cdf(0, 0.0) == 0.5
    assert fm_cdf(1, 0.0) == pytest.approx(0.25, rel=1e-15)
    assert fm_cdf(2, 0.5) == pytest.approx(0.25, rel=1e-15)
    for m in (0, 1, 7, 64, 1001):
        assert fm_cdf(m, m / 2) == 0.5
        assert fm_cdf(m, -0.5) == 0.0 and fm_cdf(m, m + 0.5) == 1.0


@pytest.mark.parametrize("m", [1, 5, 40, 333])
def test_fm_cdf_against_exact_arithmetic(m):
    xs = np.linspace(-0.5, m + 0.5, 97)
    got = fm_cdf(m, xs)
    for x, g in zip(xs, got):
        ref = mp_fm_cdf(m, x)
        assert abs(g - float(ref)) <= 1e-12 * max(float(ref), 1e-300) or abs(g - float(ref)) <= 1e-15


def mp_binom_half_below(m, j):
    """P(Bin(m, 1/2) <= j - 1) by summing pmf terms outward from j - 1 (symmetry for the upper half)."""
    if j - 1 >= m / 2:
        return 1 - mp_binom_half_below(m, m - j + 1)
    i = j - 1
    if i < 0:
        return mpmath.mpf(0)
    term = mpmath.exp(mpmath.loggamma(m + 1) - mpmath.loggamma(i + 1) - mpmath.loggamma(m - i + 1) - m * mpmath.log(2))
    total = mpmath.mpf(0)
    while i >= 0 and term > total * mpmath.mpf(10) ** -30:
        total += term
        term = term * i / (m - i + 1)
        i -= 1
    return total


@pytest.mark.parametrize("m,x", [(2**20, 2**19 - 3000.25), (2**20, 2**19 + 17.3), (2**16, 2**15 - 900.0), (2**20, 2**19 + 2500.5)])
def test_fm_cdf_relative_accuracy_large_m(m, x):
    j = math.floor(x + 0.5)
    mass = mpmath.exp(mpmath.loggamma(m + 1) - mpmath.loggamma(j + 1) - mpmath.loggamma(m - j + 1) - m * mpmath.log(2))
    ref = mp_binom_half_below(m, j) + mass * (mpmath.mpf(x) - j + mpmath.mpf(1) / 2)
    assert fm_cdf(m, x) == pytest.approx(float(ref), rel=1e-12)


def test_fm_cdf_piecewise_linear_and_continuous():
    m = 9
    knots = np.arange(-0.5, m + 1.0)
    eps = 1e-9
    assert np.allclose(fm_cdf(m, knots - eps), fm_cdf(m, knots + eps), atol=1e-8)
    mid = (knots[:-1] + knots[1:]) / 2
    assert np.allclose(fm_cdf(m, mid), (fm_cdf(m, knots[:-1]) + fm_cdf(m, knots[1:])) / 2, rtol=0, atol=1e-15)


def test_fm_quantile_examples():
    for m in (0, 1, 6, 31):
        assert fm_quantile(m, 0.5) == m / 2
    assert fm_quantile(0, 0.75) == 0.25
    assert fm_quantile(2, 0.25) == 0.5
    with pytest.raises(ValueError):
        fm_quantile(3, 1.0)


@settings(max_examples=200, deadline=None)
@given(m=st.integers(0, 5000), u=st.floats(1e-12, 1 - 1e-12))
def test_fm_quantile_inverts_cdf(m, u):
    x = fm_quantile(m, u)
    assert fm_cdf(m, x) == pytest.approx(u, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(m=st.integers(0, 2000), u1=st.floats(0.001, 0.999), u2=st.floats(0.001, 0.999))
def test_fm_quantile_monotone(m, u1, u2):
    if u1 < u2:
        assert fm_quantile(m, u1) <= fm_quantile(m, u2)


@pytest.mark.parametrize("m", [0, 1, 2, 7, 50, 513])
def test_coupling_round_trip(m):
    x = np.arange(m + 1)[:, None] + np.array([-0.49, 0.0, 0.49])[None, :]
    # The literal composition through probabilities works where F_m(x) <= 1/2;
    # above the median 1 - F_m(x) can drop below the double-precision spacing near 1.
    low = x <= m / 2
    back = fm_quantile(m, normal_cdf(normal_quantile(fm_cdf(m, x[low]))))
    assert np.max(np.abs(back - x[low])) <= 1e-9
    # the mirrored route covers the whole range
    assert np.max(np.abs(normal_to_fm(m, fm_to_normal(m, x)) - x)) <= 1e-9


@pytest.mark.parametrize("m", [1, 8, 64, 257])
def test_fm_to_normal_is_odd_and_invertible(m):
    x = np.arange(-31, 64 * m + 32) / 64.0
    z = fm_to_normal(m, x)
    assert np.all(np.diff(z) > 0)
    assert np.array_equal(z, -fm_to_normal(m, m - x))
    assert np.max(np.abs(normal_to_fm(m, z) - x)) <= 1e-9


# -- normal distribution

def test_normal_examples():
    assert normal_cdf(0.0) == 0.5
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(normal_cdf(3.0)) == pytest.approx(3.0, abs=1e-9)
    ref = 0.5 + integrate.quad(normal_pdf, 0, 1.959964, epsabs=0, epsrel=1e-13)[0]
    assert normal_cdf(1.959964) == pytest.approx(ref, abs=1e-13)
    assert normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)


def test_normal_cdf_relative_accuracy():
    z = np.linspace(-8, 8, 161)
    ref = np.array([float(mpmath.ncdf(v)) for v in z])
    assert np.max(np.abs(normal_cdf(z) / ref - 1)) <= 1e-13


def test_normal_quantile_inverse_accuracy():
    u = np.concatenate([np.logspace(-300, -1, 200), np.linspace(0.1, 0.9, 81)[1:-1], 1 - np.logspace(-1, -15, 50)])
    z = normal_quantile(u)
    assert np.all(np.diff(z) > 0)
    assert np.max(np.abs(normal_cdf(z) - u)) <= 1e-12
    lower = u < 0.5
    rel = np.abs(normal_cdf(z[lower]) / u[lower] - 1)
    assert np.max(rel) <= 1e-9


def test_normal_quantile_saturation_flag():
    with pytest.warns(SaturationWarning):
        z = normal_quantile(1e-320)
    assert z == pytest.approx(normal_quantile(1e-300))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        normal_quantile(1e-299)
    with pytest.raises(ValueError):
        normal_quantile(0.0)


def test_normal_interval_upper_tail_accuracy():
    a, b = 9.0, 9.5
    ref = float(mpmath.ncdf(b) - mpmath.ncdf(a))
    assert normal_interval(a, b) == pytest.approx(ref, rel=1e-12)


# -- Poisson root density

@pytest.mark.parametrize("lam", [0.5, 5.0, 50.0])
@pytest.mark.parametrize("shifted", [False, True])
def test_poisson_root_density_integrates_to_one(lam, shifted):
    g = poisson_root_density(lam, shifted)
    edges = g.breakpoints
    total = sum(integrate.quad(g.pdf, a, b, epsabs=0, epsrel=1e-12)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_poisson_root_density_first_piece():
    lam = 3.0
    g = PoissonRootDensity(lam)
    y = np.linspace(0.01, math.sqrt(2) - 0.01, 20)
    assert np.allclose(g.pdf(y), math.exp(-lam) * y / 2, rtol=1e-14, atol=0)


def test_poisson_root_density_matches_monte_carlo():
    lam = 2.5
    g = PoissonRootDensity(lam)
    rng = np.random.default_rng(99)
    y = root_transform(rng.poisson(lam, 10**6) + rng.random(10**6) - 0.5)
    edges = np.linspace(-1.4, 6.0, 38)
    counts, _ = np.histogram(y, edges)
    probs = np.diff(g.cdf(edges))
    keep = probs * 1e6 > 20
    chi2 = np.sum((counts[keep] - 1e6 * probs[keep]) ** 2 / (1e6 * probs[keep]))
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3


def test_poisson_root_mean_lambda_50():
    lam = 50.0
    g = PoissonRootDensity(lam)
    edges = g.breakpoints
    q = sum(integrate.quad(lambda y: y * g.pdf(y), a, b, epsabs=1e-14, epsrel=1e-11)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert q == pytest.approx(g.mean(), abs=1e-9)
    # second-order delta method: E 2 sqrt(X + U) = 2 sqrt(lam) - (lam + 1/12) / (4 lam^{3/2}) + O(lam^{-3/2})
    assert q == pytest.approx(2 * math.sqrt(lam) - (lam + 1 / 12) / (4 * lam**1.5), abs=5e-4)


def test_poisson_root_cdf_sf_complement():
    g = PoissonRootDensity(20.0, shifted=True)
    y = np.linspace(-1, 15, 101)
    assert np.allclose(g.cdf(y) + g.sf(y), 1.0, atol=1e-14)


# -- binomial-coupled density

@pytest.mark.parametrize("m", [0, 1, 2, 13, 64])
def test_binomial_coupled_is_normal_at_half(m):
    g = binomial_coupled_density(m, 0.5)
    z = np.linspace(-10, 10, 2001)
    assert np.max(np.abs(g.pdf(z) - normal_pdf(z))) <= 1e-12


@pytest.mark.parametrize("p", [0.1, 0.37, 0.9])
def test_binomial_coupled_m0_is_standard_normal(p):
    g = BinomialCoupledDensity(0, p)
    z = np.linspace(-8, 8, 101)
    assert np.array_equal(g.pdf(z), normal_pdf(z))


@pytest.mark.parametrize("m,p", [(5, 0.3), (64, 0.45), (1024, 0.6)])
def test_binomial_coupled_mass_matching(m, p):
    g = BinomialCoupledDensity(m, p)
    pmf = stats.binom.pmf(np.arange(m + 1), m, p)
    assert np.max(np.abs(g.piece_masses() - pmf)) <= 1e-12
    assert len(g.edges) - 1 == m + 1


@pytest.mark.parametrize("m,p", [(5, 0.3), (64, 0.45)])
def test_binomial_coupled_integrates_to_one_by_quadrature(m, p):
    g = BinomialCoupledDensity(m, p)
    edges = np.concatenate([[-12.0], g.breakpoints, [12.0]])
    total = sum(integrate.quad(g.pdf, a, b, epsabs=0, epsrel=1e-12)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_binomial_coupled_matches_simulation():
    m, p = 12, 0.4
    g = BinomialCoupledDensity(m, p)
    rng = np.random.default_rng(5)
    z = fm_to_normal(m, rng.binomial(m, p, 200000) + rng.random(200000) - 0.5)
    assert stats.kstest(z, g.cdf).pvalue > 1e-3


def test_coupling_boundaries_monotone_and_consistent():
    for m in (1, 2, 17, 200):
        z = coupling_boundaries(m)
        assert z[0] == -np.inf and z[-1] == np.inf
        assert np.all(np.diff(z) > 0)
        j = np.arange(1, m + 1)
        assert np.allclose(normal_cdf(z[1:-1]), fm_cdf(m, j - 0.5), rtol=1e-13, atol=0)


def test_tusnady_examples():
    t = tusnady_boundaries(1)
    assert t.u.tolist() == [0.0] and t.z.tolist() == [0.0]
    for m in (2, 64, 256):
        t = tusnady_boundaries(m)
        j = m // 2
        assert t.u[j - 1] == pytest.approx(-1 / math.sqrt(m))
        assert t.z[j - 1] < 0 and t.z[j - 1] == -t.z[m - j]
        assert np.all(np.diff(t.z) > 0)
        assert len(t.rows()) == m
