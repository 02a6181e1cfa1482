import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from equivmaps.couplings import BinomialCoupledDensity, Gaussian, PoissonRootDensity
from equivmaps.hellinger import (
    binomial_gaussian_hellinger_sq,
    gaussian_hellinger_sq,
    hellinger_sq,
    hellinger_sq_detailed,
    product_hellinger_sq,
)


def test_gaussian_examples():
    assert hellinger_sq(Gaussian(0.0), Gaussian(0.0)) == 0.0
    assert gaussian_hellinger_sq(0.0, 0.0) == (0.0, 0.0)
    exact, bound = gaussian_hellinger_sq(0.0, 2.0)
    assert exact == pytest.approx(2 * (1 - math.exp(-0.5)), rel=1e-15)
    assert exact == pytest.approx(0.786939, abs=1e-6)
    assert bound == 1.0
    exact, bound = gaussian_hellinger_sq(0.0, 1e-3)
    assert exact / bound == pytest.approx(1.0, abs=1e-6)


def test_quadrature_matches_gaussian_closed_form():
    for delta in np.linspace(0, 6, 25):
        exact, bound = gaussian_hellinger_sq(0.0, delta)
        assert exact <= bound
        assert hellinger_sq(Gaussian(0.0), Gaussian(delta)) == pytest.approx(exact, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-50, 50), b=st.floats(-50, 50))
def test_gaussian_exact_below_bound(a, b):
    exact, bound = gaussian_hellinger_sq(a, b)
    assert 0 <= exact <= 2 and exact <= bound + 1e-300


@pytest.mark.parametrize("m", [1, 4, 33, 128])
def test_binomial_half_is_exactly_normal(m):
    assert hellinger_sq(BinomialCoupledDensity(m, 0.5), Gaussian(0.0)) <= 1e-10
    assert binomial_gaussian_hellinger_sq(m, 0.5, 0.0) == 0.0


@pytest.mark.parametrize("m,p,b", [(5, 0.3, -0.8), (0, 0.7, 0.4), (64, 0.45, -0.6), (256, 0.55, 1.2), (1024, 0.6, 6.5)])
def test_binomial_closed_form_matches_quadrature(m, p, b):
    closed = binomial_gaussian_hellinger_sq(m, p, b)
    quad = hellinger_sq(BinomialCoupledDensity(m, p), Gaussian(b))
    assert closed == pytest.approx(quad, rel=1e-8, abs=1e-14)


def test_binomial_closed_form_reference_value():
    # frozen value, cross-checked against scipy quad on each piece
    g = BinomialCoupledDensity(5, 0.3)
    edges = np.concatenate([[-14.0], g.breakpoints, [14.0]])
    ref = sum(integrate.quad(lambda z: (math.sqrt(g.pdf(z)) - math.sqrt(Gaussian(-0.8).pdf(z))) ** 2,
                             a, b, epsabs=0, epsrel=1e-12)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert binomial_gaussian_hellinger_sq(5, 0.3, -0.8) == pytest.approx(ref, rel=1e-9)
    assert binomial_gaussian_hellinger_sq(5, 0.3, -0.8) == pytest.approx(0.0184984260534, rel=1e-10)


def test_binomial_closed_form_vectorized():
    m = np.array([3, 3, 10, 0])
    p = np.array([0.4, 0.6, 0.5, 0.2])
    b = np.array([0.1, -0.3, 0.0, 0.5])
    vec = binomial_gaussian_hellinger_sq(m, p, b)
    one = [binomial_gaussian_hellinger_sq(int(a), float(c), float(d)) for a, c, d in zip(m, p, b)]
    assert np.allclose(vec, one, rtol=0, atol=0)
    assert vec[2] == 0.0
    assert vec[3] == pytest.approx(gaussian_hellinger_sq(0.0, 0.5)[0], rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 5.0, 50.0, 1000.0])
def test_poisson_root_gl_matches_scipy_quad(lam):
    g, phi = PoissonRootDensity(lam), Gaussian(2 * math.sqrt(lam))
    gl = hellinger_sq_detailed(g, phi)
    quad = hellinger_sq_detailed(g, phi, method="quad")
    assert gl.value == pytest.approx(quad.value, rel=1e-8)
    assert gl.tail_bound <= 1e-25
    assert 0 <= gl.value <= 2


def test_poisson_root_x_domain_oracle():
    # independent route: integrate sqrt(pmf_j * phi-density pulled back to x) over x in [j - 1/2, j + 1/2)
    lam = 30.0
    mu = 2 * math.sqrt(lam)
    from scipy import stats
    total = 0.0
    for j in range(0, 120):
        pj = stats.poisson.pmf(j, lam)
        # on [j - 1/2, j + 1/2) the density is pj |y| / 2 and dy = dx / sqrt|x|, so the affinity
        # integrand pulled back to x is sqrt(pj phi(y - mu)) |x|^(-1/4)
        def aff(x, pj=pj):
            y = 2 * math.copysign(math.sqrt(abs(x)), x)
            return math.sqrt(pj * math.exp(-0.5 * (y - mu) ** 2) / math.sqrt(2 * math.pi)) * abs(x) ** -0.25
        total += integrate.quad(aff, j - 0.5, j + 0.5, epsabs=0, epsrel=1e-12, points=[0.0] if j == 0 else None)[0]
    assert hellinger_sq(PoissonRootDensity(lam), Gaussian(mu)) == pytest.approx(2 - 2 * total, rel=1e-7)


def test_hellinger_is_symmetric():
    a, b = PoissonRootDensity(7.0), Gaussian(5.0)
    assert hellinger_sq(a, b) == pytest.approx(hellinger_sq(b, a), rel=1e-12)


def test_shifted_and_unshifted_distance_tracks_series():
    from scipy import stats
    for lam in (1.0, 10.0, 100.0):
        j = np.arange(int(lam + 40 * math.sqrt(lam) + 60))
        series = 1 - np.sum(stats.poisson.pmf(j, lam) * np.sqrt(j / lam))
        h2 = hellinger_sq(PoissonRootDensity(lam), PoissonRootDensity(lam, shifted=True))
        assert h2 <= series * (1 + 1e-8) + 1e-15
        assert h2 <= 1.0


def test_product_form():
    assert product_hellinger_sq([]) == 0.0
    assert product_hellinger_sq([0.3]) == pytest.approx(0.3, rel=1e-15)
    h = np.array([0.1, 0.2, 0.05])
    assert product_hellinger_sq(h) == pytest.approx(2 - 2 * np.prod(1 - h / 2), rel=1e-14)
    assert product_hellinger_sq([1e-20] * 4) == pytest.approx(4e-20, rel=1e-12)


def test_product_form_against_two_dimensional_quadrature():
    # two independent cells, each a Gaussian shift; the joint affinity is a double integral
    m1, m2 = 0.7, -0.4
    def sq(z2, z1):
        p = math.exp(-0.5 * (z1**2 + z2**2)) / (2 * math.pi)
        q = math.exp(-0.5 * ((z1 - m1) ** 2 + (z2 - m2) ** 2)) / (2 * math.pi)
        return (math.sqrt(p) - math.sqrt(q)) ** 2
    joint = integrate.dblquad(sq, -12, 12, -12, 12, epsabs=1e-13, epsrel=1e-11)[0]
    parts = [gaussian_hellinger_sq(0, m1)[0], gaussian_hellinger_sq(0, m2)[0]]
    assert product_hellinger_sq(parts) == pytest.approx(joint, abs=1e-8)


def test_product_form_binomial_cells_against_two_dimensional_quadrature():
    g1, g2 = BinomialCoupledDensity(3, 0.35), BinomialCoupledDensity(2, 0.6)
    b1, b2 = -0.3, 0.25
    h = [binomial_gaussian_hellinger_sq(3, 0.35, b1), binomial_gaussian_hellinger_sq(2, 0.6, b2)]
    p1, p2, q1, q2 = g1.pdf, g2.pdf, Gaussian(b1).pdf, Gaussian(b2).pdf
    e1 = np.concatenate([[-10.0], g1.breakpoints, [10.0]])
    e2 = np.concatenate([[-10.0], g2.breakpoints, [10.0]])
    joint = 0.0
    for a1, c1 in zip(e1[:-1], e1[1:]):
        for a2, c2 in zip(e2[:-1], e2[1:]):
            joint += integrate.dblquad(
                lambda y, x: (math.sqrt(p1(x) * p2(y)) - math.sqrt(q1(x) * q2(y))) ** 2,
                a1, c1, a2, c2, epsabs=1e-14, epsrel=1e-10)[0]
    assert product_hellinger_sq(h) == pytest.approx(joint, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(0, 300), p=st.floats(0.05, 0.95), b=st.floats(-8, 8))
def test_binomial_closed_form_in_range(m, p, b):
    v = binomial_gaussian_hellinger_sq(m, p, b)
    assert 0.0 <= v <= 2.0


@settings(max_examples=15, deadline=None)
@given(m=st.integers(1, 80), p=st.floats(0.2, 0.8), b=st.floats(-3, 3))
def test_binomial_closed_form_matches_engine_property(m, p, b):
    closed = binomial_gaussian_hellinger_sq(m, p, b)
    quad = hellinger_sq(BinomialCoupledDensity(m, p), Gaussian(b))
    assert closed == pytest.approx(quad, rel=1e-7, abs=1e-12)
