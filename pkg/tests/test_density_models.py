import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from equivmaps.density_models import (
    FixedSample,
    InvalidDensityError,
    PointProcessSample,
    cell_mean,
    class_norms,
    integrate_cell,
    make_density,
    sample_points,
    split_probability,
    sqrt_cell_mean,
)

from conftest import COSINE, LINEAR, bump_spec

H00 = (2.0 / 3.0) * (1.5**1.5 - 0.5**1.5)


def test_make_density_examples():
    assert make_density(LINEAR).eps0 == 0.5
    with pytest.raises(InvalidDensityError):
        make_density({"family": "linear", "params": {"a": 0.0, "b": 2.0}, "eps0": 0.01})
    f = make_density(COSINE)
    assert f.pdf(0.5) == pytest.approx(0.8)


@pytest.mark.parametrize("spec", [
    {"family": "linear", "params": {"a": 0.5, "b": 0.5}, "eps0": 0.1},
    {"family": "piecewise-constant", "params": {"values": [1.0, 2.0]}, "eps0": 0.5},
    {"family": "fourier", "params": {"coefficients": {"0": 0.9, "1": 0.1}}, "eps0": 0.5},
    {"family": "linear", "params": {"a": 0.5, "b": 1.0}, "eps0": 0.6},
    {"family": "fourier", "params": {"coefficients": {"0": 1.0, "1": 0.1}}, "eps0": 0.81},
    {"family": "fourier", "params": {"coefficients": {"0": 1.0, "1": 0.1, "-1": 0.2}}, "eps0": 0.5},
    {"family": "haar-bump", "params": {"k": 1, "l": 0, "amplitude": 0.9}, "eps0": 0.01},
    {"family": "nonsense", "eps0": 1.0},
    {"family": "uniform"},
])
def test_make_density_rejects_invalid(spec):
    with pytest.raises(InvalidDensityError):
        make_density(spec)


def test_integrate_cell_examples(uniform, linear, cosine):
    assert integrate_cell(uniform, (2, 0)) == 0.25
    assert integrate_cell(linear, (1, 0)) == pytest.approx(3 / 8, abs=1e-15)
    assert integrate_cell(cosine, (1, 0)) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("name", ["uniform", "linear", "cosine"])
def test_cell_integrals_sum_to_one(three_densities, name):
    f = three_densities[name]
    for k in range(13):
        assert f.cell_integrals(k).sum() == pytest.approx(1.0, abs=1e-12)


def test_cosine_cell_integrals_against_quad(cosine):
    for k, l in [(2, 1), (4, 7), (6, 40)]:
        a, b = (l / 2**k, (l + 1) / 2**k)
        ref = integrate.quad(lambda x: 1 + 0.2 * math.cos(2 * math.pi * x), a, b, epsabs=0, epsrel=1e-13)[0]
        assert integrate_cell(cosine, (k, l)) == pytest.approx(ref, rel=1e-12)


def test_cell_means_and_root_means(uniform, linear):
    assert cell_mean(uniform, (3, 2)) == 1.0
    assert sqrt_cell_mean(uniform, (3, 2)) == pytest.approx(1.0, abs=1e-15)
    assert cell_mean(linear, (0, 0)) == pytest.approx(1.0, abs=1e-15)
    assert sqrt_cell_mean(linear, (0, 0)) == pytest.approx(H00, rel=1e-12)
    gap = math.sqrt(cell_mean(linear, (0, 0))) - sqrt_cell_mean(linear, (0, 0))
    assert gap == pytest.approx(1.0 - H00, abs=1e-14)
    assert gap == pytest.approx(0.010963, abs=1e-5)
    assert 0 <= gap <= 0.5 / 12


@pytest.mark.parametrize("name", ["uniform", "linear", "cosine"])
def test_jensen_gap_nonnegative(three_densities, name):
    f = three_densities[name]
    for k in range(11):
        assert np.all(np.sqrt(f.cell_means(k)) - f.sqrt_cell_means(k) >= -1e-14)


def test_sqrt_cell_means_against_quad(cosine):
    for k, l in [(0, 0), (3, 5), (7, 100)]:
        a, b = (l / 2**k, (l + 1) / 2**k)
        ref = 2**k * integrate.quad(lambda x: math.sqrt(1 + 0.2 * math.cos(2 * math.pi * x)), a, b, epsabs=0, epsrel=1e-13)[0]
        assert sqrt_cell_mean(cosine, (k, l)) == pytest.approx(ref, rel=1e-10)


def test_split_probability_examples(uniform, linear):
    for k in range(1, 6):
        assert np.all(uniform.split_probabilities(k) == 0.5)
    assert split_probability(linear, (0, 0)) == pytest.approx(3 / 8, abs=1e-15)


def test_sample_points_examples(uniform, linear):
    assert sample_points(linear, 0, np.random.default_rng(0)).size == 0
    u = np.random.default_rng(7).random(50)
    assert np.array_equal(sample_points(uniform, 50, np.random.default_rng(7)), np.sort(u))
    assert linear.inverse_cdf(0.375) == pytest.approx(0.5, abs=1e-15)


def test_fourier_inverse_cdf_accuracy(cosine):
    u = np.linspace(1e-6, 1 - 1e-6, 513)
    assert np.max(np.abs(cosine.cdf(cosine.inverse_cdf(u)) - u)) <= 1e-12


@pytest.mark.parametrize("name", ["uniform", "linear", "cosine"])
def test_sample_kolmogorov_distance(three_densities, name):
    f = three_densities[name]
    x = f.sample(10**5, np.random.default_rng(2024))
    d = stats.kstest(x, f.cdf).statistic
    assert d <= 1.5 * 3 / math.sqrt(10**5)


def test_sampling_is_deterministic(linear):
    a = linear.sample(100, np.random.default_rng(3))
    b = linear.sample(100, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_class_norms_examples(uniform, linear, cosine):
    assert class_norms(uniform, 1.0, 1.0) == {"lipschitz": 0.0, "sobolev": 0.0}
    assert class_norms(linear, 1.0, 1.0)["lipschitz"] == pytest.approx(1.0)
    assert class_norms(cosine, 1.0, 1.0)["sobolev"] == pytest.approx(0.02, rel=1e-12)


def test_linear_sobolev_against_quad(linear):
    # c_n of 1/2 + x on [0, 1): integral of x e^{-2 pi i n x}
    for n in (1, 2, 5):
        re = integrate.quad(lambda x: (0.5 + x) * math.cos(2 * math.pi * n * x), 0, 1, epsabs=1e-13, limit=200)[0]
        im = integrate.quad(lambda x: -(0.5 + x) * math.sin(2 * math.pi * n * x), 0, 1, epsabs=1e-13, limit=200)[0]
        assert linear.fourier_coefficient(n) == pytest.approx(complex(re, im), abs=1e-12)


def test_fourier_certified_minimum(cosine):
    assert cosine.certified_minimum() <= 0.8 + 1e-12
    assert cosine.certified_minimum() >= 0.7


def test_bias_equals_direct_integral(cosine):
    for k in (0, 2, 5):
        means = cosine.cell_means(k)
        ref = sum(integrate.quad(lambda x: (1 + 0.2 * math.cos(2 * math.pi * x) - means[l]) ** 2,
                                 l / 2**k, (l + 1) / 2**k, epsabs=1e-16)[0] for l in range(2**k))
        assert cosine.bias_sq(k) == pytest.approx(ref, rel=1e-9)


def test_centered_sq_integrals_closed_form(linear):
    # for slope 1, int_I (f - f_I)^2 = w^3 / 12 on a cell of width w
    for k in range(8):
        assert np.allclose(linear.centered_sq_integrals(k), 2.0 ** (-3 * k) / 12, rtol=1e-12, atol=0)


def test_bump_density_values(bump):
    v = bump.values
    assert v.size == 16
    assert v[4] == pytest.approx(1 + 0.1 * 2**1.5) and v[5] == pytest.approx(1 - 0.1 * 2**1.5)
    assert make_density(bump.to_spec()).values.tolist() == v.tolist()


def test_point_containers():
    s = PointProcessSample([0.7, 0.1, 0.6])
    assert s.points.tolist() == [0.1, 0.6, 0.7] and s.count == 3
    assert PointProcessSample([]).count == 0
    with pytest.raises(ValueError):
        PointProcessSample([1.0])
    with pytest.raises(ValueError):
        FixedSample([])
    assert FixedSample([0.3, 0.1]).n == 2


@settings(max_examples=50, deadline=None)
@given(values=st.lists(st.floats(0.1, 5.0), min_size=1, max_size=16).filter(lambda v: len(v) & (len(v) - 1) == 0),
       k=st.integers(0, 8))
def test_piecewise_constant_cell_integrals_additive(values, k):
    vals = np.array(values) / np.mean(values)
    f = make_density({"family": "piecewise-constant", "params": {"values": vals.tolist()}, "eps0": float(vals.min()) * 0.99})
    fine = f.cell_integrals(k + 1)
    assert np.allclose(f.cell_integrals(k), fine[0::2] + fine[1::2], rtol=0, atol=1e-15)
    assert np.all(np.sqrt(f.cell_means(k)) - f.sqrt_cell_means(k) >= -1e-14)


@settings(max_examples=50, deadline=None)
@given(u=st.floats(1e-9, 1 - 1e-9), slope=st.floats(-1.8, 1.8))
def test_linear_inverse_cdf_roundtrip(u, slope):
    f = make_density({"family": "linear", "params": {"a": 1 - slope / 2, "b": slope}, "eps0": (1 - abs(slope) / 2) * 0.99})
    assert f.cdf(f.inverse_cdf(u)) == pytest.approx(u, abs=1e-13)
