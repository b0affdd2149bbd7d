import math

import numpy as np
import pytest

import oracles
from bvm_ensembles.numerics import (
    Rng,
    finite_diff_grad,
    log_cdf_diff,
    std_normal_cdf,
    std_normal_logpdf,
    std_normal_pdf,
    std_normal_quantile,
)


def test_pdf_examples():
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert std_normal_pdf(1.0) == pytest.approx(0.24197072451914337, rel=1e-15)
    assert std_normal_pdf(-1.0) == std_normal_pdf(1.0)


def test_logpdf_matches_pdf():
    z = np.linspace(-30, 30, 61)
    np.testing.assert_allclose(np.exp(std_normal_logpdf(z)), std_normal_pdf(z), rtol=1e-12)


def test_cdf_examples():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(1.0) == pytest.approx(0.8413447460685429, rel=1e-15)
    low = std_normal_cdf(-8.0)
    assert low > 0
    assert low == pytest.approx(oracles.norm_cdf(-8.0), rel=1e-12)
    assert low == pytest.approx(6.22e-16, rel=1e-2)


def test_cdf_against_oracle_and_monotone():
    z = np.linspace(-37, 8, 451)
    got = std_normal_cdf(z)
    want = np.array([oracles.norm_cdf(v) for v in z])
    np.testing.assert_allclose(got, want, rtol=1e-12)
    assert np.all(np.diff(got) >= 0)


def test_pdf_is_derivative_of_cdf():
    z = np.linspace(-6, 6, 25)
    h = 1e-5
    fd = (std_normal_cdf(z + h) - std_normal_cdf(z - h)) / (2 * h)
    np.testing.assert_allclose(fd, std_normal_pdf(z), atol=1e-10)


def test_quantile_inverts_cdf():
    p = np.array([0.55, 0.75, 0.9, 0.975, 0.995])
    q = std_normal_quantile(p)
    np.testing.assert_allclose(std_normal_cdf(q), p, atol=1e-10)
    assert std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)


def test_log_cdf_diff_one_sigma():
    # high-precision reference; log(0.6826894921370859) = -0.38171514630212...
    assert log_cdf_diff(1.0, -1.0) == pytest.approx(oracles.log_cdf_diff(1, -1), rel=1e-14)
    assert log_cdf_diff(1.0, -1.0) == pytest.approx(math.log(0.6826894921370859), rel=1e-14)


def test_log_cdf_diff_total_mass():
    assert abs(log_cdf_diff(40.0, -40.0)) < 1e-300 or log_cdf_diff(40.0, -40.0) == 0.0


def test_log_cdf_diff_far_tail_narrow():
    got = log_cdf_diff(10.01, 9.99)
    assert np.isfinite(got)
    assert got == pytest.approx(oracles.log_cdf_diff(10.01, 9.99), rel=1e-12)
    assert got == pytest.approx(math.log(0.02 * oracles.norm_pdf(10.0)), rel=1e-3)


@pytest.mark.parametrize(
    "a,b",
    [
        (0.5, 0.49),
        (1e-6, -1e-6),
        (3.0, 2.999999),
        (-20.0, -20.5),
        (-35.0, -36.0),
        (30.0, 29.0),
        (8.0, -8.0),
        (-1.0, -9.0),
        (5.0, 4.0),
        (100.0, 99.99),
        (-100.0, -100.01),
    ],
)
def test_log_cdf_diff_against_oracle(a, b):
    assert log_cdf_diff(a, b) == pytest.approx(oracles.log_cdf_diff(a, b), rel=1e-11)


def test_log_cdf_diff_rejects_empty_interval():
    with pytest.raises(ValueError, match="invalid interval"):
        log_cdf_diff(1.0, 1.0)
    with pytest.raises(ValueError):
        log_cdf_diff(0.0, 1.0)


def test_log_cdf_diff_monotone_in_width():
    widths = np.geomspace(1e-8, 3, 60)
    vals = log_cdf_diff(2.0 + widths, np.full_like(widths, 2.0))
    assert np.all(np.diff(vals) > 0)


def test_finite_diff_examples():
    assert float(finite_diff_grad(lambda x: float(x**2), 3.0)) == pytest.approx(6.0, abs=1e-8)
    assert float(finite_diff_grad(lambda x: float(np.sin(x)), 0.0)) == pytest.approx(1.0, abs=1e-9)
    g = finite_diff_grad(lambda v: float(v[0] * v[1]), np.array([2.0, 5.0]))
    np.testing.assert_allclose(g, [5.0, 2.0], rtol=1e-9)


def test_rng_reproducible_and_children_independent():
    a = Rng(123).child(4).normal(size=5)
    b = Rng(123).child(4).normal(size=5)
    np.testing.assert_array_equal(a, b)
    c = Rng(123).child(5).normal(size=5)
    assert not np.array_equal(a, c)
    assert Rng(1).child(2).key != Rng(1).child(3).key


def test_rng_known_stream():
    # Philox streams are platform independent; pin the first draws
    first = Rng(0).uniform(size=3)
    again = Rng(0).uniform(size=3)
    np.testing.assert_array_equal(first, again)
    assert np.all((first >= 0) & (first < 1))
