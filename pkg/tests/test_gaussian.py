import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from dyvol.gaussian import (GaussianParams, fit_gaussian, gaussian_cdf, gaussian_pdf, gaussian_sample, outside_mass,
                            standard_normal_cdf)
from dyvol import rng


def test_fit_examples():
    g = fit_gaussian([-1.0, 1.0])
    assert g.mu == 0 and g.sigma == pytest.approx(math.sqrt(2), rel=1e-15)
    h = fit_gaussian(np.array([-1.0, 1.0]) + 3.0)
    assert h.mu == 3.0 and h.sigma == pytest.approx(g.sigma, rel=1e-15)
    x = gaussian_sample(GaussianParams(0.5, 2.0), 100_000, rng.stream(3))
    f = fit_gaussian(x)
    assert abs(f.mu - 0.5) < 3 * 2 / math.sqrt(1e5)
    assert abs(f.sigma - 2.0) < 3 * 2 / math.sqrt(2e5)
    with pytest.raises(ValueError):
        fit_gaussian([1.0, 1.0])
    with pytest.raises(ValueError):
        GaussianParams(0, 0)


def test_pdf_cdf_values():
    n = GaussianParams(0, 1)
    assert gaussian_pdf(n, 0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert gaussian_cdf(n, 0) == 0.5
    assert gaussian_cdf(n, -2) == pytest.approx(0.02275, abs=5e-6)


@pytest.mark.parametrize("z", [-37.0, -8.5, -3.0, -0.3, 0.0, 1.7, 6.0])
def test_cdf_against_mpmath(z):
    ref = float(mpmath.ncdf(z))
    assert standard_normal_cdf(z) == pytest.approx(ref, rel=1e-13, abs=1e-300)


def test_cdf_matches_pdf_integral_and_standardisation():
    p = GaussianParams(0.3, 1.7)
    x1, x2 = -1.0, 2.5
    val, _ = integrate.quad(lambda t: gaussian_pdf(p, t), x1, x2, epsabs=1e-13)
    assert gaussian_cdf(p, x2) - gaussian_cdf(p, x1) == pytest.approx(val, abs=1e-9)
    x = np.linspace(-5, 5, 11)
    np.testing.assert_array_equal(gaussian_cdf(p, x), standard_normal_cdf((x - p.mu) / p.sigma))


@pytest.mark.parametrize("z,mass", [(2, 0.0455), (3, 0.0027), (4, 6.334e-5)])
def test_outside_mass(z, mass):
    n = GaussianParams(0, 1)
    assert 1 - (gaussian_cdf(n, z) - gaussian_cdf(n, -z)) == pytest.approx(mass, abs=1e-6)
    assert outside_mass(z) == pytest.approx(float(mpmath.erfc(z / mpmath.sqrt(2))), rel=1e-13)
