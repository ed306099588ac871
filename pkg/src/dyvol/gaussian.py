"""Normal baseline for log returns."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)) or self.sigma <= 0:
            raise ValueError(f"invalid Gaussian parameters mu={self.mu}, sigma={self.sigma}")

    def to_dict(self):
        return {"mu": self.mu, "sigma": self.sigma}


def fit_gaussian(values) -> GaussianParams:
    """Sample mean and unbiased (n-1) standard deviation."""
    x = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 values to fit a Gaussian")
    sigma = float(x.std(ddof=1))
    if sigma == 0:
        raise ValueError("constant series: sigma would be 0")
    return GaussianParams(float(x.mean()), sigma)


def gaussian_pdf(params: GaussianParams, x):
    z = (np.asarray(x, dtype=np.float64) - params.mu) / params.sigma
    return np.exp(-0.5 * z * z) / (params.sigma * SQRT2PI)


def standard_normal_cdf(z):
    # Cephes ndtr: erf/erfc from Cody-style rational approximations,
    # relative error ~1e-16 over the double range
    return special.ndtr(z)


def gaussian_cdf(params: GaussianParams, x):
    return standard_normal_cdf((np.asarray(x, dtype=np.float64) - params.mu) / params.sigma)


def outside_mass(z: float) -> float:
    """Two-sided normal mass beyond ``z`` standard deviations, ``2 * Phi(-z)``."""
    return float(special.erfc(z / math.sqrt(2.0)))


def gaussian_sample(params: GaussianParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return params.mu + params.sigma * rng.standard_normal(n)
