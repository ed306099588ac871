"""Euler simulation of the stochastic-variance price process and inverse-cdf sampling."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from . import kernels, rng
from .dy_model import DyParams, TabulatedDensity
from .market_data import PriceSeries, ReturnSeries

CHUNK_DAYS = 4096


@dataclass(frozen=True)
class SimConfig:
    params: DyParams
    n_returns: int
    tau: int = 1
    substeps: int = 100
    v0: float | None = None
    seed: int = rng.DEFAULT_SEED
    burn_in_days: int = 250

    def __post_init__(self):
        if self.n_returns < 1 or self.tau < 1 or self.substeps < 1 or self.burn_in_days < 0:
            raise ValueError("n_returns, tau and substeps must be >= 1, burn_in_days >= 0")
        if self.v0 is not None and self.v0 < 0:
            raise ValueError("v0 must be >= 0")

    @property
    def initial_variance(self) -> float:
        return self.params.theta if self.v0 is None else self.v0


@dataclass(frozen=True)
class SimResult:
    returns: ReturnSeries
    daily_log_returns: np.ndarray
    variance: np.ndarray  # end-of-day variance, burn-in excluded
    config: SimConfig

    def prices(self, s0: float = 100.0, start: dt.date = dt.date(2000, 1, 3)) -> PriceSeries:
        closes = s0 * np.exp(np.concatenate([[0.0], np.cumsum(self.daily_log_returns)]))
        return PriceSeries.from_closes(closes, start)


def simulate_days(params: DyParams, n_days: int, *, substeps: int = 100, v0: float | None = None,
                  seed: int = rng.DEFAULT_SEED, trajectory: int = 0, burn_in_days: int = 250):
    """Daily log returns (drift ``mu`` included) and end-of-day variance.

    Two Philox streams ``(seed, 2*trajectory)`` and ``(seed, 2*trajectory + 1)``
    feed the price and variance noises; ``rho`` mixes them. Output for a
    fixed seed does not depend on the chunking.
    """
    g1 = rng.stream(seed, 2 * trajectory)
    g2 = rng.stream(seed, 2 * trajectory + 1)
    v = params.theta if v0 is None else float(v0)
    total = burn_in_days + n_days
    dx = np.empty(total)
    vd = np.empty(total)
    done = 0
    while done < total:
        m = min(CHUNK_DAYS, total - done)
        z1 = g1.standard_normal(m * substeps)
        z2 = g2.standard_normal(m * substeps)
        a, b, v = kernels.cir_euler_days(v, m, substeps, params.gamma, params.theta, params.k, params.rho, z1, z2)
        dx[done:done + m] = a
        vd[done:done + m] = b
        done += m
    return dx[burn_in_days:] + params.mu, vd[burn_in_days:]


def simulate_returns(config: SimConfig) -> SimResult:
    """Non-overlapping returns over windows of ``tau`` days."""
    n_days = config.n_returns * config.tau
    daily, var = simulate_days(config.params, n_days, substeps=config.substeps, v0=config.initial_variance,
                               seed=config.seed, burn_in_days=config.burn_in_days)
    r = daily.reshape(config.n_returns, config.tau).sum(axis=1)
    return SimResult(ReturnSeries(config.tau, r, offset=1), daily, var, config)


def sample_from_density(density: TabulatedDensity, n: int, seed: int = rng.DEFAULT_SEED, *,
                        stream_id: int = 0) -> np.ndarray:
    """Inverse-cdf samples from the piecewise-linear tabulated cdf.

    Uniforms are drawn in ``[cdf[0], cdf[-1])`` so the grid's small missing
    tail mass is redistributed proportionally.
    """
    c = density.cdf
    lo, hi = float(c[0]), float(c[-1])
    if hi - lo < 1.0 - 1e-3:
        raise ValueError(f"tabulated cdf only spans {hi - lo:.4f}; widen the grid")
    u = lo + (hi - lo) * rng.stream(seed, stream_id).random(n)
    return inverse_cdf(density, u)


def inverse_cdf(density: TabulatedDensity, u) -> np.ndarray:
    c, x = density.cdf, density.x_grid
    u = np.asarray(u, dtype=np.float64)
    # first index with cdf >= u; flat runs of the cdf are skipped
    j = np.clip(np.searchsorted(c, u, side="left"), 1, c.shape[0] - 1)
    c0, c1 = c[j - 1], c[j]
    span = c1 - c0
    frac = np.where(span > 0, (u - c0) / np.where(span > 0, span, 1.0), 0.0)
    return x[j - 1] + np.clip(frac, 0.0, 1.0) * (x[j] - x[j - 1])
