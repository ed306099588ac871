"""Dragulescu-Yakovenko stochastic-volatility density of centred log returns.

The variance follows ``dv = -gamma (v - theta) dt + k sqrt(v) dW2`` and the
centred log return ``dx = -v/2 dt + sqrt(v) dW1``. The density of ``x`` at
lag ``t`` is the inverse Fourier transform of ``exp(F_t(p))``; ``F_t`` has a
closed form in ``Gamma = gamma + i rho k p`` and
``Omega = sqrt(Gamma**2 + k**2 (p**2 - i p))``. Rates are per trading day.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import kernels
from .market_data import Histogram
from .optimize import nelder_mead

log = logging.getLogger(__name__)

DEFAULT_FIT_LAGS = (1, 5, 20, 40, 250)
GL_ORDER = 16
TAIL_EPS = 1e-12
PMAX_GROWTH_CAP = 2 ** 24
PANEL_CAP = 1 << 16
DENSITY_FLOOR = 1e-300
RHO_BOUND = 0.99


class QuadratureError(RuntimeError):
    """The Fourier inversion could not be brought within tolerance."""


class NormalizationError(RuntimeError):
    """Tabulated density mass outside ``1 +/- 1e-4``."""


class Feller(UserWarning):
    pass


@dataclass(frozen=True)
class DyParams:
    gamma: float
    theta: float
    k: float
    mu: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "theta", "k"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not abs(self.rho) <= 1:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.feller_ratio < 1.0 - 1e-12:
            warnings.warn(f"Feller ratio 2*gamma*theta/k^2 = {self.feller_ratio:.3g} < 1: "
                          "the variance process can touch zero", Feller, stacklevel=3)

    @property
    def feller_ratio(self) -> float:
        return 2.0 * self.gamma * self.theta / (self.k * self.k)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TabulatedDensity:
    tau: float
    x_grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=np.float64)
        d = np.asarray(self.density, dtype=np.float64)
        c = np.asarray(self.cdf, dtype=np.float64)
        if x.ndim != 1 or x.shape != d.shape or x.shape != c.shape or x.shape[0] < 2:
            raise ValueError("x_grid, density and cdf must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x_grid must be strictly ascending")
        for a in (x, d, c):
            a.setflags(write=False)
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "cdf", c)

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.x_grid))

    @classmethod
    def from_density(cls, tau, x_grid, density, meta=None) -> TabulatedDensity:
        """Build the cdf by integrating a cubic spline through the density."""
        x = np.asarray(x_grid, dtype=np.float64)
        d = np.clip(np.asarray(density, dtype=np.float64), 0.0, None)
        if x.shape[0] >= 4:
            cdf = CubicSpline(x, d).antiderivative()(x)
            cdf -= cdf[0]
        else:
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(x))])
        cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
        return cls(tau, x, d, cdf, dict(meta or {}))

    def cdf_at(self, x):
        return dy_cdf(self, x)

    def to_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "density", "cdf"])
        for row in zip(self.x_grid, self.density, self.cdf):
            w.writerow([repr(float(v)) for v in row])


# -- characteristic exponent -------------------------------------------------------

def _path_nodes(pmax: float, params: DyParams, t: float) -> np.ndarray:
    # continuation grid from 0 to pmax; spacing resolves phase changes of the logs
    scale = max(params.k, params.gamma * math.sqrt(params.theta), 1e-300) * t
    n = int(min(1 << 20, max(256, math.ceil(pmax * scale * 8))))
    return np.linspace(0.0, pmax, n + 1)


def char_exponent(params: DyParams, t: float, p):
    """``F_t(p)`` at real frequencies ``p`` (scalar or array).

    Each requested frequency is reached by walking from 0 along a fine grid so
    the complex logarithms stay on the continuous branch.
    """
    if t <= 0:
        raise ValueError("lag t must be > 0")
    p_arr = np.atleast_1d(np.asarray(p, dtype=np.float64))
    out = np.empty(p_arr.shape, dtype=np.complex128)
    for sign in (1.0, -1.0):
        sel = (p_arr >= 0) if sign > 0 else (p_arr < 0)
        if not sel.any():
            continue
        mags = np.abs(p_arr[sel])
        path = np.union1d(_path_nodes(float(mags.max()), params, t), mags)
        f = kernels.char_exponent_array(sign * path, t, params.gamma, params.theta, params.k, params.rho)
        out[sel] = f[np.searchsorted(path, mags)]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite characteristic exponent for {params}, t={t}")
    return out[0] if np.ndim(p) == 0 else out.reshape(np.shape(p))


# -- Fourier inversion ----------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def _panel_nodes(pmax: float, n_panels: int):
    u, w = _gauss_legendre(GL_ORDER)
    h = pmax / n_panels
    left = h * np.arange(n_panels)
    nodes = (left[:, None] + 0.5 * h * (u + 1.0)[None, :]).ravel()
    weights = np.tile(0.5 * h * w, n_panels)
    return nodes, weights


def _log_envelope(params: DyParams, t: float, p: np.ndarray) -> np.ndarray:
    # Re F is branch independent; principal logs are enough
    return kernels.char_exponent_array(p, t, params.gamma, params.theta, params.k, params.rho).real


def truncation_bound(params: DyParams, t: float) -> float:
    """Frequency beyond which ``|exp(F_t(p))| < 1e-12``.

    Doubles from ``50 / sqrt(theta t)`` until the envelope is below the
    threshold, then tightens to the last grid point where it still exceeds it.
    """
    log_eps = math.log(TAIL_EPS)
    p0 = 50.0 / math.sqrt(params.theta * t)
    pmax = p0
    while True:
        grid = np.linspace(0.0, pmax, 2049)[1:]
        env = _log_envelope(params, t, grid)
        if env[-1] < log_eps and env[-64:].max() < log_eps:
            break
        pmax *= 2.0
        if pmax > p0 * PMAX_GROWTH_CAP:
            raise QuadratureError(
                f"no truncation bound below {pmax:.3g} for gamma={params.gamma}, theta={params.theta}, "
                f"k={params.k}, rho={params.rho}, t={t}")
    above = np.nonzero(env >= log_eps)[0]
    if above.size == 0:
        return float(grid[0])
    return float(grid[min(above[-1] + 1, grid.shape[0] - 1)])


def _uniform_step(x: np.ndarray) -> float | None:
    """Spacing of ``x`` if it is a uniform ascending grid (to rounding), else None."""
    if x.shape[0] < 3:
        return None
    dx = (x[-1] - x[0]) / (x.shape[0] - 1)
    if not dx > 0:
        return None
    dev = np.max(np.abs(x - (x[0] + dx * np.arange(x.shape[0]))))
    return float(dx) if dev <= 1e-12 * max(abs(x[0]), abs(x[-1]), dx) else None


def _fourier(x, nodes, weights, a, b, dx):
    if dx is None:
        return kernels.fourier_invert(x, nodes, weights, a, b)
    return kernels.fourier_invert_uniform(float(x[0]), dx, x.shape[0], nodes, weights, a, b)


def _invert(params, t, x, pmax, n_panels, imag=False):
    nodes, weights = _panel_nodes(pmax, n_panels)
    dx = _uniform_step(x)
    xn = -x
    dxn = None if dx is None else -dx
    g, th, k, rho = params.gamma, params.theta, params.k, params.rho
    phi = np.exp(kernels.char_exponent_array(nodes, t, g, th, k, rho))
    if rho == 0.0:
        bound = float(weights @ np.abs(phi)) / math.pi
        return _fourier(x, nodes, weights, phi.real, phi.imag, dx) / math.pi, 0.0, bound
    phi_neg = np.exp(kernels.char_exponent_array(-nodes, t, g, th, k, rho))
    bound = float(weights @ (np.abs(phi) + np.abs(phi_neg))) / (2 * math.pi)
    re = (_fourier(x, nodes, weights, phi.real, phi.imag, dx)
          + _fourier(xn, nodes, weights, phi_neg.real, phi_neg.imag, dxn)) / (2 * math.pi)
    if not imag:
        return re, 0.0, bound
    # imaginary part of the two-sided integral; zero in exact arithmetic
    im = (_fourier(x, nodes, weights, phi.imag, -phi.real, dx)
          + _fourier(xn, nodes, weights, phi_neg.imag, -phi_neg.real, dxn)) / (2 * math.pi)
    return re, float(np.max(np.abs(im))), bound


def density_values(params: DyParams, t: float, x, *, rtol: float = 1e-6, n_panels: int | None = None,
                   info: dict | None = None) -> np.ndarray:
    """Raw ``P_t(x)`` at arbitrary centred returns ``x`` (no clamping, no cdf).

    Composite ``GL_ORDER``-point Gauss-Legendre panels on ``[0, Pmax]``; the
    panel count doubles until the sup-norm change is below ``rtol`` times the
    density scale, ``max(peak value, (1/pi) * integral |exp F|)``. The
    second term bounds the density everywhere, so requests that only touch
    the far tails are judged on an absolute scale instead of on their own
    (tiny) values.
    """
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.float64)))
    pmax = truncation_bound(params, t)
    xspan = float(np.max(np.abs(x))) if x.size else 0.0
    if n_panels is None:
        n_panels = max(8, math.ceil(xspan * pmax / (2 * math.pi) / 2))
    prev, _, _ = _invert(params, t, x, pmax, n_panels)
    while True:
        n_panels *= 2
        cur, _, bound = _invert(params, t, x, pmax, n_panels)
        peak = max(float(np.max(np.abs(cur))), bound, 1e-300)
        if float(np.max(np.abs(cur - prev))) <= rtol * peak:
            break
        if n_panels >= PANEL_CAP:
            raise QuadratureError(f"panel refinement did not converge for {params}, t={t}")
        prev = cur
    if info is not None:
        im = _invert(params, t, x, pmax, n_panels, imag=True)[1] if params.rho != 0.0 else 0.0
        info.update(pmax=pmax, n_panels=n_panels, n_nodes=n_panels * GL_ORDER, max_imag=im)
    return cur


def default_grid(params: DyParams, t: float, n_points: int = 801, width: float = 10.0) -> np.ndarray:
    """``n_points`` uniform points over mean +/- ``width`` std of the model."""
    m = -0.5 * params.theta * t
    s = math.sqrt(params.theta * t)
    return np.linspace(m - width * s, m + width * s, n_points)


def dy_pdf(params: DyParams, t: float, x_grid=None, *, rtol: float = 1e-6, mass_tol: float = 1e-4,
           max_widen: int = 6) -> TabulatedDensity:
    """Tabulate the model density on ``x_grid`` (or an automatic grid).

    The automatic grid starts at +/- 10 model standard deviations with 801
    points and widens, keeping the spacing, while the tabulated mass is short
    of one by more than a tenth of ``mass_tol``.
    """
    info: dict = {}
    if x_grid is None:
        width, n_points = 10.0, 801
        for _ in range(max_widen + 1):
            x = default_grid(params, t, n_points, width)
            dens = density_values(params, t, x, rtol=rtol, info=info)
            if abs(np.trapezoid(dens, x) - 1.0) < 0.1 * mass_tol:
                break
            width *= 1.5
            n_points = 2 * ((n_points - 1) * 3 // 4) + 1
    else:
        x = np.asarray(x_grid, dtype=np.float64)
        dens = density_values(params, t, x, rtol=rtol, info=info)
    peak = float(dens.max())
    if dens.min() < -1e-8 * max(1.0, peak):
        log.warning("quadrature noise: min density %.3g (peak %.3g)", dens.min(), peak)
    info["min_raw_density"] = float(dens.min())
    out = TabulatedDensity.from_density(t, x, dens, meta={"params": params.to_dict(), **info})
    if abs(out.mass - 1.0) > mass_tol:
        raise NormalizationError(f"tabulated mass {out.mass:.6f} outside 1 +/- {mass_tol} "
                                 f"for {params}, t={t}; widen the grid")
    return out


def dy_cdf(density: TabulatedDensity, x):
    """Monotone (PCHIP) interpolation of the tabulated cdf, clamped to 0/1 off-grid."""
    x = np.asarray(x, dtype=np.float64)
    interp = _pchip(density)
    out = np.where(x <= density.x_grid[0], 0.0,
                   np.where(x >= density.x_grid[-1], 1.0, interp(np.clip(x, density.x_grid[0], density.x_grid[-1]))))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _pchip(density: TabulatedDensity):
    cached = density.meta.get("_pchip") if isinstance(density.meta, dict) else None
    if cached is None:
        cached = PchipInterpolator(density.x_grid, density.cdf, extrapolate=False)
        if isinstance(density.meta, dict):
            density.meta["_pchip"] = cached
    return cached


def shifted(density: TabulatedDensity, shift: float) -> TabulatedDensity:
    """Same table translated by ``shift`` (e.g. centred ``x`` to raw returns ``x + mu t``)."""
    meta = {k: v for k, v in density.meta.items() if not k.startswith("_")}
    return TabulatedDensity(density.tau, density.x_grid + shift, density.density, density.cdf, meta)


def return_density(params: DyParams, t: float, x_grid=None, **kw) -> TabulatedDensity:
    """Density of raw log returns ``r = mu t + x``."""
    return shifted(dy_pdf(params, t, x_grid, **kw), params.mu * t)


# -- fitting ----------------------------------------------------------------------

def _model_at_bins(params: DyParams, hist: Histogram, rtol: float, hints: dict | None):
    x = hist.bin_centers + hist.center_shift - params.mu * hist.tau
    info: dict = {}
    n0 = None
    if hints is not None and hist.tau in hints:
        n0 = max(8, hints[hist.tau] // 4)
    vals = density_values(params, hist.tau, x, rtol=rtol, n_panels=n0, info=info)
    if hints is not None:
        hints[hist.tau] = info["n_panels"]
    return vals


def log_deviation_error(params: DyParams, histograms: Iterable[Histogram], *, squared: bool = False,
                        rtol: float = 1e-6, _hints: dict | None = None) -> float:
    """Sum over lags and kept bins of ``|log P*_t(x) - log P_t(x)|`` (natural log).

    Model densities below 1e-300 are floored there, which turns an underflow
    into a large but finite penalty. ``squared=True`` sums squared differences.
    """
    total = 0.0
    for h in histograms:
        model = _model_at_bins(params, h, rtol, _hints)
        diff = np.log(h.densities) - np.log(np.maximum(model, DENSITY_FLOOR))
        total += float(np.sum(diff * diff) if squared else np.sum(np.abs(diff)))
    return total


@dataclass
class FitReport:
    params: DyParams
    E: float
    n_iter: int
    n_eval: int
    converged: bool
    lags: list[int]
    starts: list[dict]
    history: list[float]
    squared: bool = False
    init: str = "auto"

    def to_dict(self) -> dict:
        p = self.params
        return {
            "gamma": p.gamma, "theta": p.theta, "k": p.k, "mu": p.mu, "rho": p.rho,
            "lags": list(self.lags), "E": self.E, "converged": self.converged,
            "feller_ratio": p.feller_ratio, "n_iter": self.n_iter, "n_eval": self.n_eval,
            "error_form": "squared" if self.squared else "absolute", "init": self.init,
            "starts": self.starts,
        }

    def to_json(self, fh: IO[str]) -> None:
        json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _hist_moments(h: Histogram) -> tuple[float, float]:
    c = h.bin_centers
    w = h.densities * h.width
    m = float(np.sum(w * c) / np.sum(w))
    var = float(np.sum(w * (c - m) ** 2) / np.sum(w))
    return h.center_shift + m, var


def auto_init(histograms: Sequence[Histogram]) -> DyParams:
    """Starting point from the shortest-lag histogram.

    ``theta`` = binned variance / tau, ``gamma`` = 0.1 per day, ``k`` set for
    a Feller ratio of 2, ``mu`` = binned mean / tau + theta / 2.
    """
    h = min(histograms, key=lambda hh: hh.tau)
    mean, var = _hist_moments(h)
    theta = var / h.tau
    gamma = 0.1
    k = math.sqrt(gamma * theta)
    return DyParams(gamma, theta, k, mean / h.tau + 0.5 * theta, 0.0)


#: multipliers on gamma and Feller ratios for the 8 lattice starts
START_GAMMAS = (0.02, 0.2, 2.0, 20.0)
START_FELLER = (1.0, 4.0)


def start_lattice(init: DyParams) -> list[DyParams]:
    out = []
    for g in START_GAMMAS:
        for fr in START_FELLER:
            out.append(DyParams(g, init.theta, math.sqrt(2.0 * g * init.theta / fr), init.mu, init.rho))
    return out


def fit_dy(histograms: Sequence[Histogram], init: DyParams | str | None = "auto", *, free_rho: bool = False,
           multistart: bool = True, squared: bool = False, rel_tol: float = 1e-8, max_iter: int = 2000,
           rtol: float = 1e-6) -> tuple[DyParams, FitReport]:
    """Minimise the log-deviation error over ``(log gamma, log theta, log k, mu[, rho])``.

    Runs Nelder-Mead from the auto (or given) start and, with ``multistart``,
    from the 8 lattice points; returns the best.
    """
    histograms = list(histograms)
    if not histograms:
        raise ValueError("need at least one histogram")
    auto = auto_init(histograms)
    first = auto if init in (None, "auto") else init
    starts = [first] + (start_lattice(auto) if multistart else [])
    scale_mu = math.sqrt(auto.theta)

    def unpack(z):
        rho = RHO_BOUND * math.tanh(z[4]) if free_rho else 0.0
        return DyParams(math.exp(z[0]), math.exp(z[1]), math.exp(z[2]), float(z[3]) * scale_mu, rho)

    hints: dict = {}

    def objective(z):
        if np.any(np.abs(z[:3]) > 700):
            return np.inf
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", Feller)
            try:
                p = unpack(z)
                return log_deviation_error(p, histograms, squared=squared, rtol=rtol, _hints=hints)
            except (QuadratureError, FloatingPointError, ValueError):
                return np.inf

    best = None
    records = []
    total_iter = total_eval = 0
    for i, s in enumerate(starts):
        z0 = [math.log(s.gamma), math.log(s.theta), math.log(s.k), s.mu / scale_mu]
        steps = [0.5, 0.2, 0.5, 0.2]
        if free_rho:
            z0.append(math.atanh(max(-RHO_BOUND, min(RHO_BOUND, s.rho)) / RHO_BOUND))
            steps.append(0.3)
        res = nelder_mead(objective, np.array(z0), steps, rel_tol=rel_tol, max_iter=max_iter)
        total_iter += res.n_iter
        total_eval += res.n_eval
        rec = {"start": i, "label": "init" if i == 0 else f"lattice{i}", "E": res.fun,
               "converged": res.converged, "n_iter": res.n_iter}
        records.append(rec)
        log.info("fit start %d: E=%.6g converged=%s iters=%d", i, res.fun, res.converged, res.n_iter)
        if np.isfinite(res.fun) and (best is None or res.fun < best[0].fun):
            best = (res, unpack(res.x))
    if best is None:
        raise RuntimeError("no finite error value at any start point")
    res, params = best
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", Feller)
        params = DyParams(params.gamma, params.theta, params.k, params.mu, params.rho)
    report = FitReport(params=params, E=res.fun, n_iter=total_iter, n_eval=total_eval, converged=res.converged,
                       lags=sorted(h.tau for h in histograms), starts=records, history=res.history,
                       squared=squared, init="auto" if init in (None, "auto") else "given")
    return params, report


def params_from_dict(d: Mapping) -> DyParams:
    return DyParams(float(d["gamma"]), float(d["theta"]), float(d["k"]), float(d.get("mu", 0.0)),
                    float(d.get("rho", 0.0)))
