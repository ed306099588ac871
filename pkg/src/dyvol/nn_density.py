"""1-5-1 tansig/purelin network fitted to an empirical log-density.

Used as a flexible benchmark density next to the Gaussian and the
stochastic-volatility model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import rng
from .dy_model import TabulatedDensity
from .market_data import Histogram

N_HIDDEN = 5
N_PARAMS = 3 * N_HIDDEN + 1
#: reduced parameter count used for the network under --replication-df
LEGACY_NN_PARAMS = 11


def tansig(n):
    """``2 / (1 + exp(-2n)) - 1``, which is tanh."""
    return np.tanh(n)


@dataclass(frozen=True, eq=False)
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    log_norm: float | None = None
    rmse: float | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("w1", "b1", "w2"):
            a = np.asarray(getattr(self, name), dtype=np.float64).reshape(N_HIDDEN)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not math.isfinite(self.b2):
            raise ValueError("b2 must be finite")

    @classmethod
    def from_vector(cls, theta, **kw) -> MlpParams:
        theta = np.asarray(theta, dtype=np.float64)
        h = N_HIDDEN
        return cls(theta[:h], theta[h:2 * h], theta[2 * h:3 * h], float(theta[3 * h]), **kw)

    def __eq__(self, other):
        if not isinstance(other, MlpParams):
            return NotImplemented
        return bool(np.array_equal(self.vector(), other.vector())) and self.log_norm == other.log_norm

    def vector(self) -> np.ndarray:
        return np.concatenate([self.w1, self.b1, self.w2, [self.b2]])

    def to_dict(self) -> dict:
        return {"w1": self.w1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(), "b2": self.b2,
                "log_norm": self.log_norm, "rmse": self.rmse}

    def to_json(self, fh: IO[str]) -> None:
        json.dump(self.to_dict(), fh, indent=2)
        fh.write("\n")

    @classmethod
    def from_dict(cls, d) -> MlpParams:
        return cls(np.array(d["w1"]), np.array(d["b1"]), np.array(d["w2"]), float(d["b2"]),
                   d.get("log_norm"), d.get("rmse"))


def mlp_eval(params: MlpParams, x):
    """``b2 + sum_i w2_i * tansig(w1_i * x + b1_i)``."""
    x = np.asarray(x, dtype=np.float64)
    h = tansig(np.multiply.outer(x, params.w1) + params.b1)
    return h @ params.w2 + params.b2


def _forward(theta, u):
    h = N_HIDDEN
    w1, b1, w2, b2 = theta[:h], theta[h:2 * h], theta[2 * h:3 * h], theta[3 * h]
    a = np.tanh(u[:, None] * w1 + b1)
    return a @ w2 + b2, a


def _jacobian(theta, u, a):
    h = N_HIDDEN
    w2 = theta[2 * h:3 * h]
    d = (1.0 - a * a) * w2
    return np.hstack([d * u[:, None], d, a, np.ones((u.shape[0], 1))])


@dataclass
class LmTrace:
    losses: list = field(default_factory=list)  # sum of squares after each accepted step
    converged: bool = False


def levenberg_marquardt(theta, u, target, *, max_iter: int = 1000, lam: float = 1e-2,
                        tol: float = 1e-15, trace: LmTrace | None = None):
    """Damped Gauss-Newton on ``sum (net(u) - target)**2``; damping x2 on rejection, /3 on acceptance."""
    theta = np.array(theta, dtype=np.float64)
    y, a = _forward(theta, u)
    r = y - target
    loss = float(r @ r)
    trace = trace if trace is not None else LmTrace()
    trace.losses.append(loss)
    eye = np.eye(theta.shape[0])
    for _ in range(max_iter):
        J = _jacobian(theta, u, a)
        g = J.T @ r
        H = J.T @ J
        if np.max(np.abs(g)) < tol:
            trace.converged = True
            break
        accepted = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(H + lam * eye, -g)
            except np.linalg.LinAlgError:
                lam *= 2.0
                continue
            cand = theta + step
            y_c, a_c = _forward(cand, u)
            r_c = y_c - target
            loss_c = float(r_c @ r_c)
            if np.isfinite(loss_c) and loss_c < loss:
                rel = (loss - loss_c) / max(loss, 1e-300)
                theta, y, a, r, loss = cand, y_c, a_c, r_c, loss_c
                lam = max(lam / 3.0, 1e-15)
                accepted = True
                trace.losses.append(loss)
                break
            lam *= 2.0
        if not accepted:
            trace.converged = True
            break
        if rel < tol or loss < tol:
            trace.converged = True
            break
    return theta, loss, trace


def _initial(g: np.random.Generator):
    h = N_HIDDEN
    w1 = g.uniform(-2.0, 2.0, h)
    b1 = g.uniform(-2.0, 2.0, h)
    w2 = g.normal(0.0, 0.5, h)
    return np.concatenate([w1, b1, w2, [0.0]])


def fit_mlp(x, target, *, seed: int = rng.DEFAULT_SEED, restarts: int = 5, max_iter: int = 1000) -> MlpParams:
    """Fit the network to ``(x, target)`` pairs; best of ``restarts`` seeded starts.

    Inputs and targets are standardised for training and the scaling is
    folded back into the returned weights.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    xm, xs = float(x.mean()), float(x.std()) or 1.0
    tm, ts = float(t.mean()), float(t.std()) or 1.0
    u = (x - xm) / xs
    tt = (t - tm) / ts
    best = None
    for i in range(restarts):
        theta0 = _initial(rng.stream(seed, i))
        with np.errstate(over="ignore", invalid="ignore"):
            theta, loss, _ = levenberg_marquardt(theta0, u, tt, max_iter=max_iter)
        if not np.isfinite(loss):
            continue
        if best is None or loss < best[1]:
            best = (theta, loss)
    if best is None:
        raise FloatingPointError("every training restart diverged")
    theta, loss = best
    h = N_HIDDEN
    w1s, b1s, w2s, b2s = theta[:h], theta[h:2 * h], theta[2 * h:3 * h], theta[3 * h]
    w1 = w1s / xs
    b1 = b1s - w1s * xm / xs
    w2 = w2s * ts
    b2 = b2s * ts + tm
    rmse = math.sqrt(loss / x.shape[0]) * ts
    return MlpParams(w1, b1, w2, float(b2), rmse=rmse)


def train_mlp(hist: Histogram, *, seed: int = rng.DEFAULT_SEED, restarts: int = 5,
              max_iter: int = 1000) -> MlpParams:
    """Fit the log-density of a histogram at its (centred) bin centres."""
    if hist.counts.shape[0] < 20:
        raise ValueError("need at least 20 retained bins to train the network")
    return fit_mlp(hist.bin_centers, np.log(hist.densities), seed=seed, restarts=restarts, max_iter=max_iter)


def training_span(hist: Histogram, n_points: int = 2001) -> np.ndarray:
    """Grid over the kept bins (first left edge to last right edge).

    The network is unconstrained outside the bins it was trained on and a
    tansig sum can grow there, so densities are tabulated on this span only.
    """
    c = hist.bin_centers
    return np.linspace(c[0] - 0.5 * hist.width, c[-1] + 0.5 * hist.width, n_points)


def mlp_density(params: MlpParams, x_grid, tau: float = 1) -> TabulatedDensity:
    """``exp(net(x))`` renormalised to unit trapezoid mass on ``x_grid``."""
    x = np.asarray(x_grid, dtype=np.float64)
    raw = mlp_eval(params, x)
    top = float(np.max(raw))
    dens = np.exp(raw - top)
    mass = float(np.trapezoid(dens, x))
    if not mass > 0 or not math.isfinite(mass):
        raise FloatingPointError("network density has no mass on the grid")
    dens /= mass
    # trapezoid cdf so that cdf[-1] matches the normalisation exactly
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    return TabulatedDensity(tau, x, dens, np.clip(cdf, 0.0, 1.0), {"log_norm": top - math.log(mass)})
